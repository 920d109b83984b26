//! Monte Carlo studies: variance-bound ratio, power under the linear
//! interference model, and type I error under no interference.
//!
//! Replication `r` draws everything from substream `r` of the master
//! seed's replication stream, so a report is a pure function of its
//! config regardless of thread count.

mod studies;

pub use studies::{run_power_study, run_ratio_study, run_study, run_type1_study};

use serde::{Deserialize, Serialize};

use crate::assign::CrMechanism;
use crate::error::{Error, Result};
use crate::estimate::DecisionRule;
use crate::graph::SbmSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub mechanism: CrMechanism,
    #[serde(flatten)]
    pub study: Study,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_noise_sd() -> f64 {
    1.0
}

fn default_effect() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "snake_case")]
pub enum Study {
    Ratio(RatioConfig),
    Power(PowerConfig),
    Type1(Type1Config),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSetting {
    pub num_clusters: usize,
    pub cluster_size: usize,
}

/// Control outcomes are N(0, 1); treated outcomes add `effect` plus
/// N(0, `heterogeneity`^2).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioConfig {
    pub settings: Vec<ClusterSetting>,
    #[serde(default = "default_effect")]
    pub effect: f64,
    #[serde(default)]
    pub heterogeneity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TableKind {
    /// Every outcome equal.
    ConstantOutcome,
    ConstantEffect { effect: f64 },
    Heterogeneous { effect: f64, sd: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Type1Config {
    pub settings: Vec<ClusterSetting>,
    pub table: TableKind,
}

/// A block-model graph given either by its probabilities or by a target
/// within-cluster neighbour share and mean degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSetting {
    pub num_blocks: usize,
    pub block_size: usize,
    #[serde(default)]
    pub p_intra: Option<f64>,
    #[serde(default)]
    pub p_inter: Option<f64>,
    #[serde(default)]
    pub target_rho: Option<f64>,
    #[serde(default)]
    pub mean_degree: Option<f64>,
}

impl GraphSetting {
    pub fn sbm(&self, seed: u64) -> Result<SbmSpec> {
        let (p_intra, p_inter) = match (self.p_intra, self.p_inter, self.target_rho, self.mean_degree) {
            (Some(a), Some(b), None, None) => (a, b),
            (None, None, Some(rho), Some(deg)) => SbmSpec::probabilities_for_target(self.num_blocks, self.block_size, rho, deg)?,
            _ => {
                return Err(Error::validation(
                    "graph setting needs either p_intra and p_inter or target_rho and mean_degree",
                ))
            }
        };
        Ok(SbmSpec { num_blocks: self.num_blocks, block_size: self.block_size, p_intra, p_inter, seed })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClusteringSource {
    /// The generating blocks.
    #[default]
    Blocks,
    /// Restreaming greedy with one cluster per block, rebalanced to equal
    /// sizes.
    Ldg { leniency: f64, iterations: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub graphs: Vec<GraphSetting>,
    pub gammas: Vec<f64>,
    #[serde(default = "default_effect")]
    pub beta: f64,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default)]
    pub clustering: ClusteringSource,
    #[serde(default)]
    pub rule: DecisionRule,
    /// Draw a fresh graph for every replication instead of one per setting.
    #[serde(default)]
    pub regenerate_graph: bool,
    /// Also evaluate the closed-form variance approximation.
    #[serde(default)]
    pub variance_approx: bool,
}

/// One grid point of a study.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub setting: usize,
    pub num_clusters: usize,
    pub cluster_size: usize,
    pub gamma: Option<f64>,
    pub rho_c: Option<f64>,
    pub replications: usize,
    pub reject_rate: Option<f64>,
    pub reject_se: Option<f64>,
    pub reject_rate_chebyshev: Option<f64>,
    pub reject_rate_gaussian: Option<f64>,
    pub mean_delta: f64,
    pub delta_se: f64,
    pub var_delta: f64,
    /// Exact `E(delta)` where available.
    pub expected_delta: Option<f64>,
    pub mean_sigma_hat_sq: f64,
    pub reference_variance: Option<f64>,
    pub ratio_mean: Option<f64>,
    /// Exact `E(variance bound) / var(delta)`.
    pub expected_ratio: Option<f64>,
    pub ratio_se: Option<f64>,
    pub ratio_q10: Option<f64>,
    pub ratio_q90: Option<f64>,
    /// Share of replications with ratio in (0.95, 1.05).
    pub ratio_in_band: Option<f64>,
    pub variance_approx: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub study: String,
    pub seed: u64,
    pub replications: usize,
    pub alpha: f64,
    pub rows: Vec<SimRow>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::validation("at least one replication is required"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::validation(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        match &self.study {
            Study::Ratio(c) if c.settings.is_empty() => Err(Error::validation("ratio study has no settings")),
            Study::Type1(c) if c.settings.is_empty() => Err(Error::validation("type I study has no settings")),
            Study::Power(c) if c.graphs.is_empty() || c.gammas.is_empty() => {
                Err(Error::validation("power study needs graphs and a gamma grid"))
            }
            Study::Power(c) if c.gammas.iter().any(|g| !g.is_finite()) => Err(Error::validation("gamma grid must be finite")),
            _ => Ok(()),
        }
    }
}

/// A failed property check of a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub setting: usize,
    pub message: String,
}

/// Power studies: rejection rate at `gamma = 0` at most `alpha + 3 SE`
/// and non-decreasing in gamma up to `2 SE` of the pair. Type I studies:
/// Chebyshev rate at most `alpha + 3 SE`.
pub fn check_report(report: &SimReport) -> Vec<Violation> {
    let mut out = Vec::new();
    let alpha = report.alpha;
    let limit = |rows: &SimRow| {
        let se = crate::stats::rate_standard_error(alpha, rows.replications);
        alpha + 3.0 * se
    };
    match report.study.as_str() {
        "power" => {
            let mut settings: Vec<usize> = report.rows.iter().map(|r| r.setting).collect();
            settings.dedup();
            for s in settings {
                let mut rows: Vec<&SimRow> = report.rows.iter().filter(|r| r.setting == s).collect();
                rows.sort_by(|a, b| a.gamma.unwrap().total_cmp(&b.gamma.unwrap()));
                for r in &rows {
                    if r.gamma == Some(0.0) && r.reject_rate.unwrap() > limit(r) {
                        out.push(Violation { setting: s, message: format!("rejection rate {} at gamma 0 above {}", r.reject_rate.unwrap(), limit(r)) });
                    }
                }
                for pair in rows.windows(2) {
                    let (a, b) = (pair[0], pair[1]);
                    let tol = 2.0 * (a.reject_se.unwrap().powi(2) + b.reject_se.unwrap().powi(2)).sqrt();
                    if b.reject_rate.unwrap() < a.reject_rate.unwrap() - tol {
                        out.push(Violation {
                            setting: s,
                            message: format!(
                                "power drops from {} at gamma {} to {} at gamma {}",
                                a.reject_rate.unwrap(),
                                a.gamma.unwrap(),
                                b.reject_rate.unwrap(),
                                b.gamma.unwrap()
                            ),
                        });
                    }
                }
            }
        }
        "type1" => {
            for r in &report.rows {
                let rate = r.reject_rate_chebyshev.unwrap();
                if rate > limit(r) {
                    out.push(Violation { setting: r.setting, message: format!("Chebyshev rejection rate {rate} above {}", limit(r)) });
                }
            }
        }
        _ => {}
    }
    out
}
