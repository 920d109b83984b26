use rayon::prelude::*;

use super::{ClusterSetting, ClusteringSource, PowerConfig, RatioConfig, SimConfig, SimReport, SimRow, Study, TableKind, Type1Config};
use crate::assign::{hierarchical_assign, DesignCounts};
use crate::error::{Error, Result};
use crate::estimate::{
    analyze, delta_statistic, empirical_variance_bound, exact_sutva_variance, expected_variance_bound,
    interference_variance_approx, Decision,
    DecisionRule,
};
use crate::graph::{generate_sbm, Graph};
use crate::oracle::linear_model_expectations;
use crate::outcomes::{realize_linear, realize_sutva, LinearInterferenceModel, PotentialTable};
use crate::partition::{clustering_metrics, ldg_restream, rebalance, Clustering};
use crate::seed::{SeedStream, REPLICATION};
use crate::stats::{mean, nearest_rank, rate_standard_error, sample_variance};

pub fn run_study(cfg: &SimConfig) -> Result<SimReport> {
    match &cfg.study {
        Study::Ratio(c) => run_ratio_study(cfg, c),
        Study::Power(c) => run_power_study(cfg, c),
        Study::Type1(c) => run_type1_study(cfg, c),
    }
}

fn report(cfg: &SimConfig, study: &str, rows: Vec<SimRow>) -> SimReport {
    SimReport { study: study.into(), seed: cfg.seed, replications: cfg.replications, alpha: cfg.alpha, rows }
}

fn replication_seeds(cfg: &SimConfig, setting: usize) -> Vec<SeedStream> {
    let root = SeedStream::new(cfg.seed).child(REPLICATION).index(setting as u64);
    (0..cfg.replications).map(|r| root.index(r as u64)).collect()
}

/// Mean, its standard error and the sample variance.
fn summary(values: &[f64]) -> (f64, f64, f64) {
    let m = mean(values);
    let v = sample_variance(values).unwrap_or(0.0);
    (m, (v / values.len() as f64).sqrt(), v)
}

fn rate(flags: &[bool]) -> f64 {
    flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64
}

fn table_for(setting: &ClusterSetting, seed: SeedStream, effect: f64, sd: f64) -> Result<PotentialTable> {
    PotentialTable::random(setting.num_clusters * setting.cluster_size, effect, sd, &mut seed.child("table").rng())
}

fn setting_design(s: &ClusterSetting) -> Result<(Clustering, DesignCounts)> {
    Ok((Clustering::blocks(s.num_clusters, s.cluster_size)?, DesignCounts::symmetric(s.num_clusters, s.cluster_size)?))
}

/// Ratio of the variance bound to the exact `var(delta)` of the table.
pub fn run_ratio_study(cfg: &SimConfig, rc: &RatioConfig) -> Result<SimReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (k, setting) in rc.settings.iter().enumerate() {
        let (clustering, counts) = setting_design(setting)?;
        let stream = SeedStream::new(cfg.seed).index(k as u64);
        let table = table_for(setting, stream, rc.effect, rc.heterogeneity)?;
        let reference = exact_sutva_variance(&table, &clustering, &counts)?;
        if !(reference > 0.0) {
            return Err(Error::validation(format!("setting {k}: reference variance is {reference}")));
        }
        let draws: Vec<(f64, f64)> = replication_seeds(cfg, k)
            .into_par_iter()
            .map(|s| {
                let a = hierarchical_assign(&clustering, &counts, s.seed(), cfg.mechanism)?;
                let y = realize_sutva(&table, a.z(), None)?.y;
                Ok((delta_statistic(&clustering, &a, &y)?.delta, empirical_variance_bound(&clustering, &a, &y)?))
            })
            .collect::<Result<_>>()?;
        let deltas: Vec<f64> = draws.iter().map(|d| d.0).collect();
        let mut ratios: Vec<f64> = draws.iter().map(|d| d.1 / reference).collect();
        let (ratio_mean, ratio_se, _) = summary(&ratios);
        let in_band = ratios.iter().filter(|&&r| r > 0.95 && r < 1.05).count() as f64 / ratios.len() as f64;
        ratios.sort_by(f64::total_cmp);
        let (mean_delta, delta_se, var_delta) = summary(&deltas);
        rows.push(SimRow {
            setting: k,
            num_clusters: setting.num_clusters,
            cluster_size: setting.cluster_size,
            replications: cfg.replications,
            mean_delta,
            delta_se,
            var_delta,
            expected_delta: Some(0.0),
            mean_sigma_hat_sq: mean(&draws.iter().map(|d| d.1).collect::<Vec<_>>()),
            reference_variance: Some(reference),
            ratio_mean: Some(ratio_mean),
            expected_ratio: Some(expected_variance_bound(&table, &clustering, &counts)? / reference),
            ratio_se: Some(ratio_se),
            ratio_q10: Some(nearest_rank(&ratios, 0.1)),
            ratio_q90: Some(nearest_rank(&ratios, 0.9)),
            ratio_in_band: Some(in_band),
            ..SimRow::default()
        });
    }
    Ok(report(cfg, "ratio", rows))
}

/// Rejection frequency under both rules with outcomes fixed by a table.
pub fn run_type1_study(cfg: &SimConfig, tc: &Type1Config) -> Result<SimReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (k, setting) in tc.settings.iter().enumerate() {
        let (clustering, counts) = setting_design(setting)?;
        let stream = SeedStream::new(cfg.seed).index(k as u64);
        let n = setting.num_clusters * setting.cluster_size;
        let table = match tc.table {
            TableKind::ConstantOutcome => PotentialTable::new(vec![1.0; n], vec![1.0; n])?,
            TableKind::ConstantEffect { effect } => table_for(setting, stream, effect, 0.0)?,
            TableKind::Heterogeneous { effect, sd } => table_for(setting, stream, effect, sd)?,
        };
        let draws: Vec<(f64, f64, bool, bool)> = replication_seeds(cfg, k)
            .into_par_iter()
            .map(|s| {
                let a = hierarchical_assign(&clustering, &counts, s.seed(), cfg.mechanism)?;
                let y = realize_sutva(&table, a.z(), None)?.y;
                let cheb = analyze(&clustering, &a, &y, cfg.alpha, DecisionRule::Chebyshev)?;
                let gauss = analyze(&clustering, &a, &y, cfg.alpha, DecisionRule::Gaussian)?;
                Ok((cheb.delta, cheb.sigma_hat_sq, cheb.decision == Decision::Reject, gauss.decision == Decision::Reject))
            })
            .collect::<Result<_>>()?;
        let deltas: Vec<f64> = draws.iter().map(|d| d.0).collect();
        let (mean_delta, delta_se, var_delta) = summary(&deltas);
        let cheb = rate(&draws.iter().map(|d| d.2).collect::<Vec<_>>());
        let gauss = rate(&draws.iter().map(|d| d.3).collect::<Vec<_>>());
        rows.push(SimRow {
            setting: k,
            num_clusters: setting.num_clusters,
            cluster_size: setting.cluster_size,
            replications: cfg.replications,
            reject_rate: Some(cheb),
            reject_se: Some(rate_standard_error(cheb, cfg.replications)),
            reject_rate_chebyshev: Some(cheb),
            reject_rate_gaussian: Some(gauss),
            mean_delta,
            delta_se,
            var_delta,
            expected_delta: Some(0.0),
            mean_sigma_hat_sq: mean(&draws.iter().map(|d| d.1).collect::<Vec<_>>()),
            reference_variance: Some(exact_sutva_variance(&table, &clustering, &counts)?),
            ..SimRow::default()
        });
    }
    Ok(report(cfg, "type1", rows))
}

struct PowerSetting {
    graph: Graph,
    clustering: Clustering,
    counts: DesignCounts,
    rho_c: f64,
}

fn power_setting(pc: &PowerConfig, k: usize, seed: SeedStream) -> Result<PowerSetting> {
    let spec = pc.graphs[k].sbm(seed.child("graph").seed())?;
    let (graph, blocks) = generate_sbm(&spec)?;
    let clustering = match pc.clustering {
        ClusteringSource::Blocks => blocks,
        ClusteringSource::Ldg { leniency, iterations } => {
            let raw = ldg_restream(&graph, spec.num_blocks, leniency, iterations, seed.child("ldg").seed())?;
            rebalance(&graph, &raw, spec.num_blocks)?
        }
    };
    let counts = DesignCounts::symmetric(spec.num_blocks, spec.block_size)?;
    let rho_c = clustering_metrics(&graph, &clustering)?.rho_c;
    Ok(PowerSetting { graph, clustering, counts, rho_c })
}

/// Per replication and per gamma: (delta, variance bound, chebyshev, gaussian).
type Draw = Vec<(f64, f64, bool, bool)>;

/// Rejection rate over a gamma grid; every gamma reuses the same
/// assignments and noise draws.
pub fn run_power_study(cfg: &SimConfig, pc: &PowerConfig) -> Result<SimReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for k in 0..pc.graphs.len() {
        let setting_seed = SeedStream::new(cfg.seed).index(k as u64);
        let fixed = if pc.regenerate_graph { None } else { Some(power_setting(pc, k, setting_seed)?) };
        let simulate = |s: SeedStream| -> Result<(Draw, f64, Vec<f64>)> {
            let own;
            let st = match &fixed {
                Some(st) => st,
                None => {
                    own = power_setting(pc, k, s)?;
                    &own
                }
            };
            let a = hierarchical_assign(&st.clustering, &st.counts, s.child("assign").seed(), cfg.mechanism)?;
            let mut per_gamma = Vec::with_capacity(pc.gammas.len());
            let mut expected = Vec::with_capacity(pc.gammas.len());
            for &gamma in &pc.gammas {
                let model = LinearInterferenceModel { alpha: pc.intercept, beta: pc.beta, gamma, noise_sd: pc.noise_sd };
                let y = realize_linear(&model, &st.graph, a.z(), s.child("noise").seed(), None)?.y;
                let cheb = analyze(&st.clustering, &a, &y, cfg.alpha, DecisionRule::Chebyshev)?;
                let gauss_reject = match cheb.t_stat {
                    Some(_) => cheb.p_gaussian <= cfg.alpha,
                    None => cheb.delta != 0.0,
                };
                per_gamma.push((cheb.delta, cheb.sigma_hat_sq, cheb.decision == Decision::Reject, gauss_reject));
                if fixed.is_none() {
                    expected.push(linear_model_expectations(&model, &st.graph, &st.clustering, &st.counts)?.delta);
                }
            }
            Ok((per_gamma, st.rho_c, expected))
        };
        let draws: Vec<(Draw, f64, Vec<f64>)> = replication_seeds(cfg, k).into_par_iter().map(simulate).collect::<Result<_>>()?;

        let rho_c = match &fixed {
            Some(st) => st.rho_c,
            None => mean(&draws.iter().map(|d| d.1).collect::<Vec<_>>()),
        };
        let g = &pc.graphs[k];
        for (j, &gamma) in pc.gammas.iter().enumerate() {
            let model = LinearInterferenceModel { alpha: pc.intercept, beta: pc.beta, gamma, noise_sd: pc.noise_sd };
            let deltas: Vec<f64> = draws.iter().map(|d| d.0[j].0).collect();
            let (mean_delta, delta_se, var_delta) = summary(&deltas);
            let cheb = rate(&draws.iter().map(|d| d.0[j].2).collect::<Vec<_>>());
            let gauss = rate(&draws.iter().map(|d| d.0[j].3).collect::<Vec<_>>());
            let chosen = match pc.rule {
                DecisionRule::Chebyshev => cheb,
                DecisionRule::Gaussian => gauss,
            };
            let (expected_delta, variance_approx) = match &fixed {
                Some(st) => (
                    Some(linear_model_expectations(&model, &st.graph, &st.clustering, &st.counts)?.delta),
                    if pc.variance_approx {
                        Some(interference_variance_approx(&model, &st.graph, &st.clustering, &st.counts)?)
                    } else {
                        None
                    },
                ),
                None => (Some(mean(&draws.iter().map(|d| d.2[j]).collect::<Vec<_>>())), None),
            };
            rows.push(SimRow {
                setting: k,
                num_clusters: g.num_blocks,
                cluster_size: g.block_size,
                gamma: Some(gamma),
                rho_c: Some(rho_c),
                replications: cfg.replications,
                reject_rate: Some(chosen),
                reject_se: Some(rate_standard_error(chosen, cfg.replications)),
                reject_rate_chebyshev: Some(cheb),
                reject_rate_gaussian: Some(gauss),
                mean_delta,
                delta_se,
                var_delta,
                expected_delta,
                mean_sigma_hat_sq: mean(&draws.iter().map(|d| d.0[j].1).collect::<Vec<_>>()),
                variance_approx,
                ..SimRow::default()
            });
        }
    }
    Ok(report(cfg, "power", rows))
}

