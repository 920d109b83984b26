//! Potential outcomes: fixed tables under no interference and the linear
//! interference model.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::partition::Clustering;
use crate::seed::SeedStream;

/// Treated and control potential outcomes per unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialTable {
    y1: Vec<f64>,
    y0: Vec<f64>,
}

impl PotentialTable {
    pub fn new(y1: Vec<f64>, y0: Vec<f64>) -> Result<Self> {
        if y1.len() != y0.len() || y1.is_empty() {
            return Err(Error::validation(format!("potential outcome columns have lengths {} and {}", y1.len(), y0.len())));
        }
        if let Some(u) = (0..y1.len()).find(|&u| !y1[u].is_finite() || !y0[u].is_finite()) {
            return Err(Error::validation(format!("unit {u} has a non-finite potential outcome")));
        }
        Ok(Self { y1, y0 })
    }

    /// `y1 = y0 + effect` for every unit.
    pub fn constant_effect(y0: Vec<f64>, effect: f64) -> Result<Self> {
        Self::new(y0.iter().map(|y| y + effect).collect(), y0)
    }

    /// Control outcomes N(0, 1); treated outcomes add `effect` plus
    /// N(0, `heterogeneity`^2) per unit.
    pub fn random(n: usize, effect: f64, heterogeneity: f64, rng: &mut impl Rng) -> Result<Self> {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let y0: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
        let y1 = y0.iter().map(|y| y + effect + heterogeneity * normal.sample(rng)).collect();
        Self::new(y1, y0)
    }

    pub fn num_units(&self) -> usize {
        self.y1.len()
    }

    pub fn y1(&self) -> &[f64] {
        &self.y1
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    /// Per-unit effects `y1 - y0`.
    pub fn effects(&self) -> Vec<f64> {
        self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).collect()
    }

    /// Total treatment effect `mean(y1 - y0)`.
    pub fn tau(&self) -> f64 {
        crate::stats::mean(&self.effects())
    }
}

/// `y_i = alpha + beta z_i + gamma rho_i + eps_i`, with `rho_i` the
/// treated fraction of `i`'s neighbours (0 for isolated units) and
/// `eps_i ~ N(0, noise_sd^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearInterferenceModel {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub noise_sd: f64,
}

impl LinearInterferenceModel {
    pub fn validate(&self) -> Result<()> {
        if ![self.alpha, self.beta, self.gamma, self.noise_sd].iter().all(|x| x.is_finite()) || self.noise_sd < 0.0 {
            return Err(Error::validation(format!("invalid linear model {self:?}")));
        }
        Ok(())
    }
}

/// Total effect of the linear model on a graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalEffect {
    pub tau: f64,
    /// Fraction of units with at least one neighbour; `gamma` only reaches
    /// these.
    pub non_isolated_fraction: f64,
}

/// `beta + gamma * (fraction of non-isolated units)`.
pub fn total_treatment_effect(model: &LinearInterferenceModel, graph: &Graph) -> TotalEffect {
    let n = graph.num_units();
    let non_isolated_fraction = (n - graph.isolated_units()) as f64 / n as f64;
    TotalEffect { tau: model.beta + model.gamma * non_isolated_fraction, non_isolated_fraction }
}

/// Realized outcomes, with cluster sums when a clustering was given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedOutcomes {
    pub y: Vec<f64>,
    pub y_plus: Option<Vec<f64>>,
}

impl ObservedOutcomes {
    fn new(y: Vec<f64>, clustering: Option<&Clustering>) -> Result<Self> {
        let y_plus = match clustering {
            Some(c) if c.num_units() != y.len() => {
                return Err(Error::validation(format!("clustering covers {} units, outcomes {}", c.num_units(), y.len())))
            }
            Some(c) => Some(c.cluster_sums(&y)),
            None => None,
        };
        Ok(Self { y, y_plus })
    }
}

pub fn realize_sutva(table: &PotentialTable, z: &[bool], clustering: Option<&Clustering>) -> Result<ObservedOutcomes> {
    if z.len() != table.num_units() {
        return Err(Error::validation(format!("{} treatments for {} units", z.len(), table.num_units())));
    }
    let y = z
        .iter()
        .enumerate()
        .map(|(u, &t)| if t { table.y1[u] } else { table.y0[u] })
        .collect();
    ObservedOutcomes::new(y, clustering)
}

/// Treated fraction of each unit's neighbourhood, 0 for isolated units.
pub fn treated_neighbor_fraction(graph: &Graph, z: &[bool]) -> Vec<f64> {
    (0..graph.num_units())
        .map(|u| {
            let nb = graph.neighbors(u);
            if nb.is_empty() {
                0.0
            } else {
                nb.iter().filter(|&&v| z[v]).count() as f64 / nb.len() as f64
            }
        })
        .collect()
}

/// Noise is drawn from the `"noise"` substream of `seed`; with
/// `noise_sd == 0` the seed is unused.
pub fn realize_linear(
    model: &LinearInterferenceModel,
    graph: &Graph,
    z: &[bool],
    seed: u64,
    clustering: Option<&Clustering>,
) -> Result<ObservedOutcomes> {
    model.validate()?;
    if z.len() != graph.num_units() {
        return Err(Error::validation(format!("{} treatments for {} units", z.len(), graph.num_units())));
    }
    let rho = treated_neighbor_fraction(graph, z);
    let mut y: Vec<f64> = z
        .iter()
        .zip(&rho)
        .map(|(&t, r)| model.alpha + model.beta * f64::from(u8::from(t)) + model.gamma * r)
        .collect();
    if model.noise_sd > 0.0 {
        let normal = Normal::new(0.0, model.noise_sd).map_err(|e| Error::validation(e.to_string()))?;
        let mut rng = SeedStream::new(seed).child("noise").rng();
        for v in &mut y {
            *v += normal.sample(&mut rng);
        }
    }
    ObservedOutcomes::new(y, clustering)
}
