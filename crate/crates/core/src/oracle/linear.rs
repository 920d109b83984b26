//! Exact expectations of the arm estimators under the noise-free linear
//! interference model and the hierarchical design.
//!
//! Both arm estimators average `beta + gamma (r_i(1) - r_i(0))` over units,
//! where `r_i(z)` is the expected treated share of `i`'s neighbours given
//! that `i` sits in the arm with treatment `z`. For unit `i` with degree
//! `d`, `a` neighbours in its cluster and `b = d - a` outside it:
//!
//! * completely randomized arm: `r(1) - r(0) = -(a + q b) / (d (n_cr - 1))`
//!   with `q = (m_cr - 1) / (M - 1)` the chance a foreign cluster shares
//!   the arm;
//! * cluster-randomized arm: `r(1) - r(0) = (a - b / (M - 1)) / d`.

use serde::{Deserialize, Serialize};

use crate::assign::DesignCounts;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::outcomes::LinearInterferenceModel;
use crate::partition::Clustering;
use crate::stats::NeumaierSum;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearExpectations {
    pub tau_cr: f64,
    pub tau_cbr: f64,
    pub delta: f64,
}

pub fn linear_model_expectations(
    model: &LinearInterferenceModel,
    graph: &Graph,
    clustering: &Clustering,
    counts: &DesignCounts,
) -> Result<LinearExpectations> {
    model.validate()?;
    counts.validate()?;
    counts.check_against(clustering)?;
    if graph.num_units() != clustering.num_units() {
        return Err(Error::validation("graph and clustering cover different units"));
    }
    let m = counts.num_clusters() as f64;
    let q = (counts.m_cr as f64 - 1.0) / (m - 1.0);
    let n_cr = counts.n_cr as f64;
    let mut cr = NeumaierSum::default();
    let mut cbr = NeumaierSum::default();
    for u in 0..graph.num_units() {
        let d = graph.degree(u) as f64;
        if d == 0.0 {
            continue;
        }
        let own = clustering.cluster_of(u);
        let a = graph.neighbors(u).iter().filter(|&&v| clustering.cluster_of(v) == own).count() as f64;
        let b = d - a;
        cr.add(-(a + q * b) / (d * (n_cr - 1.0)));
        cbr.add((a - b / (m - 1.0)) / d);
    }
    let n = graph.num_units() as f64;
    let tau_cr = model.beta + model.gamma * cr.total() / n;
    let tau_cbr = model.beta + model.gamma * cbr.total() / n;
    Ok(LinearExpectations { tau_cr, tau_cbr, delta: tau_cr - tau_cbr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{enumerate_moments, EnumDesign, EnumerationSpec, OutcomeSource, Statistic};

    #[test]
    fn matches_enumeration() {
        let g = Graph::from_edges(
            12,
            [(0, 1), (0, 2), (1, 5), (2, 3), (3, 4), (4, 9), (5, 6), (6, 7), (7, 11), (8, 9), (9, 10), (10, 11), (2, 8)],
        )
        .unwrap();
        let c = Clustering::blocks(6, 2).unwrap();
        let model = LinearInterferenceModel { alpha: 0.4, beta: 1.0, gamma: 0.7, noise_sd: 0.0 };
        for counts in [DesignCounts::new(6, 2, 2, 2, 2).unwrap(), DesignCounts::new(6, 2, 4, 3, 1).unwrap()] {
            let exact = linear_model_expectations(&model, &g, &c, &counts).unwrap();
            let spec = EnumerationSpec {
                clustering: &c,
                design: EnumDesign::Hierarchical(counts),
                outcomes: OutcomeSource::Linear { model, graph: &g },
                statistics: vec![Statistic::TauCr, Statistic::TauCbr, Statistic::Delta],
            };
            let m = enumerate_moments(&spec).unwrap();
            assert!((m[0].mean - exact.tau_cr).abs() < 1e-12, "{} vs {}", m[0].mean, exact.tau_cr);
            assert!((m[1].mean - exact.tau_cbr).abs() < 1e-12);
            assert!((m[2].mean - exact.delta).abs() < 1e-12);
        }
    }
}
