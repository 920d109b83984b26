//! Exact moments of estimators over every assignment of a small design,
//! exact negative binomial moments, and closed-form expectations under
//! the noise-free linear model.

mod bernoulli;
mod combinations;
mod linear;

pub use bernoulli::{bernoulli_vs_cr_variance_gap, binomial_negative_moment, negative_moment_hypothesis, VarianceGap};
pub use combinations::{binomial, Combinations};
pub use linear::{linear_model_expectations, LinearExpectations};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assign::{DesignCounts, HierarchicalAssignment};
use crate::error::{Error, Result};
use crate::estimate::{
    chebyshev_decision, delta_statistic, diff_in_means, empirical_variance_bound, horvitz_thompson_cluster, Decision,
};
use crate::graph::Graph;
use crate::outcomes::{realize_linear, realize_sutva, LinearInterferenceModel, PotentialTable};
use crate::partition::Clustering;
use crate::stats::{two_sided_normal_p, NeumaierSum};

pub const ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnumDesign {
    /// `n_t` of all units treated.
    Complete { n_t: usize },
    /// `m_t` of all clusters treated.
    Cluster { m_t: usize },
    Hierarchical(DesignCounts),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    /// Difference in means over all units (complete design).
    DiffInMeans,
    /// Cluster-level Horvitz-Thompson estimate (cluster design).
    HorvitzThompson,
    TauCr,
    TauCbr,
    Delta,
    VarianceBound,
    /// Indicator of a Chebyshev rejection at level `alpha`.
    ChebyshevRejection { alpha: f64 },
    /// Indicator of a Gaussian rejection at level `alpha`.
    GaussianRejection { alpha: f64 },
}

impl Statistic {
    fn fits(&self, design: &EnumDesign) -> bool {
        matches!(
            (self, design),
            (Statistic::DiffInMeans, EnumDesign::Complete { .. })
                | (Statistic::HorvitzThompson, EnumDesign::Cluster { .. })
                | (
                    Statistic::TauCr
                        | Statistic::TauCbr
                        | Statistic::Delta
                        | Statistic::VarianceBound
                        | Statistic::ChebyshevRejection { .. }
                        | Statistic::GaussianRejection { .. },
                    EnumDesign::Hierarchical(_)
                )
        )
    }
}

/// Deterministic outcomes: a table or the linear model without noise.
#[derive(Clone, Debug)]
pub enum OutcomeSource<'a> {
    Table(&'a PotentialTable),
    Linear { model: LinearInterferenceModel, graph: &'a Graph },
}

impl OutcomeSource<'_> {
    fn realize(&self, z: &[bool]) -> Result<Vec<f64>> {
        match self {
            OutcomeSource::Table(t) => Ok(realize_sutva(t, z, None)?.y),
            OutcomeSource::Linear { model, graph } => Ok(realize_linear(model, graph, z, 0, None)?.y),
        }
    }

    fn num_units(&self) -> usize {
        match self {
            OutcomeSource::Table(t) => t.num_units(),
            OutcomeSource::Linear { graph, .. } => graph.num_units(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnumerationSpec<'a> {
    pub clustering: &'a Clustering,
    pub design: EnumDesign,
    pub outcomes: OutcomeSource<'a>,
    pub statistics: Vec<Statistic>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub statistic: Statistic,
    pub mean: f64,
    pub variance: f64,
    /// Number of equally likely assignments.
    pub outcomes: u128,
}

/// Number of assignments the design has, `None` if it overflows.
pub fn outcome_count(design: &EnumDesign, clustering: &Clustering) -> Option<u128> {
    match *design {
        EnumDesign::Complete { n_t } => binomial(clustering.num_units(), n_t),
        EnumDesign::Cluster { m_t } => binomial(clustering.num_clusters(), m_t),
        EnumDesign::Hierarchical(c) => binomial(c.num_clusters(), c.m_cr)?
            .checked_mul(binomial(c.n_cr, c.n_cr_t)?)?
            .checked_mul(binomial(c.m_cbr, c.m_cbr_t)?),
    }
}

/// Treatment vectors of one outer block, in lexicographic order.
fn block_assignments(spec: &EnumerationSpec, outer: &[usize]) -> Vec<(Vec<bool>, Option<Vec<bool>>)> {
    let c = spec.clustering;
    match spec.design {
        EnumDesign::Complete { .. } | EnumDesign::Cluster { .. } => {
            let mut z = vec![false; c.num_units()];
            match spec.design {
                EnumDesign::Complete { .. } => outer.iter().for_each(|&u| z[u] = true),
                _ => outer.iter().flat_map(|&k| c.members(k)).for_each(|&u| z[u] = true),
            }
            vec![(z, None)]
        }
        EnumDesign::Hierarchical(counts) => {
            let mut omega = vec![false; c.num_clusters()];
            outer.iter().for_each(|&k| omega[k] = true);
            let cr_units: Vec<usize> = (0..c.num_units()).filter(|&u| omega[c.cluster_of(u)]).collect();
            let cbr_clusters: Vec<usize> = (0..c.num_clusters()).filter(|&k| !omega[k]).collect();
            let mut out = Vec::new();
            for cr in Combinations::new(counts.n_cr, counts.n_cr_t) {
                for cbr in Combinations::new(counts.m_cbr, counts.m_cbr_t) {
                    let mut z = vec![false; c.num_units()];
                    cr.iter().for_each(|&i| z[cr_units[i]] = true);
                    cbr.iter().flat_map(|&i| c.members(cbr_clusters[i])).for_each(|&u| z[u] = true);
                    out.push((z, Some(omega.clone())));
                }
            }
            out
        }
    }
}

fn evaluate(spec: &EnumerationSpec, z: Vec<bool>, omega: Option<Vec<bool>>) -> Result<Vec<f64>> {
    let c = spec.clustering;
    let y = spec.outcomes.realize(&z)?;
    let n = c.num_units();
    let assignment = match (omega, spec.design) {
        (Some(omega), EnumDesign::Hierarchical(counts)) => Some(HierarchicalAssignment::from_raw(c, omega, z.clone(), counts)),
        _ => None,
    };
    let hier = || assignment.as_ref().expect("hierarchical statistic on a hierarchical design");
    let mut delta = None;
    let mut var = None;
    let mut get_delta = || -> Result<f64> {
        if delta.is_none() {
            delta = Some(delta_statistic(c, hier(), &y)?);
        }
        Ok(delta.unwrap().delta)
    };
    let mut values = Vec::with_capacity(spec.statistics.len());
    for s in &spec.statistics {
        let v = match *s {
            Statistic::DiffInMeans => diff_in_means(&y, &z)?,
            Statistic::HorvitzThompson => {
                let zc: Vec<bool> = (0..c.num_clusters()).map(|k| z[c.members(k)[0]]).collect();
                horvitz_thompson_cluster(&c.cluster_sums(&y), &zc, c.num_clusters(), n)?
            }
            Statistic::TauCr => delta_statistic(c, hier(), &y)?.tau_cr,
            Statistic::TauCbr => delta_statistic(c, hier(), &y)?.tau_cbr,
            Statistic::Delta => get_delta()?,
            Statistic::VarianceBound => *var.get_or_insert(empirical_variance_bound(c, hier(), &y)?),
            Statistic::ChebyshevRejection { alpha } | Statistic::GaussianRejection { alpha } => {
                let d = get_delta()?;
                let v = *var.get_or_insert(empirical_variance_bound(c, hier(), &y)?);
                let reject = if v == 0.0 {
                    d != 0.0
                } else if matches!(s, Statistic::ChebyshevRejection { .. }) {
                    chebyshev_decision(d, v, alpha)? == Decision::Reject
                } else {
                    two_sided_normal_p(d / v.sqrt()) <= alpha
                };
                f64::from(u8::from(reject))
            }
        };
        values.push(v);
    }
    Ok(values)
}

/// Exact mean and variance of each statistic over the uniform law of the
/// design.
///
/// Assignments are visited in lexicographic order of the outer choice
/// (treated units, treated clusters, or clusters in the completely
/// randomized arm). Outer blocks are evaluated in parallel and their
/// compensated partial sums reduced in order, once for the mean and once
/// for the squared deviations, so results do not depend on thread count.
pub fn enumerate_moments(spec: &EnumerationSpec) -> Result<Vec<Moments>> {
    let c = spec.clustering;
    if spec.outcomes.num_units() != c.num_units() {
        return Err(Error::validation("outcomes and clustering cover different units"));
    }
    if let OutcomeSource::Linear { model, .. } = &spec.outcomes {
        if model.noise_sd != 0.0 {
            return Err(Error::validation("enumeration needs noise-free outcomes"));
        }
    }
    if spec.statistics.is_empty() {
        return Err(Error::validation("no statistic selected"));
    }
    if let Some(s) = spec.statistics.iter().find(|s| !s.fits(&spec.design)) {
        return Err(Error::validation(format!("{s:?} is not defined for {:?}", spec.design)));
    }
    let (outer_n, outer_k) = match spec.design {
        EnumDesign::Complete { n_t } => {
            if n_t == 0 || n_t >= c.num_units() {
                return Err(Error::validation(format!("{n_t} treated of {} units", c.num_units())));
            }
            (c.num_units(), n_t)
        }
        EnumDesign::Cluster { m_t } => {
            if m_t == 0 || m_t >= c.num_clusters() {
                return Err(Error::validation(format!("{m_t} treated of {} clusters", c.num_clusters())));
            }
            (c.num_clusters(), m_t)
        }
        EnumDesign::Hierarchical(counts) => {
            counts.validate()?;
            counts.check_against(c)?;
            (counts.num_clusters(), counts.m_cr)
        }
    };
    let total = outcome_count(&spec.design, c).unwrap_or(u128::MAX);
    if total > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { required: total, cap: ENUMERATION_CAP });
    }

    let outer: Vec<Vec<usize>> = Combinations::new(outer_n, outer_k).collect();
    let k = spec.statistics.len();
    let block_values = |block: &Vec<usize>| -> Result<Vec<Vec<f64>>> {
        block_assignments(spec, block)
            .into_iter()
            .map(|(z, omega)| evaluate(spec, z, omega))
            .collect()
    };

    let sums: Vec<Vec<NeumaierSum>> = outer
        .par_iter()
        .map(|block| {
            let mut acc = vec![NeumaierSum::default(); k];
            for row in block_values(block)? {
                row.iter().zip(&mut acc).for_each(|(v, a)| a.add(*v));
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let means: Vec<f64> = (0..k)
        .map(|s| sums.iter().map(|b| b[s].total()).collect::<NeumaierSum>().total() / total as f64)
        .collect();

    let squares: Vec<Vec<NeumaierSum>> = outer
        .par_iter()
        .map(|block| {
            let mut acc = vec![NeumaierSum::default(); k];
            for row in block_values(block)? {
                for s in 0..k {
                    acc[s].add((row[s] - means[s]).powi(2));
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    Ok((0..k)
        .map(|s| Moments {
            statistic: spec.statistics[s],
            mean: means[s],
            variance: squares.iter().map(|b| b[s].total()).collect::<NeumaierSum>().total() / total as f64,
            outcomes: total,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::{hierarchical_assign, CrMechanism};
    use crate::seed::SeedStream;

    fn table(n: usize, seed: u64) -> PotentialTable {
        PotentialTable::random(n, 0.7, 1.0, &mut SeedStream::new(seed).rng()).unwrap()
    }

    #[test]
    fn counts_agree_with_closed_form() {
        let c = Clustering::blocks(4, 2).unwrap();
        let counts = DesignCounts::symmetric(4, 2).unwrap();
        assert_eq!(outcome_count(&EnumDesign::Hierarchical(counts), &c), Some(72));
        let t = table(8, 1);
        let spec = EnumerationSpec {
            clustering: &c,
            design: EnumDesign::Hierarchical(counts),
            outcomes: OutcomeSource::Table(&t),
            statistics: vec![Statistic::Delta],
        };
        let m = enumerate_moments(&spec).unwrap();
        assert_eq!(m[0].outcomes, 72);
        let seen: usize = Combinations::new(4, 2).map(|b| block_assignments(&spec, &b).len()).sum();
        assert_eq!(seen, 72);
    }

    #[test]
    fn cap_and_validation() {
        let c = Clustering::blocks(40, 2).unwrap();
        let t = table(80, 2);
        let spec = EnumerationSpec {
            clustering: &c,
            design: EnumDesign::Complete { n_t: 40 },
            outcomes: OutcomeSource::Table(&t),
            statistics: vec![Statistic::DiffInMeans],
        };
        match enumerate_moments(&spec) {
            Err(Error::EnumerationCap { required, .. }) => assert_eq!(Some(required), binomial(80, 40)),
            other => panic!("{other:?}"),
        }
        let spec = EnumerationSpec { statistics: vec![Statistic::Delta], design: EnumDesign::Complete { n_t: 2 }, ..spec };
        assert!(enumerate_moments(&spec).is_err());
    }

    #[test]
    fn complete_design_is_unbiased() {
        let c = Clustering::blocks(4, 2).unwrap();
        let t = table(8, 3);
        let spec = EnumerationSpec {
            clustering: &c,
            design: EnumDesign::Complete { n_t: 4 },
            outcomes: OutcomeSource::Table(&t),
            statistics: vec![Statistic::DiffInMeans],
        };
        let m = enumerate_moments(&spec).unwrap()[0];
        assert!((m.mean - t.tau()).abs() < 1e-12);
        // classical finite-population variance S_t/n_t + S_c/n_c - S_tc/N
        let v = crate::stats::sample_variance;
        let want = v(t.y1()).unwrap() / 4.0 + v(t.y0()).unwrap() / 4.0 - v(&t.effects()).unwrap() / 8.0;
        assert!((m.variance - want).abs() < 1e-12);
    }

    /// Hierarchical enumeration against 10^5 sampled draws.
    #[test]
    fn enumeration_agrees_with_sampler() {
        let c = Clustering::blocks(8, 2).unwrap();
        let counts = DesignCounts::symmetric(8, 2).unwrap();
        let t = table(16, 4);
        let stats = vec![Statistic::TauCr, Statistic::TauCbr, Statistic::Delta, Statistic::VarianceBound];
        let spec = EnumerationSpec {
            clustering: &c,
            design: EnumDesign::Hierarchical(counts),
            outcomes: OutcomeSource::Table(&t),
            statistics: stats.clone(),
        };
        let exact = enumerate_moments(&spec).unwrap();
        let draws = 100_000;
        let samples: Vec<Vec<f64>> = (0..draws)
            .into_par_iter()
            .map(|seed| {
                let a = hierarchical_assign(&c, &counts, seed as u64, CrMechanism::Complete).unwrap();
                let y = realize_sutva(&t, a.z(), None).unwrap().y;
                let d = delta_statistic(&c, &a, &y).unwrap();
                vec![d.tau_cr, d.tau_cbr, d.delta, empirical_variance_bound(&c, &a, &y).unwrap()]
            })
            .collect();
        for (s, m) in exact.iter().enumerate() {
            let col: Vec<f64> = samples.iter().map(|r| r[s]).collect();
            let mean = crate::stats::mean(&col);
            let se = (m.variance / draws as f64).sqrt();
            assert!((mean - m.mean).abs() < 4.0 * se, "{:?}: {mean} vs {}", m.statistic, m.mean);
        }
    }

    /// Exact variance and bound expectation against enumeration on random
    /// tables; also counts how often the bound falls short.
    #[test]
    fn closed_forms_match_enumeration() {
        let c = Clustering::blocks(8, 2).unwrap();
        let counts = DesignCounts::symmetric(8, 2).unwrap();
        let mut short = 0;
        for k in 0..30 {
            let t = table(16, 100 + k);
            let spec = EnumerationSpec {
                clustering: &c,
                design: EnumDesign::Hierarchical(counts),
                outcomes: OutcomeSource::Table(&t),
                statistics: vec![Statistic::Delta, Statistic::VarianceBound],
            };
            let m = enumerate_moments(&spec).unwrap();
            let var = crate::estimate::exact_sutva_variance(&t, &c, &counts).unwrap();
            let bound = crate::estimate::expected_variance_bound(&t, &c, &counts).unwrap();
            assert!(m[0].mean.abs() < 1e-12);
            assert!((m[0].variance - var).abs() < 1e-10);
            assert!((m[1].mean - bound).abs() < 1e-10);
            short += usize::from(bound < var);
        }
        // i.i.d. effects make the bound short about half of the time
        assert!(short > 0);
    }
}
