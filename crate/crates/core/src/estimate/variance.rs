//! Variance bound estimator and closed-form design variances.

use serde::{Deserialize, Serialize};

use super::Buckets;
use crate::assign::{DesignCounts, HierarchicalAssignment};
use crate::error::{Error, Result};
use crate::outcomes::PotentialTable;
use crate::partition::Clustering;
use crate::stats::sample_variance;

/// Plug-in upper bound on `var(delta)` from one realized assignment:
/// `S_cr,t/n_cr,t + S_cr,c/n_cr,c + (m_cbr/n_cbr)^2 (S+_t/m_cbr,t + S+_c/m_cbr,c)`,
/// each `S` a sample variance of its bucket.
pub fn empirical_variance_bound(clustering: &Clustering, assignment: &HierarchicalAssignment, y: &[f64]) -> Result<f64> {
    let b = Buckets::collect(clustering, assignment, y)?;
    b.require(2)?;
    let counts = assignment.counts();
    let scale = counts.m_cbr as f64 / counts.n_cbr as f64;
    let term = |v: &[f64]| sample_variance(v).expect("bucket has two values") / v.len() as f64;
    Ok(term(&b.cr_t) + term(&b.cr_c) + scale * scale * (term(&b.cbr_t) + term(&b.cbr_c)))
}

/// Unit- and cluster-level sample variances of a potential table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub s_t: f64,
    pub s_c: f64,
    pub s_tc: f64,
    pub s_plus_t: f64,
    pub s_plus_c: f64,
    pub s_plus_tc: f64,
}

impl VarianceComponents {
    pub fn from_table(table: &PotentialTable, clustering: &Clustering) -> Result<Self> {
        if table.num_units() != clustering.num_units() {
            return Err(Error::validation("potential table and clustering cover different units"));
        }
        let var = |v: &[f64]| sample_variance(v).ok_or_else(|| Error::validation("variance needs two values"));
        let effects = table.effects();
        Ok(Self {
            s_t: var(table.y1())?,
            s_c: var(table.y0())?,
            s_tc: var(&effects)?,
            s_plus_t: var(&clustering.cluster_sums(table.y1()))?,
            s_plus_c: var(&clustering.cluster_sums(table.y0()))?,
            s_plus_tc: var(&clustering.cluster_sums(&effects))?,
        })
    }
}

struct Design {
    n: f64,
    m: f64,
    n_cr: f64,
    n_cbr: f64,
    m_cbr: f64,
    n_t: f64,
    n_c: f64,
    m_t: f64,
    m_c: f64,
}

impl Design {
    fn new(counts: &DesignCounts, clustering: &Clustering) -> Result<Self> {
        counts.validate()?;
        counts.check_against(clustering)?;
        if counts.n_cr < 2 {
            return Err(Error::validation("completely randomized arm needs at least 2 units"));
        }
        let f = |x: usize| x as f64;
        Ok(Self {
            n: f(counts.num_units()),
            m: f(counts.num_clusters()),
            n_cr: f(counts.n_cr),
            n_cbr: f(counts.n_cbr),
            m_cbr: f(counts.m_cbr),
            n_t: f(counts.n_cr_t),
            n_c: f(counts.n_cr_c),
            m_t: f(counts.m_cbr_t),
            m_c: f(counts.m_cbr_c),
        })
    }

    /// Expected sample variance over the completely randomized arm of a
    /// quantity with population variances `s` (units) and `s_plus` (cluster
    /// sums), averaged over the arm split.
    fn arm_variance(&self, s: f64, s_plus: f64) -> f64 {
        (self.n_cr * (self.n - 1.0) / self.n * s - self.m_cbr / self.n * s_plus) / (self.n_cr - 1.0)
    }

    fn cbr_scale_sq(&self) -> f64 {
        (self.m_cbr / self.n_cbr).powi(2)
    }
}

/// Exact `var(delta)` under Fisher's null `y1 = y0 = y`:
///
/// `n_cr/(n_cr-1) (N-1)/N n_cr/(n_cr,t n_cr,c) S
///  + [(m_cbr/n_cbr)^2 m_cbr/(m_cbr,t m_cbr,c) - n_cr m_cbr/(n_cr,t n_cr,c N (n_cr-1))] S+`
///
/// with `S`, `S+` the sample variances of `y` and of its cluster sums.
pub fn fisher_null_variance(y: &[f64], clustering: &Clustering, counts: &DesignCounts) -> Result<f64> {
    let d = Design::new(counts, clustering)?;
    if y.len() != clustering.num_units() {
        return Err(Error::validation(format!("{} outcomes for {} units", y.len(), clustering.num_units())));
    }
    let s = sample_variance(y).expect("at least two units");
    let s_plus = sample_variance(&clustering.cluster_sums(y)).expect("at least two clusters");
    let unit = d.n_cr / (d.n_cr - 1.0) * (d.n - 1.0) / d.n * d.n_cr / (d.n_t * d.n_c);
    let cluster = d.cbr_scale_sq() * d.m_cbr / (d.m_t * d.m_c) - d.n_cr * d.m_cbr / (d.n_t * d.n_c * d.n * (d.n_cr - 1.0));
    Ok(unit * s + cluster * s_plus)
}

/// Exact `var(delta)` for a potential table under the hierarchical design
/// with complete randomization in both arms.
pub fn exact_sutva_variance(table: &PotentialTable, clustering: &Clustering, counts: &DesignCounts) -> Result<f64> {
    let d = Design::new(counts, clustering)?;
    let v = VarianceComponents::from_table(table, clustering)?;
    let cr = d.arm_variance(v.s_t, v.s_plus_t) / d.n_t + d.arm_variance(v.s_c, v.s_plus_c) / d.n_c
        - d.arm_variance(v.s_tc, v.s_plus_tc) / d.n_cr;
    let cbr = d.cbr_scale_sq() * (v.s_plus_t / d.m_t + v.s_plus_c / d.m_c - v.s_plus_tc / d.m_cbr);
    Ok(cr + cbr + d.m / (d.n_cr * d.n_cbr) * v.s_plus_tc)
}

/// Exact `E(variance bound)` for a potential table under complete
/// randomization in both arms.
///
/// It exceeds `exact_sutva_variance` by
/// `(E_W S_cr,tc - S+_tc / s) / n_cr`, with `s` the cluster size and
/// `E_W S_cr,tc` the arm-averaged sample variance of unit effects. The
/// difference vanishes for a constant effect and is negative when effects
/// vary more between clusters than within them.
pub fn expected_variance_bound(table: &PotentialTable, clustering: &Clustering, counts: &DesignCounts) -> Result<f64> {
    let d = Design::new(counts, clustering)?;
    let v = VarianceComponents::from_table(table, clustering)?;
    Ok(d.arm_variance(v.s_t, v.s_plus_t) / d.n_t
        + d.arm_variance(v.s_c, v.s_plus_c) / d.n_c
        + d.cbr_scale_sq() * (v.s_plus_t / d.m_t + v.s_plus_c / d.m_c))
}

/// Leading terms of `var(delta)` under no interference and what is left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SutvaVariance {
    /// `S_t/n_cr,t + S_c/n_cr,c - S_tc/n_cr`.
    pub sigma2_cr: f64,
    /// `(m_cbr/n_cbr)^2 (S+_t/m_cbr,t + S+_c/m_cbr,c - S+_tc/m_cbr)`.
    pub sigma2_cbr: f64,
    /// `M/(n_cr n_cbr) S+_tc`.
    pub cross: f64,
    pub leading: f64,
    /// Bound on `|exact - leading|`:
    /// `sum_k |c_k| (n_cbr S_k + m_cbr S+_k) / (N (n_cr - 1))` over
    /// `(c_k, k) = (1/n_cr,t, t), (1/n_cr,c, c), (-1/n_cr, tc)`.
    pub remainder_bound: f64,
    pub exact: f64,
}

pub fn theoretical_sutva_variance(table: &PotentialTable, clustering: &Clustering, counts: &DesignCounts) -> Result<SutvaVariance> {
    let d = Design::new(counts, clustering)?;
    let v = VarianceComponents::from_table(table, clustering)?;
    let sigma2_cr = v.s_t / d.n_t + v.s_c / d.n_c - v.s_tc / d.n_cr;
    let sigma2_cbr = d.cbr_scale_sq() * (v.s_plus_t / d.m_t + v.s_plus_c / d.m_c - v.s_plus_tc / d.m_cbr);
    let cross = d.m / (d.n_cr * d.n_cbr) * v.s_plus_tc;
    let scale = d.n * (d.n_cr - 1.0);
    let remainder_bound = [(1.0 / d.n_t, v.s_t, v.s_plus_t), (1.0 / d.n_c, v.s_c, v.s_plus_c), (1.0 / d.n_cr, v.s_tc, v.s_plus_tc)]
        .iter()
        .map(|(c, s, sp)| c * (d.n_cbr * s + d.m_cbr * sp) / scale)
        .sum();
    Ok(SutvaVariance {
        sigma2_cr,
        sigma2_cbr,
        cross,
        leading: sigma2_cr + sigma2_cbr + cross,
        remainder_bound,
        exact: exact_sutva_variance(table, clustering, counts)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::CrMechanism;

    fn design8() -> (Clustering, DesignCounts, HierarchicalAssignment) {
        let c = Clustering::blocks(8, 2).unwrap();
        let counts = DesignCounts::symmetric(8, 2).unwrap();
        let omega = vec![true, false, true, false, true, false, true, false];
        let mut z = vec![false; 16];
        for u in [0, 4, 5, 9, 2, 3, 14, 15] {
            z[u] = true;
        }
        let a = HierarchicalAssignment::from_parts(&c, omega, z, counts, CrMechanism::Complete).unwrap();
        (c, counts, a)
    }

    /// Buckets written out by hand and variances computed long-hand.
    #[test]
    fn bound_matches_long_hand() {
        let (c, _, a) = design8();
        let y: Vec<f64> = (0..16).map(|u| ((u * 5 + 3) % 7) as f64 + 0.5 * u as f64).collect();
        let cr_t: Vec<f64> = [0, 4, 5, 9].iter().map(|&u| y[u]).collect();
        let cr_c: Vec<f64> = [1, 8, 12, 13].iter().map(|&u| y[u]).collect();
        let cbr_t: Vec<f64> = [(2, 3), (14, 15)].iter().map(|&(p, q)| y[p] + y[q]).collect();
        let cbr_c: Vec<f64> = [(6, 7), (10, 11)].iter().map(|&(p, q)| y[p] + y[q]).collect();
        fn var(v: &[f64]) -> f64 {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
        }
        let expected = var(&cr_t) / 4.0 + var(&cr_c) / 4.0 + 0.25 * (var(&cbr_t) / 2.0 + var(&cbr_c) / 2.0);
        let got = empirical_variance_bound(&c, &a, &y).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert_eq!(empirical_variance_bound(&c, &a, &[2.0; 16]).unwrap(), 0.0);
    }

    #[test]
    fn bound_needs_two_per_bucket() {
        let c = Clustering::blocks(4, 2).unwrap();
        let counts = DesignCounts::symmetric(4, 2).unwrap();
        let a = crate::assign::hierarchical_assign(&c, &counts, 1, CrMechanism::Complete).unwrap();
        assert!(empirical_variance_bound(&c, &a, &[0.0; 8]).is_err());
    }

    #[test]
    fn fisher_constant_and_shift() {
        let (c, counts, _) = design8();
        assert_eq!(fisher_null_variance(&[4.0; 16], &c, &counts).unwrap(), 0.0);
        let y: Vec<f64> = (0..16).map(|u| (u * u % 7) as f64).collect();
        let shifted: Vec<f64> = y.iter().map(|v| v + 1e3).collect();
        let a = fisher_null_variance(&y, &c, &counts).unwrap();
        let b = fisher_null_variance(&shifted, &c, &counts).unwrap();
        assert!((a - b).abs() < 1e-9 * a);
    }

    #[test]
    fn fisher_is_exact_variance_with_equal_columns() {
        let (c, counts, _) = design8();
        let y: Vec<f64> = (0..16).map(|u| ((u * 3) % 5) as f64 - 0.1 * u as f64).collect();
        let t = PotentialTable::new(y.clone(), y.clone()).unwrap();
        let a = fisher_null_variance(&y, &c, &counts).unwrap();
        let b = exact_sutva_variance(&t, &c, &counts).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn constant_effect_leading_terms() {
        let (c, counts, _) = design8();
        let y0: Vec<f64> = (0..16).map(|u| (u % 5) as f64).collect();
        let t = PotentialTable::constant_effect(y0, 2.0).unwrap();
        let v = theoretical_sutva_variance(&t, &c, &counts).unwrap();
        assert_eq!(v.cross, 0.0);
        assert!((v.leading - v.sigma2_cr - v.sigma2_cbr).abs() < 1e-15);
        assert!((v.exact - v.leading).abs() <= v.remainder_bound);
    }

    #[test]
    fn bound_gap_sign_follows_effect_clustering() {
        let (c, counts, _) = design8();
        let y0: Vec<f64> = (0..16).map(|u| ((u * 7) % 5) as f64).collect();
        let gap = |effects: Vec<f64>| {
            let t = PotentialTable::new(y0.iter().zip(&effects).map(|(a, b)| a + b).collect(), y0.clone()).unwrap();
            expected_variance_bound(&t, &c, &counts).unwrap() - exact_sutva_variance(&t, &c, &counts).unwrap()
        };
        // effects constant within clusters, varying between them
        assert!(gap((0..16).map(|u| (u / 2) as f64).collect()) < 0.0);
        // effects alternating inside every cluster
        assert!(gap((0..16).map(|u| (u % 2) as f64).collect()) > 0.0);
        assert!(gap(vec![1.5; 16]).abs() < 1e-12);
    }
}
