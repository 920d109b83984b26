//! Estimators, variance quantities, p-values and test decisions.

mod interference;
mod variance;

pub use interference::{interference_variance_approx, interference_variance_terms, InterferenceVarianceTerms};
pub use variance::{
    empirical_variance_bound, exact_sutva_variance, expected_variance_bound, fisher_null_variance, theoretical_sutva_variance, SutvaVariance,
    VarianceComponents,
};

use serde::{Deserialize, Serialize};

use crate::assign::{DesignCounts, HierarchicalAssignment, StratumAssignment};
use crate::error::{Error, Result};
use crate::partition::Clustering;
use crate::stats::{mean, two_sided_normal_p};

/// `mean(y | z) - mean(y | !z)`.
pub fn diff_in_means(y: &[f64], z: &[bool]) -> Result<f64> {
    if y.len() != z.len() {
        return Err(Error::validation(format!("{} outcomes for {} treatments", y.len(), z.len())));
    }
    let (t, c): (Vec<(f64, bool)>, Vec<(f64, bool)>) = y.iter().copied().zip(z.iter().copied()).partition(|p| p.1);
    if t.is_empty() || c.is_empty() {
        return Err(Error::validation("difference in means needs treated and control units"));
    }
    let t: Vec<f64> = t.into_iter().map(|p| p.0).collect();
    let c: Vec<f64> = c.into_iter().map(|p| p.0).collect();
    Ok(mean(&t) - mean(&c))
}

/// `(m/n) * (mean treated cluster sum - mean control cluster sum)`.
pub fn horvitz_thompson_cluster(y_plus: &[f64], z: &[bool], m: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::validation("unit count must be positive"));
    }
    Ok(m as f64 / n as f64 * diff_in_means(y_plus, z)?)
}

/// Outcomes grouped by arm and treatment; cluster-randomized buckets hold
/// cluster sums.
#[derive(Clone, Debug, Default)]
pub(crate) struct Buckets {
    pub cr_t: Vec<f64>,
    pub cr_c: Vec<f64>,
    pub cbr_t: Vec<f64>,
    pub cbr_c: Vec<f64>,
}

impl Buckets {
    pub(crate) fn collect(clustering: &Clustering, assignment: &HierarchicalAssignment, y: &[f64]) -> Result<Self> {
        if y.len() != clustering.num_units() || assignment.z().len() != y.len() {
            return Err(Error::validation(format!(
                "{} outcomes for {} units",
                y.len(),
                clustering.num_units()
            )));
        }
        let mut b = Buckets::default();
        for (u, &v) in y.iter().enumerate() {
            if assignment.w()[u] {
                if assignment.z()[u] { &mut b.cr_t } else { &mut b.cr_c }.push(v);
            }
        }
        let sums = clustering.cluster_sums(y);
        for (c, bit) in assignment.z_cbr().iter().enumerate() {
            match bit {
                Some(true) => b.cbr_t.push(sums[c]),
                Some(false) => b.cbr_c.push(sums[c]),
                None => {}
            }
        }
        Ok(b)
    }

    fn require(&self, min: usize) -> Result<()> {
        for (name, v) in [("treated completely randomized units", &self.cr_t), ("control completely randomized units", &self.cr_c), ("treated cluster-randomized clusters", &self.cbr_t), ("control cluster-randomized clusters", &self.cbr_c)] {
            if v.len() < min {
                return Err(Error::validation(format!("{} {name}; at least {min} needed", v.len())));
            }
        }
        Ok(())
    }
}

/// Arm estimates and their difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub tau_cr: f64,
    pub tau_cbr: f64,
    pub delta: f64,
}

/// Difference in means over the completely randomized arm minus the
/// cluster-level Horvitz-Thompson estimate over the other arm.
pub fn delta_statistic(clustering: &Clustering, assignment: &HierarchicalAssignment, y: &[f64]) -> Result<DeltaEstimate> {
    let b = Buckets::collect(clustering, assignment, y)?;
    b.require(1)?;
    let counts = assignment.counts();
    let tau_cr = mean(&b.cr_t) - mean(&b.cr_c);
    let tau_cbr = counts.m_cbr as f64 / counts.n_cbr as f64 * (mean(&b.cbr_t) - mean(&b.cbr_c));
    Ok(DeltaEstimate { tau_cr, tau_cbr, delta: tau_cr - tau_cbr })
}

/// `(sum_s w_s delta_s, sum_s w_s^2 var_s)` with `w_s = M(s) / M`.
pub fn stratified_delta(deltas: &[f64], sigma_hat_sqs: &[f64], strata_sizes: &[usize]) -> Result<(f64, f64)> {
    if deltas.len() != strata_sizes.len() || sigma_hat_sqs.len() != strata_sizes.len() || strata_sizes.is_empty() {
        return Err(Error::validation(format!(
            "{} deltas and {} variances for {} strata",
            deltas.len(),
            sigma_hat_sqs.len(),
            strata_sizes.len()
        )));
    }
    let m: usize = strata_sizes.iter().sum();
    let mut delta = 0.0;
    let mut var = 0.0;
    for s in 0..strata_sizes.len() {
        let w = strata_sizes[s] as f64 / m as f64;
        delta += w * deltas[s];
        var += w * w * sigma_hat_sqs[s];
    }
    Ok((delta, var))
}

/// Two-sided standard normal p-value of `delta / sigma`.
pub fn gaussian_p_value(delta: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::validation(format!("standard deviation must be positive, got {sigma}")));
    }
    Ok(two_sided_normal_p(delta / sigma))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    FailToReject,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Distribution-free: reject when `|delta| >= sqrt(var / alpha)`.
    #[default]
    Chebyshev,
    /// Reject when the two-sided normal p-value is at most `alpha`.
    Gaussian,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation(format!("level alpha must be in (0, 1), got {alpha}")));
    }
    Ok(())
}

pub fn chebyshev_decision(delta: f64, sigma_hat_sq: f64, alpha: f64) -> Result<Decision> {
    check_alpha(alpha)?;
    if !(sigma_hat_sq > 0.0) {
        return Err(Error::validation(format!("variance bound must be positive, got {sigma_hat_sq}")));
    }
    Ok(if delta.abs() >= (sigma_hat_sq / alpha).sqrt() { Decision::Reject } else { Decision::FailToReject })
}

/// Full result of testing for interference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tau_cr: f64,
    pub tau_cbr: f64,
    pub delta: f64,
    pub sigma_hat_sq: f64,
    /// `None` when the variance bound is zero.
    pub t_stat: Option<f64>,
    pub p_chebyshev: f64,
    pub p_gaussian: f64,
    pub alpha: f64,
    pub rule: DecisionRule,
    pub decision: Decision,
    pub stratified: bool,
    pub counts: Vec<DesignCounts>,
    /// Realized treated units in each completely randomized arm.
    pub cr_treated: Vec<usize>,
}

impl AnalysisReport {
    /// With a zero variance bound the test is degenerate: `delta == 0`
    /// gives p = 1, any other `delta` gives p = 0.
    #[allow(clippy::too_many_arguments)]
    pub fn from_estimates(
        tau_cr: f64,
        tau_cbr: f64,
        delta: f64,
        sigma_hat_sq: f64,
        alpha: f64,
        rule: DecisionRule,
        counts: Vec<DesignCounts>,
        cr_treated: Vec<usize>,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        if !(sigma_hat_sq >= 0.0) || !delta.is_finite() {
            return Err(Error::validation(format!("invalid estimates: delta={delta}, variance={sigma_hat_sq}")));
        }
        let (t_stat, p_chebyshev, p_gaussian) = if sigma_hat_sq > 0.0 {
            let t = delta / sigma_hat_sq.sqrt();
            (Some(t), (1.0 / (t * t)).min(1.0), two_sided_normal_p(t))
        } else {
            let p = if delta == 0.0 { 1.0 } else { 0.0 };
            (None, p, p)
        };
        let decision = match (rule, sigma_hat_sq > 0.0) {
            (DecisionRule::Chebyshev, true) => chebyshev_decision(delta, sigma_hat_sq, alpha)?,
            (DecisionRule::Gaussian, true) if p_gaussian <= alpha => Decision::Reject,
            (_, false) if delta != 0.0 => Decision::Reject,
            _ => Decision::FailToReject,
        };
        Ok(Self {
            tau_cr,
            tau_cbr,
            delta,
            sigma_hat_sq,
            t_stat,
            p_chebyshev,
            p_gaussian,
            alpha,
            rule,
            decision,
            stratified: false,
            counts,
            cr_treated,
        })
    }
}

pub fn analyze(
    clustering: &Clustering,
    assignment: &HierarchicalAssignment,
    y: &[f64],
    alpha: f64,
    rule: DecisionRule,
) -> Result<AnalysisReport> {
    let d = delta_statistic(clustering, assignment, y)?;
    let v = empirical_variance_bound(clustering, assignment, y)?;
    AnalysisReport::from_estimates(d.tau_cr, d.tau_cbr, d.delta, v, alpha, rule, vec![*assignment.counts()], vec![assignment.cr_treated()])
}

/// Analyzes every stratum and combines with cluster-share weights. `y` is
/// indexed by global unit id.
pub fn analyze_stratified(parts: &[StratumAssignment], y: &[f64], alpha: f64, rule: DecisionRule) -> Result<AnalysisReport> {
    if parts.is_empty() {
        return Err(Error::validation("no strata to analyze"));
    }
    let mut deltas = Vec::new();
    let mut vars = Vec::new();
    let mut sizes = Vec::new();
    let (mut tau_cr, mut tau_cbr) = (Vec::new(), Vec::new());
    for p in parts {
        let local: Vec<f64> = p
            .units
            .iter()
            .map(|&u| y.get(u).copied().ok_or_else(|| Error::validation(format!("no outcome for unit {u}"))))
            .collect::<Result<_>>()?;
        let d = delta_statistic(&p.clustering, &p.assignment, &local).map_err(|e| e.in_stratum(p.stratum))?;
        let v = empirical_variance_bound(&p.clustering, &p.assignment, &local).map_err(|e| e.in_stratum(p.stratum))?;
        deltas.push(d.delta);
        vars.push(v);
        tau_cr.push(d.tau_cr);
        tau_cbr.push(d.tau_cbr);
        sizes.push(p.clusters.len());
    }
    let (delta, var) = stratified_delta(&deltas, &vars, &sizes)?;
    // the arm estimates combine with the same weights as delta
    let (tau_cr, _) = stratified_delta(&tau_cr, &vars, &sizes)?;
    let (tau_cbr, _) = stratified_delta(&tau_cbr, &vars, &sizes)?;
    let mut report = AnalysisReport::from_estimates(
        tau_cr,
        tau_cbr,
        delta,
        var,
        alpha,
        rule,
        parts.iter().map(|p| *p.assignment.counts()).collect(),
        parts.iter().map(|p| p.assignment.cr_treated()).collect(),
    )?;
    report.stratified = true;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::{hierarchical_assign, CrMechanism};

    #[test]
    fn diff_in_means_arithmetic() {
        assert_eq!(diff_in_means(&[2.0, 1.0, 4.0, 3.0], &[true, false, true, false]).unwrap(), 1.0);
        assert_eq!(diff_in_means(&[5.0; 4], &[true, false, true, false]).unwrap(), 0.0);
        assert!(diff_in_means(&[1.0, 2.0], &[true, true]).is_err());
    }

    #[test]
    fn horvitz_thompson_arithmetic() {
        assert_eq!(horvitz_thompson_cluster(&[4.0, 2.0], &[true, false], 2, 4).unwrap(), 1.0);
        assert_eq!(horvitz_thompson_cluster(&[3.0, 3.0, 3.0], &[true, false, false], 3, 9).unwrap(), 0.0);
        assert!(horvitz_thompson_cluster(&[1.0, 2.0], &[false, false], 2, 4).is_err());
    }

    #[test]
    fn delta_by_hand() {
        let c = Clustering::blocks(4, 2).unwrap();
        let counts = DesignCounts::symmetric(4, 2).unwrap();
        let omega = vec![true, false, true, false];
        let z = vec![true, false, false, false, false, true, true, true];
        let a = HierarchicalAssignment::from_parts(&c, omega, z, counts, CrMechanism::Complete).unwrap();
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let d = delta_statistic(&c, &a, &y).unwrap();
        // cr arm: units 0,1,4,5 with treated 0 and 5 -> (1+6)/2 - (2+5)/2 = 0
        assert_eq!(d.tau_cr, 0.0);
        // cbr arm: cluster 3 treated (15), cluster 1 control (7) -> (2/4)*8
        assert_eq!(d.tau_cbr, 4.0);
        assert_eq!(d.delta, -4.0);
        assert_eq!(delta_statistic(&c, &a, &[3.0; 8]).unwrap().delta, 0.0);
    }

    #[test]
    fn stratified_combination() {
        assert_eq!(stratified_delta(&[1.5], &[2.0], &[7]).unwrap(), (1.5, 2.0));
        assert_eq!(stratified_delta(&[1.0, -1.0], &[2.0, 6.0], &[4, 4]).unwrap(), (0.0, 2.0));
        let (d, _) = stratified_delta(&[1.0, 1.0, 1.0], &[0.0; 3], &[3, 5, 11]).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        assert!(stratified_delta(&[1.0], &[1.0], &[2, 2]).is_err());
    }

    #[test]
    fn gaussian_p_values() {
        assert!((gaussian_p_value(-3.3, 8.1).unwrap() - 0.684).abs() < 0.01);
        assert_eq!(gaussian_p_value(0.0, 2.0).unwrap(), 1.0);
        assert!((gaussian_p_value(1.959964 * 3.0, 3.0).unwrap() - 0.05).abs() < 1e-6);
        assert!(gaussian_p_value(1.0, 0.0).is_err());
    }

    #[test]
    fn chebyshev_threshold() {
        assert_eq!(chebyshev_decision(4.48, 1.0, 0.05).unwrap(), Decision::Reject);
        assert_eq!(chebyshev_decision(4.47, 1.0, 0.05).unwrap(), Decision::FailToReject);
        assert_eq!(chebyshev_decision(0.0, 1e-12, 0.5).unwrap(), Decision::FailToReject);
        assert!(chebyshev_decision(1.0, 1.0, 1.0).is_err());
        assert!(chebyshev_decision(1.0, 0.0, 0.05).is_err());
    }

    #[test]
    fn degenerate_report() {
        let r = AnalysisReport::from_estimates(1.0, 1.0, 0.0, 0.0, 0.05, DecisionRule::Chebyshev, vec![], vec![]).unwrap();
        assert_eq!((r.t_stat, r.p_chebyshev, r.p_gaussian, r.decision), (None, 1.0, 1.0, Decision::FailToReject));
        let r = AnalysisReport::from_estimates(1.0, 0.0, 1.0, 0.0, 0.05, DecisionRule::Gaussian, vec![], vec![]).unwrap();
        assert_eq!(r.decision, Decision::Reject);
    }

    fn sample_report(shift: f64, scale: f64) -> AnalysisReport {
        let c = Clustering::blocks(8, 3).unwrap();
        let counts = DesignCounts::symmetric(8, 3).unwrap();
        let a = hierarchical_assign(&c, &counts, 4, CrMechanism::Complete).unwrap();
        let y: Vec<f64> = (0..24)
            .map(|u| shift + scale * ((u * 7 % 11) as f64 + if a.z()[u] { 2.0 } else { 0.0 }))
            .collect();
        analyze(&c, &a, &y, 0.05, DecisionRule::Chebyshev).unwrap()
    }

    #[test]
    fn translation_and_scale() {
        let base = sample_report(0.0, 1.0);
        let shifted = sample_report(100.0, 1.0);
        assert!((base.delta - shifted.delta).abs() < 1e-9);
        assert!((base.sigma_hat_sq - shifted.sigma_hat_sq).abs() < 1e-8);
        assert_eq!(base.decision, shifted.decision);
        let scaled = sample_report(0.0, -3.0);
        assert!((scaled.delta + 3.0 * base.delta).abs() < 1e-9);
        assert!((scaled.sigma_hat_sq - 9.0 * base.sigma_hat_sq).abs() < 1e-8);
        assert!((scaled.t_stat.unwrap() + base.t_stat.unwrap()).abs() < 1e-9);
        assert_eq!(base.decision, scaled.decision);
    }

    #[test]
    fn stratified_analysis_matches_single_stratum() {
        use crate::assign::stratified_hierarchical_assign;
        use crate::partition::Stratification;
        let c = Clustering::blocks(8, 3).unwrap();
        let strata = Stratification::single(8).unwrap();
        let counts = DesignCounts::symmetric(8, 3).unwrap();
        let parts = stratified_hierarchical_assign(&c, &strata, &[counts], 5, CrMechanism::Complete).unwrap();
        let y: Vec<f64> = (0..24).map(|u| (u * u % 13) as f64).collect();
        let r = analyze_stratified(&parts, &y, 0.05, DecisionRule::Chebyshev).unwrap();
        let direct = analyze(&parts[0].clustering, &parts[0].assignment, &parts[0].units.iter().map(|&u| y[u]).collect::<Vec<_>>(), 0.05, DecisionRule::Chebyshev).unwrap();
        assert!((r.delta - direct.delta).abs() < 1e-12);
        assert!((r.sigma_hat_sq - direct.sigma_hat_sq).abs() < 1e-12);
        assert!(r.stratified);
    }
}
