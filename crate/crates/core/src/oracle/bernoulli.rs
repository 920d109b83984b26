//! Re-randomized Bernoulli assignment: exact negative moment of the
//! treated count and the variance gap to complete randomization.

use serde::{Deserialize, Serialize};

use super::Combinations;
use crate::error::{Error, Result};
use crate::estimate::diff_in_means;
use crate::outcomes::PotentialTable;
use crate::stats::{sample_variance, NeumaierSum};

fn check(n: usize, p: f64) -> Result<()> {
    if n < 2 || !(p > 0.0 && p < 1.0) {
        return Err(Error::validation(format!("need n >= 2 and 0 < p < 1, got n={n}, p={p}")));
    }
    Ok(())
}

/// Binomial(n, p) probabilities for k = 0..=n.
fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut coef = 1.0;
    (0..=n)
        .map(|k| {
            if k > 0 {
                coef *= (n - k + 1) as f64 / k as f64;
            }
            coef * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
        })
        .collect()
}

/// `E(1 / eta_t)` where `eta_t` is Binomial(n, p) conditioned on
/// `1 <= eta_t <= n - 1`, by summing the pmf.
pub fn binomial_negative_moment(n: usize, p: f64) -> Result<f64> {
    check(n, p)?;
    let pmf = binomial_pmf(n, p);
    // the kept mass is summed rather than taken as 1 - p^n - (1-p)^n to
    // avoid cancellation
    let kept = pmf[1..n].iter().copied().collect::<NeumaierSum>().total();
    Ok((1..n).map(|k| pmf[k] / k as f64).collect::<NeumaierSum>().total() / kept)
}

/// Whether `p^n + (1-p)^n <= n^-2 <= 1/4`, the condition under which the
/// negative moment is within `5 / (n p)^2` of `1 / (n p)`.
pub fn negative_moment_hypothesis(n: usize, p: f64) -> bool {
    let inv_sq = 1.0 / (n as f64 * n as f64);
    p.powi(n as i32) + (1.0 - p).powi(n as i32) <= inv_sq && inv_sq <= 0.25
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceGap {
    pub var_bernoulli: f64,
    pub var_complete: f64,
    pub gap: f64,
    /// `5 (S_t / n_t^2 + S_c / n_c^2)`.
    pub bound: f64,
    pub within_bound: bool,
}

/// Exact variances of the difference in means under re-randomized
/// Bernoulli (`p = n_t / N`) and complete randomization, by visiting all
/// `2^N` and `C(N, n_t)` assignments.
pub fn bernoulli_vs_cr_variance_gap(table: &PotentialTable, n_t: usize) -> Result<VarianceGap> {
    let n = table.num_units();
    if n > 20 {
        return Err(Error::Size(format!("{n} units; Bernoulli enumeration is limited to 20")));
    }
    if n_t == 0 || n_t >= n {
        return Err(Error::validation(format!("{n_t} treated of {n} units")));
    }
    let p = n_t as f64 / n as f64;
    if !negative_moment_hypothesis(n, p) {
        return Err(Error::validation(format!(
            "p^N + (1-p)^N <= N^-2 <= 1/4 fails for N={n}, p={p}; the gap bound does not apply"
        )));
    }
    let kept = 1.0 - p.powi(n as i32) - (1.0 - p).powi(n as i32);
    let mut weighted = Vec::with_capacity(1 << n);
    for mask in 1u32..(1u32 << n) - 1 {
        let z: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let k = mask.count_ones() as i32;
        let w = p.powi(k) * (1.0 - p).powi(n as i32 - k) / kept;
        weighted.push((w, diff_in_means(&table_outcomes(table, &z), &z)?));
    }
    let mean_br: f64 = weighted.iter().map(|(w, v)| w * v).collect::<NeumaierSum>().total();
    let var_bernoulli = weighted.iter().map(|(w, v)| w * (v - mean_br).powi(2)).collect::<NeumaierSum>().total();

    let mut values = Vec::new();
    for treated in Combinations::new(n, n_t) {
        let mut z = vec![false; n];
        treated.iter().for_each(|&i| z[i] = true);
        values.push(diff_in_means(&table_outcomes(table, &z), &z)?);
    }
    let mean_cr = crate::stats::mean(&values);
    let var_complete = values.iter().map(|v| (v - mean_cr).powi(2)).collect::<NeumaierSum>().total() / values.len() as f64;

    let n_c = (n - n_t) as f64;
    let s_t = sample_variance(table.y1()).expect("two units");
    let s_c = sample_variance(table.y0()).expect("two units");
    let bound = 5.0 * (s_t / (n_t * n_t) as f64 + s_c / (n_c * n_c));
    let gap = var_bernoulli - var_complete;
    Ok(VarianceGap { var_bernoulli, var_complete, gap, bound, within_bound: gap.abs() <= bound })
}

fn table_outcomes(table: &PotentialTable, z: &[bool]) -> Vec<f64> {
    z.iter()
        .enumerate()
        .map(|(i, &t)| if t { table.y1()[i] } else { table.y0()[i] })
        .collect()
}
