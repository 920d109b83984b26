//! Exact checks run by the `oracle` command. Each returns the raw values it
//! compared so callers can apply their own tolerances.

use serde::{Deserialize, Serialize};

use interference_core::estimate::{expected_variance_bound, fisher_null_variance};
use interference_core::oracle::{
    bernoulli_vs_cr_variance_gap, binomial_negative_moment, enumerate_moments, linear_model_expectations, EnumDesign,
    EnumerationSpec, Moments, OutcomeSource, Statistic,
};
use interference_core::outcomes::PotentialTable;
use interference_core::partition::clustering_metrics;
use interference_core::{Clustering, Result, SeedStream};

use crate::design::DesignFixture;

pub const EXACT_TOL: f64 = 1e-12;
pub const VARIANCE_TOL: f64 = 1e-10;

fn moments(clustering: &Clustering, design: EnumDesign, outcomes: OutcomeSource, statistics: Vec<Statistic>) -> Result<Vec<Moments>> {
    enumerate_moments(&EnumerationSpec { clustering, design, outcomes, statistics })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Unbiasedness {
    pub tau: f64,
    pub tau_cr_mean: f64,
    pub tau_cbr_mean: f64,
    pub delta_mean: f64,
    /// Difference in means under complete randomization of all units.
    pub complete_mean: f64,
    /// Horvitz-Thompson estimate under cluster randomization.
    pub cluster_mean: f64,
    pub assignments: u128,
    pub max_abs_error: f64,
}

/// Exact means of every estimator over a random table.
pub fn unbiasedness(fx: &DesignFixture, seed: u64) -> Result<Unbiasedness> {
    let c = fx.clustering()?;
    let table = fx.table(seed, 0)?;
    let tau = table.tau();
    let h = moments(
        &c,
        EnumDesign::Hierarchical(fx.counts()?),
        OutcomeSource::Table(&table),
        vec![Statistic::TauCr, Statistic::TauCbr, Statistic::Delta],
    )?;
    let cr = moments(&c, EnumDesign::Complete { n_t: fx.num_units() / 2 }, OutcomeSource::Table(&table), vec![Statistic::DiffInMeans])?;
    let cl = moments(&c, EnumDesign::Cluster { m_t: fx.num_clusters / 2 }, OutcomeSource::Table(&table), vec![Statistic::HorvitzThompson])?;
    let errors = [h[0].mean - tau, h[1].mean - tau, h[2].mean, cr[0].mean - tau, cl[0].mean - tau];
    Ok(Unbiasedness {
        tau,
        tau_cr_mean: h[0].mean,
        tau_cbr_mean: h[1].mean,
        delta_mean: h[2].mean,
        complete_mean: cr[0].mean,
        cluster_mean: cl[0].mean,
        assignments: h[0].outcomes,
        max_abs_error: errors.iter().fold(0.0, |a, e| a.max(e.abs())),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearMeans {
    pub rho_c: f64,
    /// `beta - gamma / (N - 1)`.
    pub complete_closed_form: f64,
    pub complete_enumerated: f64,
    /// `beta + gamma (rho_C M - 1) / (M - 1)`.
    pub cluster_closed_form: f64,
    pub cluster_enumerated: f64,
    /// Arm estimators of the hierarchical design against their exact
    /// closed forms.
    pub hierarchical_tau_cr_closed_form: f64,
    pub hierarchical_tau_cr_enumerated: f64,
    pub hierarchical_tau_cbr_closed_form: f64,
    pub hierarchical_tau_cbr_enumerated: f64,
    pub max_abs_error: f64,
}

/// Means under the noise-free linear model.
pub fn linear_means(fx: &DesignFixture) -> Result<LinearMeans> {
    let c = fx.clustering()?;
    let g = fx.graph()?;
    let model = fx.model();
    let src = || OutcomeSource::Linear { model, graph: &g };
    let n = fx.num_units() as f64;
    let m = fx.num_clusters as f64;
    let rho_c = clustering_metrics(&g, &c)?.rho_c;
    let complete = moments(&c, EnumDesign::Complete { n_t: fx.num_units() / 2 }, src(), vec![Statistic::DiffInMeans])?[0].mean;
    let cluster = moments(&c, EnumDesign::Cluster { m_t: fx.num_clusters / 2 }, src(), vec![Statistic::HorvitzThompson])?[0].mean;
    let counts = fx.counts()?;
    let h = moments(&c, EnumDesign::Hierarchical(counts), src(), vec![Statistic::TauCr, Statistic::TauCbr])?;
    let exact = linear_model_expectations(&model, &g, &c, &counts)?;
    let complete_closed_form = model.beta - model.gamma / (n - 1.0);
    let cluster_closed_form = model.beta + model.gamma * (rho_c * m - 1.0) / (m - 1.0);
    let errors = [
        complete - complete_closed_form,
        cluster - cluster_closed_form,
        h[0].mean - exact.tau_cr,
        h[1].mean - exact.tau_cbr,
    ];
    Ok(LinearMeans {
        rho_c,
        complete_closed_form,
        complete_enumerated: complete,
        cluster_closed_form,
        cluster_enumerated: cluster,
        hierarchical_tau_cr_closed_form: exact.tau_cr,
        hierarchical_tau_cr_enumerated: h[0].mean,
        hierarchical_tau_cbr_closed_form: exact.tau_cbr,
        hierarchical_tau_cbr_enumerated: h[1].mean,
        max_abs_error: errors.iter().fold(0.0, |a, e| a.max(e.abs())),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NullVariance {
    pub tables: usize,
    pub max_abs_error: f64,
    /// First table's values.
    pub formula: f64,
    pub enumerated: f64,
}

/// Closed-form `var(delta)` under Fisher's null against enumeration.
pub fn null_variance(fx: &DesignFixture, seed: u64, tables: usize) -> Result<NullVariance> {
    let c = fx.clustering()?;
    let counts = fx.counts()?;
    let mut out = NullVariance { tables, max_abs_error: 0.0, formula: f64::NAN, enumerated: f64::NAN };
    for k in 0..tables {
        let y = fx.table(seed, k as u64)?.y0().to_vec();
        let null = PotentialTable::new(y.clone(), y.clone())?;
        let enumerated = moments(&c, EnumDesign::Hierarchical(counts), OutcomeSource::Table(&null), vec![Statistic::Delta])?[0].variance;
        let formula = fisher_null_variance(&y, &c, &counts)?;
        if k == 0 {
            out.formula = formula;
            out.enumerated = enumerated;
        }
        out.max_abs_error = out.max_abs_error.max((formula - enumerated).abs());
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundTable {
    pub index: usize,
    pub expected_bound: f64,
    pub var_delta: f64,
    /// Exact `E(bound)` from its closed form, as a cross-check of the
    /// enumeration.
    pub expected_bound_closed_form: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundCheck {
    pub tables: Vec<BoundTable>,
    /// Tables with `E(bound) < var(delta) - 1e-10`.
    pub violations: usize,
    /// Smallest `(E(bound) - var(delta)) / var(delta)`.
    pub worst_relative_gap: f64,
    /// `|E(bound) - var(delta)|` maximized over constant-effect tables.
    pub constant_effect_max_abs_gap: f64,
    pub closed_form_max_abs_error: f64,
}

/// Expected variance bound against the exact variance of `delta`.
pub fn variance_bound(fx: &DesignFixture, seed: u64, tables: usize) -> Result<BoundCheck> {
    let c = fx.clustering()?;
    let counts = fx.counts()?;
    let exact = |t: &PotentialTable| -> Result<(f64, f64)> {
        let mo = moments(&c, EnumDesign::Hierarchical(counts), OutcomeSource::Table(t), vec![Statistic::Delta, Statistic::VarianceBound])?;
        Ok((mo[1].mean, mo[0].variance))
    };
    let mut out = BoundCheck {
        tables: Vec::with_capacity(tables),
        violations: 0,
        worst_relative_gap: f64::INFINITY,
        constant_effect_max_abs_gap: 0.0,
        closed_form_max_abs_error: 0.0,
    };
    for k in 0..tables {
        let t = fx.table(seed, k as u64)?;
        let (expected_bound, var_delta) = exact(&t)?;
        let closed = expected_variance_bound(&t, &c, &counts)?;
        if expected_bound < var_delta - VARIANCE_TOL {
            out.violations += 1;
        }
        out.worst_relative_gap = out.worst_relative_gap.min((expected_bound - var_delta) / var_delta);
        out.closed_form_max_abs_error = out.closed_form_max_abs_error.max((closed - expected_bound).abs());
        out.tables.push(BoundTable { index: k, expected_bound, var_delta, expected_bound_closed_form: closed });

        let constant = PotentialTable::constant_effect(t.y0().to_vec(), fx.table.effect)?;
        let (b, v) = exact(&constant)?;
        out.constant_effect_max_abs_gap = out.constant_effect_max_abs_gap.max((b - v).abs());
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BernoulliCheck {
    pub units: usize,
    pub tables: usize,
    pub within_bound: usize,
    /// Largest `|var_BR - var_CR| / bound`.
    pub max_gap_over_bound: f64,
    pub negative_moment: f64,
    /// `|E(1/eta_t) - 1/(N p)|`.
    pub negative_moment_error: f64,
    /// `5 / (N p)^2`.
    pub negative_moment_bound: f64,
}

/// Re-randomized Bernoulli with `p = 1/2` against complete randomization
/// with `units / 2` treated.
pub fn bernoulli(units: usize, effect: f64, heterogeneity: f64, seed: u64, tables: usize) -> Result<BernoulliCheck> {
    let root = SeedStream::new(seed).child("table");
    let mut within = 0;
    let mut max_ratio: f64 = 0.0;
    for k in 0..tables {
        let t = PotentialTable::random(units, effect, heterogeneity, &mut root.index(k as u64).rng())?;
        let gap = bernoulli_vs_cr_variance_gap(&t, units / 2)?;
        within += usize::from(gap.within_bound);
        max_ratio = max_ratio.max(gap.gap.abs() / gap.bound);
    }
    let np = units as f64 * 0.5;
    let negative_moment = binomial_negative_moment(units, 0.5)?;
    Ok(BernoulliCheck {
        units,
        tables,
        within_bound: within,
        max_gap_over_bound: max_ratio,
        negative_moment,
        negative_moment_error: (negative_moment - 1.0 / np).abs(),
        negative_moment_bound: 5.0 / (np * np),
    })
}
