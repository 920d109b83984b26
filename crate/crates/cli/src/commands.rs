use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use interference_core::assign::{
    hierarchical_assign, stratified_hierarchical_assign, symmetric_stratum_counts, CrMechanism, DesignCounts,
    HierarchicalAssignment, StratumAssignment,
};
use interference_core::estimate::{analyze as analyze_design, analyze_stratified, gaussian_p_value, AnalysisReport, Decision, DecisionRule};
use interference_core::graph::{generate_sbm, load_edge_list};
use interference_core::outcomes::{realize_linear, realize_sutva, LinearInterferenceModel};
use interference_core::partition::{
    clustering_metrics, ldg_restream_traced, rebalance, stratify_clusters, ClusterFeatures, StrataSizing,
};
use interference_core::sim::{check_report, run_study, SimConfig, SimReport, Study, Violation};
use interference_core::{Clustering, ClusteringMetrics, SbmSpec};

use crate::checks;
use crate::design::DesignFixture;
use crate::error::{CliError, CliResult};
use crate::io::{self, Arm, AssignmentRow};
use crate::manifest::{Envelope, RunManifest};
use crate::{
    AnalyzeArgs, AssignArgs, CheckArg, ClusterArgs, GenerateArgs, MechanismArg, OracleArgs, OutcomesArgs, RuleArg,
    SimulateArgs, StratifyArgs, StudyArg,
};

pub const BUNDLED_DESIGN: &str = include_str!("../fixtures/design_8.json");
/// Default for the variance-bound check: the bound needs two treated and
/// two control clusters in the cluster-randomized arm.
pub const BUNDLED_BOUND_DESIGN: &str = include_str!("../fixtures/design_16.json");

impl From<MechanismArg> for CrMechanism {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Complete => CrMechanism::Complete,
            MechanismArg::Bernoulli => CrMechanism::Bernoulli,
        }
    }
}

impl From<RuleArg> for DecisionRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Chebyshev => DecisionRule::Chebyshev,
            RuleArg::Gaussian => DecisionRule::Gaussian,
        }
    }
}

fn write_envelope<T: Serialize>(path: &Path, manifest: &RunManifest, payload: T) -> CliResult<()> {
    io::write_json(path, &Envelope { manifest, payload })
}

#[derive(Serialize)]
struct MetricsPayload<'a, T: Serialize> {
    metrics: &'a ClusteringMetrics,
    #[serde(flatten)]
    extra: T,
}

pub fn generate(a: &GenerateArgs) -> CliResult<()> {
    let spec: SbmSpec = io::read_json(&a.spec)?;
    let mut manifest = RunManifest::new("generate", a, Some(spec.seed));
    manifest.input(&a.spec)?;
    let (graph, blocks) = generate_sbm(&spec)?;
    io::write_bytes(&a.edges_out, graph.to_edge_list().as_bytes())?;
    manifest.artifact(&a.edges_out);
    if let Some(p) = &a.clustering_out {
        io::write_clustering(p, &blocks)?;
        manifest.artifact(p);
    }
    let metrics = clustering_metrics(&graph, &blocks)?;
    if let Some(p) = &a.metrics_out {
        manifest.artifact(p);
        write_envelope(p, &manifest, MetricsPayload { metrics: &metrics, extra: serde_json::json!({ "spec": spec }) })?;
    }
    println!("{} units, {} edges, rho_c {:.4}", graph.num_units(), graph.num_edges(), metrics.rho_c);
    Ok(())
}

#[derive(Serialize)]
struct LdgTrace {
    capacity: usize,
    pass_internal_fraction: Vec<f64>,
    dropped_empty: usize,
    rebalanced: bool,
}

pub fn cluster(a: &ClusterArgs) -> CliResult<()> {
    let graph = load_edge_list(&a.edges)?;
    let mut manifest = RunManifest::new("cluster", a, Some(a.seed));
    manifest.input(&a.edges)?;
    let m = a.clusters as usize;
    let outcome = ldg_restream_traced(&graph, m, a.leniency, a.iterations as usize, a.seed)?;
    let clustering = if a.rebalance { rebalance(&graph, &outcome.clustering, m)? } else { outcome.clustering.clone() };
    let metrics = clustering_metrics(&graph, &clustering)?;
    io::write_clustering(&a.out, &clustering)?;
    manifest.artifact(&a.out);
    manifest.artifact(&a.metrics_out);
    let trace = LdgTrace {
        capacity: outcome.capacity,
        pass_internal_fraction: outcome.pass_internal_fraction,
        dropped_empty: outcome.dropped_empty,
        rebalanced: a.rebalance,
    };
    write_envelope(&a.metrics_out, &manifest, MetricsPayload { metrics: &metrics, extra: serde_json::json!({ "ldg": trace }) })?;
    println!(
        "{} clusters, internal edge fraction {:.4}, rho_c {:.4}, balance {:.3}",
        metrics.num_clusters, metrics.internal_edge_fraction, metrics.rho_c, metrics.balance_ratio
    );
    Ok(())
}

pub fn stratify(a: &StratifyArgs) -> CliResult<()> {
    let graph = load_edge_list(&a.edges)?;
    let clustering = io::read_clustering(&a.clustering)?;
    let mut manifest = RunManifest::new("stratify", a, None);
    manifest.input(&a.edges)?;
    manifest.input(&a.clustering)?;
    if graph.num_units() != clustering.num_units() {
        return Err(CliError::Usage(format!(
            "graph has {} units, clustering {}",
            graph.num_units(),
            clustering.num_units()
        )));
    }
    let mut features = ClusterFeatures::from_graph(&graph, &clustering);
    if let Some(p) = &a.covariates {
        manifest.input(p)?;
        features.covariates = io::read_covariates(p, clustering.num_clusters())?;
    }
    let sizing = a.multiple.map_or(StrataSizing::Balanced, StrataSizing::Multiple);
    let strata = stratify_clusters(&features, a.strata as usize, sizing)?;
    io::write_stratification(&a.out, &strata)?;
    println!("{} strata of sizes {:?}", strata.num_strata, strata.strata_sizes);
    Ok(())
}

#[derive(Serialize)]
struct StratumCounts {
    stratum: usize,
    clusters: Vec<usize>,
    counts: DesignCounts,
    cr_treated: usize,
}

#[derive(Serialize)]
struct CountsPayload {
    mechanism: CrMechanism,
    strata: Vec<StratumCounts>,
}

fn rows_for(clustering: &Clustering, assignment: &HierarchicalAssignment, units: Option<&[usize]>, stratum: usize, parent: &Clustering) -> Vec<AssignmentRow> {
    (0..clustering.num_units())
        .map(|local| {
            let unit_id = units.map_or(local, |u| u[local]);
            AssignmentRow {
                unit_id,
                cluster_id: parent.cluster_of(unit_id),
                stratum_id: stratum,
                arm: if assignment.w()[local] { Arm::Cr } else { Arm::Cbr },
                treatment: u8::from(assignment.z()[local]),
            }
        })
        .collect()
}

pub fn assign(a: &AssignArgs) -> CliResult<()> {
    let clustering = io::read_clustering(&a.clustering)?;
    let mut manifest = RunManifest::new("assign", a, Some(a.seed));
    manifest.input(&a.clustering)?;
    let mechanism = CrMechanism::from(a.mechanism);
    let explicit = match (a.m_cr, a.n_cr_t, a.m_cbr_t) {
        (Some(m_cr), Some(n_cr_t), Some(m_cbr_t)) => Some((m_cr, n_cr_t, m_cbr_t)),
        _ => None,
    };
    let mut rows = Vec::with_capacity(clustering.num_units());
    let mut strata_out = Vec::new();
    if let Some(p) = &a.stratification {
        manifest.input(p)?;
        if explicit.is_some() {
            return Err(CliError::Usage("explicit counts are not supported with a stratification".into()));
        }
        let strata = io::read_stratification(p)?;
        let counts = symmetric_stratum_counts(&clustering, &strata)?;
        let parts = stratified_hierarchical_assign(&clustering, &strata, &counts, a.seed, mechanism)?;
        for part in &parts {
            rows.extend(rows_for(&part.clustering, &part.assignment, Some(&part.units), part.stratum, &clustering));
            strata_out.push(StratumCounts {
                stratum: part.stratum,
                clusters: part.clusters.clone(),
                counts: *part.assignment.counts(),
                cr_treated: part.assignment.cr_treated(),
            });
        }
        rows.sort_by_key(|r| r.unit_id);
    } else {
        let size = clustering.require_balanced()?;
        let counts = match explicit {
            Some((m_cr, n_cr_t, m_cbr_t)) => DesignCounts::new(clustering.num_clusters(), size, m_cr, n_cr_t, m_cbr_t)?,
            None => DesignCounts::symmetric(clustering.num_clusters(), size)?,
        };
        let asg = hierarchical_assign(&clustering, &counts, a.seed, mechanism)?;
        rows = rows_for(&clustering, &asg, None, 0, &clustering);
        strata_out.push(StratumCounts {
            stratum: 0,
            clusters: (0..clustering.num_clusters()).collect(),
            counts,
            cr_treated: asg.cr_treated(),
        });
    }
    io::write_assignment(&a.out, &rows)?;
    manifest.artifact(&a.out);
    manifest.artifact(&a.counts_out);
    let treated = rows.iter().filter(|r| r.treatment == 1).count();
    write_envelope(&a.counts_out, &manifest, CountsPayload { mechanism, strata: strata_out })?;
    println!("{} units assigned, {treated} treated", rows.len());
    Ok(())
}

pub fn outcomes(a: &OutcomesArgs) -> CliResult<()> {
    let rows = io::read_assignment(&a.assignment)?;
    let z: Vec<bool> = rows.iter().map(|r| r.treatment == 1).collect();
    let y = match (&a.table, &a.edges, a.beta) {
        (Some(t), _, _) => realize_sutva(&io::read_table(t)?, &z, None)?.y,
        (None, Some(e), Some(beta)) => {
            let graph = load_edge_list(e)?;
            let model = LinearInterferenceModel { alpha: a.alpha, beta, gamma: a.gamma, noise_sd: a.noise_sd };
            realize_linear(&model, &graph, &z, a.seed, None)?.y
        }
        _ => return Err(CliError::Usage("give either --table or --edges with --beta".into())),
    };
    io::write_outcomes(&a.out, &y)?;
    println!("{} outcomes written", y.len());
    Ok(())
}

/// Delta and its standard deviation reported elsewhere.
#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
pub struct Summary {
    pub delta: f64,
    pub sigma: f64,
}

#[derive(Serialize)]
struct SummaryReport {
    delta: f64,
    sigma: f64,
    t_stat: f64,
    p_gaussian: f64,
    p_chebyshev: f64,
    alpha: f64,
    rule: DecisionRule,
    decision: Decision,
}

/// Rebuilds one stratum's design from its assignment rows. Counts are the
/// realized ones.
fn stratum_design(
    rows: &[AssignmentRow],
    clustering: &Clustering,
    clusters: Vec<usize>,
    stratum: usize,
    mechanism: CrMechanism,
) -> CliResult<StratumAssignment> {
    let (sub, units) = clustering.restrict(&clusters)?;
    let mut omega = vec![None; clusters.len()];
    let z: Vec<bool> = units.iter().map(|&u| rows[u].treatment == 1).collect();
    for (local, &u) in units.iter().enumerate() {
        let cr = rows[u].arm == Arm::Cr;
        let slot = &mut omega[sub.cluster_of(local)];
        if slot.is_some_and(|v| v != cr) {
            return Err(CliError::Usage(format!("cluster {} has units in both arms", rows[u].cluster_id)));
        }
        *slot = Some(cr);
    }
    let omega: Vec<bool> = omega.into_iter().map(|v| v.expect("non-empty cluster")).collect();
    let size = sub.require_balanced()?;
    let m_cr = omega.iter().filter(|&&b| b).count();
    let n_cr_t = (0..units.len()).filter(|&l| omega[sub.cluster_of(l)] && z[l]).count();
    let m_cbr_t = (0..omega.len()).filter(|&c| !omega[c] && z[sub.members(c)[0]]).count();
    let counts = DesignCounts::new(omega.len(), size, m_cr, n_cr_t, m_cbr_t).map_err(|e| e.in_stratum(stratum))?;
    let assignment = HierarchicalAssignment::from_parts(&sub, omega, z, counts, mechanism).map_err(|e| e.in_stratum(stratum))?;
    Ok(StratumAssignment { stratum, clusters, units, clustering: sub, assignment })
}

pub fn analyze(a: &AnalyzeArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("analyze", a, None);
    let rule = DecisionRule::from(a.rule);
    if let Some(p) = &a.summary {
        manifest.input(p)?;
        let s: Summary = io::read_json(p)?;
        let p_gaussian = gaussian_p_value(s.delta, s.sigma)?;
        let report = AnalysisReport::from_estimates(f64::NAN, f64::NAN, s.delta, s.sigma * s.sigma, a.alpha, rule, vec![], vec![])?;
        manifest.artifact(&a.out);
        let out = SummaryReport {
            delta: s.delta,
            sigma: s.sigma,
            t_stat: s.delta / s.sigma,
            p_gaussian,
            p_chebyshev: report.p_chebyshev,
            alpha: a.alpha,
            rule,
            decision: report.decision,
        };
        write_envelope(&a.out, &manifest, serde_json::json!({ "summary": out }))?;
        println!("delta {} sigma {}: p_gaussian {p_gaussian:.4}, p_chebyshev {:.4}", s.delta, s.sigma, report.p_chebyshev);
        return Ok(());
    }
    let (asg_path, y_path) = match (&a.assignment, &a.outcomes) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(CliError::Usage("--assignment and --outcomes are required".into())),
    };
    manifest.input(asg_path)?;
    manifest.input(y_path)?;
    let rows = io::read_assignment(asg_path)?;
    let y = io::read_outcomes(y_path, rows.len())?;
    let labels: Vec<usize> = rows.iter().map(|r| r.cluster_id).collect();
    let m = labels.iter().max().map_or(0, |&c| c + 1);
    let clustering = Clustering::new(labels, m)?;
    let mut stratum_of = vec![None; m];
    for r in &rows {
        let slot = &mut stratum_of[r.cluster_id];
        if slot.is_some_and(|s| s != r.stratum_id) {
            return Err(CliError::Usage(format!("cluster {} spans several strata", r.cluster_id)));
        }
        *slot = Some(r.stratum_id);
    }
    let strata: BTreeSet<usize> = stratum_of.iter().flatten().copied().collect();
    let mechanism = CrMechanism::from(a.mechanism);
    let report = if strata.len() == 1 {
        let part = stratum_design(&rows, &clustering, (0..m).collect(), 0, mechanism)?;
        analyze_design(&part.clustering, &part.assignment, &y, a.alpha, rule)?
    } else {
        let parts = strata
            .iter()
            .map(|&s| {
                let clusters = (0..m).filter(|&c| stratum_of[c] == Some(s)).collect();
                stratum_design(&rows, &clustering, clusters, s, mechanism)
            })
            .collect::<CliResult<Vec<_>>>()?;
        analyze_stratified(&parts, &y, a.alpha, rule)?
    };
    manifest.artifact(&a.out);
    write_envelope(&a.out, &manifest, serde_json::json!({ "report": report }))?;
    println!(
        "delta {:.6}, variance bound {:.6}, p_chebyshev {:.4}, p_gaussian {:.4}: {:?}",
        report.delta, report.sigma_hat_sq, report.p_chebyshev, report.p_gaussian, report.decision
    );
    Ok(())
}

#[derive(Serialize)]
struct SimPayload<'a> {
    config: &'a SimConfig,
    report: &'a SimReport,
    violations: &'a [Violation],
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let cfg: SimConfig = io::read_json(&a.config)?;
    cfg.validate()?;
    let name = match cfg.study {
        Study::Ratio(_) => StudyArg::Ratio,
        Study::Power(_) => StudyArg::Power,
        Study::Type1(_) => StudyArg::Type1,
    };
    if a.study.is_some_and(|s| s != name) {
        return Err(CliError::Usage(format!("--study {:?} does not match the config's study {name:?}", a.study.unwrap())));
    }
    let mut manifest = RunManifest::new("simulate", a, Some(cfg.seed));
    manifest.input(&a.config)?;
    let report = run_study(&cfg)?;
    let violations = check_report(&report);
    manifest.artifact(&a.out);
    if let Some(p) = &a.csv_out {
        manifest.artifact(p);
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &report.rows {
            w.serialize(row).map_err(|source| CliError::Csv { path: p.clone(), source })?;
        }
        io::write_bytes(p, &w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?)?;
    }
    write_envelope(&a.out, &manifest, SimPayload { config: &cfg, report: &report, violations: &violations })?;
    println!("{} rows", report.rows.len());
    for v in &violations {
        println!("violation in setting {}: {}", v.setting, v.message);
    }
    if a.check && !violations.is_empty() {
        return Err(CliError::Property(format!("{} study property violations", violations.len())));
    }
    Ok(())
}

#[derive(Default, Serialize)]
struct OraclePayload {
    unbiasedness: Option<checks::Unbiasedness>,
    linear_means: Option<checks::LinearMeans>,
    null_variance: Option<checks::NullVariance>,
    variance_bound: Option<checks::BoundCheck>,
    bernoulli: Option<checks::BernoulliCheck>,
    failed: Vec<String>,
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn oracle(a: &OracleArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("oracle", a, Some(a.seed));
    let (fx, bound_fx): (DesignFixture, DesignFixture) = match &a.design {
        Some(p) => {
            manifest.input(p)?;
            let fx: DesignFixture = io::read_json(p)?;
            (fx.clone(), fx)
        }
        None => (
            serde_json::from_str(BUNDLED_DESIGN).expect("bundled design parses"),
            serde_json::from_str(BUNDLED_BOUND_DESIGN).expect("bundled design parses"),
        ),
    };
    let wants = |c: CheckArg| a.check == c || a.check == CheckArg::All;
    let mut out = OraclePayload::default();
    let mut failed = Vec::new();
    let mut record = |name: &str, pass: bool, detail: String| {
        println!("{name}: {} ({detail})", verdict(pass));
        if !pass {
            failed.push(name.to_string());
        }
    };
    if wants(CheckArg::Unbiasedness) {
        let r = checks::unbiasedness(&fx, a.seed)?;
        record(
            "unbiasedness",
            r.max_abs_error <= checks::EXACT_TOL,
            format!(
                "tau {:.15}, E tau_cr {:.15}, E tau_cbr {:.15}, E delta {:.3e}, max error {:.3e} over {} assignments",
                r.tau, r.tau_cr_mean, r.tau_cbr_mean, r.delta_mean, r.max_abs_error, r.assignments
            ),
        );
        out.unbiasedness = Some(r);
    }
    if wants(CheckArg::LinearMeans) {
        let r = checks::linear_means(&fx)?;
        record(
            "linear-means",
            r.max_abs_error <= checks::EXACT_TOL,
            format!(
                "rho_c {:.6}; complete {:.15} vs {:.15}; cluster {:.15} vs {:.15}; max error {:.3e}",
                r.rho_c, r.complete_enumerated, r.complete_closed_form, r.cluster_enumerated, r.cluster_closed_form, r.max_abs_error
            ),
        );
        out.linear_means = Some(r);
    }
    if wants(CheckArg::NullVariance) {
        let r = checks::null_variance(&fx, a.seed, a.tables)?;
        record(
            "null-variance",
            r.max_abs_error <= checks::VARIANCE_TOL,
            format!("formula {:.15} vs enumerated {:.15}; max error {:.3e} over {} tables", r.formula, r.enumerated, r.max_abs_error, r.tables),
        );
        out.null_variance = Some(r);
    }
    if wants(CheckArg::VarianceBound) {
        let r = checks::variance_bound(&bound_fx, a.seed, a.tables)?;
        record(
            "variance-bound",
            r.violations == 0 && r.constant_effect_max_abs_gap <= checks::VARIANCE_TOL,
            format!(
                "{} of {} tables below var(delta), worst relative gap {:.4}; constant-effect gap {:.3e}",
                r.violations,
                r.tables.len(),
                r.worst_relative_gap,
                r.constant_effect_max_abs_gap
            ),
        );
        out.variance_bound = Some(r);
    }
    if wants(CheckArg::Bernoulli) {
        let r = checks::bernoulli(12, fx.table.effect, fx.table.heterogeneity, a.seed, a.tables)?;
        record(
            "bernoulli",
            r.within_bound == r.tables && r.negative_moment_error <= r.negative_moment_bound,
            format!(
                "{}/{} tables within bound (max gap/bound {:.4}); E(1/eta_t) {:.15}, error {:.3e} <= {:.3e}",
                r.within_bound, r.tables, r.max_gap_over_bound, r.negative_moment, r.negative_moment_error, r.negative_moment_bound
            ),
        );
        out.bernoulli = Some(r);
    }
    out.failed = failed;
    if let Some(p) = &a.out {
        manifest.artifact(p);
        write_envelope(p, &manifest, &out)?;
    }
    if !out.failed.is_empty() {
        return Err(CliError::Property(format!("oracle checks failed: {}", out.failed.join(", "))));
    }
    Ok(())
}
