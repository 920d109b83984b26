use interference_core::assign::{hierarchical_assign, stratified_hierarchical_assign, symmetric_stratum_counts, CrMechanism, DesignCounts};
use interference_core::estimate::{analyze, analyze_stratified, delta_statistic, Decision, DecisionRule};
use interference_core::graph::generate_sbm;
use interference_core::oracle::linear_model_expectations;
use interference_core::outcomes::{realize_linear, LinearInterferenceModel};
use interference_core::partition::{clustering_metrics, ldg_restream, rebalance, stratify_clusters, ClusterFeatures, StrataSizing};
use interference_core::stats::{mean, sample_variance};
use interference_core::{SbmSpec, SeedStream};
use proptest::prelude::*;

fn model(gamma: f64, noise_sd: f64) -> LinearInterferenceModel {
    LinearInterferenceModel { alpha: 0.0, beta: 1.0, gamma, noise_sd }
}

#[test]
fn strong_interference_detected_end_to_end() {
    let spec = SbmSpec { num_blocks: 20, block_size: 50, p_intra: 0.3, p_inter: 0.002, seed: 11 };
    let (graph, _) = generate_sbm(&spec).unwrap();
    let found = ldg_restream(&graph, 20, 0.1, 5, 4).unwrap();
    let clustering = rebalance(&graph, &found, 20).unwrap();
    let metrics = clustering_metrics(&graph, &clustering).unwrap();
    assert_eq!(metrics.balance_ratio, 1.0);
    assert!(metrics.rho_c > 0.6, "rho_c {}", metrics.rho_c);

    let counts = DesignCounts::symmetric(20, 50).unwrap();
    let asg = hierarchical_assign(&clustering, &counts, 8, CrMechanism::Complete).unwrap();
    let y = realize_linear(&model(5.0, 0.1), &graph, asg.z(), 3, None).unwrap().y;
    let report = analyze(&clustering, &asg, &y, 0.05, DecisionRule::Chebyshev).unwrap();
    assert_eq!(report.decision, Decision::Reject);
    assert!(report.delta < 0.0);

    let features = ClusterFeatures::from_graph(&graph, &clustering);
    let strata = stratify_clusters(&features, 2, StrataSizing::Multiple(4)).unwrap();
    let counts = symmetric_stratum_counts(&clustering, &strata).unwrap();
    let parts = stratified_hierarchical_assign(&clustering, &strata, &counts, 8, CrMechanism::Complete).unwrap();
    let mut z = vec![false; graph.num_units()];
    for p in &parts {
        for (local, &u) in p.units.iter().enumerate() {
            z[u] = p.assignment.z()[local];
        }
    }
    let y = realize_linear(&model(5.0, 0.1), &graph, &z, 3, None).unwrap().y;
    let report = analyze_stratified(&parts, &y, 0.05, DecisionRule::Chebyshev).unwrap();
    assert!(report.stratified);
    assert_eq!(report.decision, Decision::Reject);
}

/// The closed-form expectations of the arm estimators against a Monte
/// Carlo average on a graph far too large to enumerate.
#[test]
fn linear_expectations_match_sampling() {
    let spec = SbmSpec { num_blocks: 12, block_size: 20, p_intra: 0.25, p_inter: 0.02, seed: 5 };
    let (graph, clustering) = generate_sbm(&spec).unwrap();
    let counts = DesignCounts::symmetric(12, 20).unwrap();
    let m = model(1.0, 0.0);
    let exact = linear_model_expectations(&m, &graph, &clustering, &counts).unwrap();
    let root = SeedStream::new(77);
    let draws: Vec<[f64; 3]> = (0..20_000u64)
        .map(|r| {
            let asg = hierarchical_assign(&clustering, &counts, root.index(r).seed(), CrMechanism::Complete).unwrap();
            let y = realize_linear(&m, &graph, asg.z(), 0, None).unwrap().y;
            let d = delta_statistic(&clustering, &asg, &y).unwrap();
            [d.tau_cr, d.tau_cbr, d.delta]
        })
        .collect();
    for (k, want) in [exact.tau_cr, exact.tau_cbr, exact.delta].into_iter().enumerate() {
        let xs: Vec<f64> = draws.iter().map(|d| d[k]).collect();
        let se = (sample_variance(&xs).unwrap() / xs.len() as f64).sqrt();
        assert!((mean(&xs) - want).abs() < 4.0 * se, "statistic {k}: {} vs {want} (se {se})", mean(&xs));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hierarchical_draws_respect_counts(m_half in 2usize..6, size in 1usize..5, seed: u64, bernoulli: bool) {
        let m = 2 * m_half;
        let clustering = interference_core::Clustering::blocks(m, size).unwrap();
        let Ok(counts) = DesignCounts::symmetric(m, size) else { return Ok(()) };
        let mech = if bernoulli { CrMechanism::Bernoulli } else { CrMechanism::Complete };
        let asg = hierarchical_assign(&clustering, &counts, seed, mech).unwrap();
        prop_assert_eq!(asg.omega().iter().filter(|&&b| b).count(), counts.m_cr);
        let cbr_treated = asg.z_cbr().iter().filter(|b| **b == Some(true)).count();
        prop_assert_eq!(cbr_treated, counts.m_cbr_t);
        for c in 0..m {
            let members = clustering.members(c);
            if !asg.omega()[c] {
                prop_assert!(members.iter().all(|&u| asg.z()[u] == asg.z()[members[0]]));
            }
        }
        if !bernoulli {
            prop_assert_eq!(asg.cr_treated(), counts.n_cr_t);
        }
        prop_assert!(asg.cr_treated() > 0 && asg.cr_treated() < counts.n_cr);
    }
}
