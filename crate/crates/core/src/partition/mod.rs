//! Balanced graph clustering, clustering quality metrics, stratification
//! and cluster-level subsampling.

mod ldg;
mod stratify;

pub use ldg::{ldg_restream, ldg_restream_traced, rebalance, LdgOutcome};
pub use stratify::{stratify_clusters, ClusterFeatures, StrataSizing, Stratification};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{fraction_in_own_cluster, Graph};
use crate::seed::SeedStream;

/// Surjective map from units to clusters `0..num_clusters`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clustering {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Clustering {
    /// Validates that every id is below `num_clusters` and that no cluster
    /// is empty.
    pub fn new(assignment: Vec<usize>, num_clusters: usize) -> Result<Self> {
        let mut members = vec![Vec::new(); num_clusters];
        for (unit, &c) in assignment.iter().enumerate() {
            if c >= num_clusters {
                return Err(Error::validation(format!(
                    "unit {unit} assigned to cluster {c}, expected < {num_clusters}"
                )));
            }
            members[c].push(unit);
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(Error::validation(format!("cluster {empty} has no units")));
        }
        Ok(Self { assignment, members })
    }

    /// Builds a clustering from arbitrary labels, renumbering the distinct
    /// labels `0..k` in increasing label order.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut distinct: Vec<usize> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let assignment = labels
            .iter()
            .map(|l| distinct.binary_search(l).expect("label present"))
            .collect();
        Self::new(assignment, distinct.len())
    }

    /// Contiguous equal-size blocks: unit `u` in cluster `u / size`.
    pub fn blocks(num_clusters: usize, size: usize) -> Result<Self> {
        Self::new((0..num_clusters * size).map(|u| u / size).collect(), num_clusters)
    }

    pub fn num_units(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn cluster_of(&self, unit: usize) -> usize {
        self.assignment[unit]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.members[cluster]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// The common cluster size if every cluster has the same size.
    pub fn balanced_size(&self) -> Option<usize> {
        let first = self.members[0].len();
        self.members.iter().all(|m| m.len() == first).then_some(first)
    }

    /// Errors unless every cluster has the same size.
    pub fn require_balanced(&self) -> Result<usize> {
        self.balanced_size().ok_or_else(|| {
            let sizes = self.sizes();
            Error::Unbalanced {
                min: *sizes.iter().min().unwrap(),
                max: *sizes.iter().max().unwrap(),
            }
        })
    }

    /// Sums `values` (indexed by unit) within each cluster.
    pub fn cluster_sums(&self, values: &[f64]) -> Vec<f64> {
        self.members
            .iter()
            .map(|m| m.iter().map(|&u| values[u]).sum())
            .collect()
    }

    /// Restricts to the listed clusters. Returns the sub-clustering (local
    /// cluster `k` is `clusters[k]`) and the global id of each local unit.
    pub fn restrict(&self, clusters: &[usize]) -> Result<(Clustering, Vec<usize>)> {
        let mut units = Vec::new();
        let mut local = Vec::new();
        let mut seen = vec![false; self.num_clusters()];
        for (k, &c) in clusters.iter().enumerate() {
            if c >= self.num_clusters() || std::mem::replace(&mut seen[c], true) {
                return Err(Error::validation(format!("invalid or repeated cluster id {c}")));
            }
            for &u in &self.members[c] {
                units.push(u);
                local.push(k);
            }
        }
        Ok((Clustering::new(local, clusters.len())?, units))
    }
}

/// Quality of a clustering on a graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringMetrics {
    /// Mean over units of the fraction of neighbours in the unit's own
    /// cluster (isolated units count as 0).
    pub rho_c: f64,
    /// Fraction of edges with both endpoints in one cluster (0 for a graph
    /// without edges).
    pub internal_edge_fraction: f64,
    pub balance_ratio: f64,
    pub isolated_units: usize,
    pub num_clusters: usize,
    pub num_units: usize,
    pub num_edges: usize,
}

pub fn clustering_metrics(graph: &Graph, clustering: &Clustering) -> Result<ClusteringMetrics> {
    use rayon::prelude::*;

    if graph.num_units() != clustering.num_units() {
        return Err(Error::validation(format!(
            "clustering covers {} units, graph has {}",
            clustering.num_units(),
            graph.num_units()
        )));
    }
    let n = graph.num_units();
    let fractions: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|u| fraction_in_own_cluster(graph, clustering, u))
        .collect();
    let rho_c = fractions.iter().sum::<f64>() / n as f64;
    let internal = internal_edge_count(graph, clustering);
    let internal_edge_fraction = if graph.num_edges() == 0 {
        0.0
    } else {
        internal as f64 / graph.num_edges() as f64
    };
    let sizes = clustering.sizes();
    let balance_ratio = *sizes.iter().max().unwrap() as f64 / *sizes.iter().min().unwrap() as f64;
    Ok(ClusteringMetrics {
        rho_c,
        internal_edge_fraction,
        balance_ratio,
        isolated_units: graph.isolated_units(),
        num_clusters: clustering.num_clusters(),
        num_units: n,
        num_edges: graph.num_edges(),
    })
}

pub(crate) fn internal_edge_count(graph: &Graph, clustering: &Clustering) -> usize {
    graph
        .edges()
        .filter(|&(u, v)| clustering.cluster_of(u) == clustering.cluster_of(v))
        .count()
}

/// Heuristic power objective `rho_c / sqrt(sigma_hat_sq)` used to compare
/// candidate clusterings; larger is better.
pub fn design_score(metrics: &ClusteringMetrics, sigma_hat_sq: f64) -> Result<f64> {
    if !(sigma_hat_sq > 0.0) || !sigma_hat_sq.is_finite() {
        return Err(Error::validation(format!(
            "variance estimate must be positive, got {sigma_hat_sq}"
        )));
    }
    Ok(metrics.rho_c / sigma_hat_sq.sqrt())
}

/// Uniformly random subset of `round(fraction * M)` clusters, sorted
/// ascending.
pub fn subsample_clusters(clustering: &Clustering, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::validation(format!("subsample fraction {fraction} not in (0, 1]")));
    }
    let m = clustering.num_clusters();
    let k = (fraction * m as f64).round() as usize;
    if k < 2 {
        return Err(Error::validation(format!(
            "subsampling {fraction} of {m} clusters keeps {k}; at least 2 are needed"
        )));
    }
    let mut rng = SeedStream::new(seed).child("subsample").rng();
    let mut chosen = index::sample(&mut rng, m, k).into_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn clique_pair() -> Graph {
        let mut edges = Vec::new();
        for base in [0, 4] {
            for a in 0..4 {
                for b in a + 1..4 {
                    edges.push((base + a, base + b));
                }
            }
        }
        edges.push((3, 4));
        Graph::from_edges(8, edges).unwrap()
    }

    #[test]
    fn clustering_validation() {
        assert!(Clustering::new(vec![0, 2], 2).is_err());
        assert!(Clustering::new(vec![0, 0], 2).is_err());
        let c = Clustering::from_labels(&[7, 3, 7]).unwrap();
        assert_eq!(c.assignment(), &[1, 0, 1]);
        assert_eq!(c.balanced_size(), None);
        assert!(matches!(c.require_balanced(), Err(Error::Unbalanced { min: 1, max: 2 })));
    }

    #[test]
    fn restrict_keeps_member_order() {
        let c = Clustering::blocks(3, 2).unwrap();
        let (sub, units) = c.restrict(&[2, 0]).unwrap();
        assert_eq!(units, vec![4, 5, 0, 1]);
        assert_eq!(sub.assignment(), &[0, 0, 1, 1]);
        assert!(c.restrict(&[0, 0]).is_err());
    }

    #[test]
    fn metrics_single_cluster_and_singletons() {
        let g = clique_pair();
        let one = Clustering::new(vec![0; 8], 1).unwrap();
        let m = clustering_metrics(&g, &one).unwrap();
        assert_eq!(m.rho_c, 1.0);
        assert_eq!(m.internal_edge_fraction, 1.0);
        assert_eq!(m.balance_ratio, 1.0);

        let singletons = Clustering::new((0..8).collect(), 8).unwrap();
        let m = clustering_metrics(&g, &singletons).unwrap();
        assert_eq!(m.rho_c, 0.0);
        assert_eq!(m.internal_edge_fraction, 0.0);
    }

    #[test]
    fn metrics_single_cluster_with_isolated_unit() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let one = Clustering::new(vec![0; 3], 1).unwrap();
        let m = clustering_metrics(&g, &one).unwrap();
        assert!((m.rho_c - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.isolated_units, 1);
    }

    #[test]
    fn metrics_clique_split() {
        let g = clique_pair();
        let split = Clustering::blocks(2, 4).unwrap();
        let m = clustering_metrics(&g, &split).unwrap();
        // 12 of the 13 edges are internal
        assert_eq!(m.internal_edge_fraction, 12.0 / 13.0);
        // units 3 and 4 see 3 of 4 neighbours inside, the rest all
        assert!((m.rho_c - (6.0 + 2.0 * 0.75) / 8.0).abs() < 1e-15);
    }

    /// Brute-force average of per-unit fractions on random graphs.
    #[test]
    fn rho_c_matches_brute_force() {
        use rand::Rng;
        let mut rng = SeedStream::new(5).rng();
        for trial in 0..20 {
            let n = 20 + trial * 9;
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.random::<f64>() < 0.08 {
                        edges.push((u, v));
                    }
                }
            }
            let g = Graph::from_edges(n, edges).unwrap();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
            let c = Clustering::from_labels(&labels).unwrap();
            let mut total = 0.0;
            for u in 0..n {
                let nb: Vec<usize> = (0..n).filter(|&v| g.has_edge(u, v)).collect();
                if !nb.is_empty() {
                    let inside = nb.iter().filter(|&&v| labels[v] == labels[u]).count();
                    total += inside as f64 / nb.len() as f64;
                }
            }
            let m = clustering_metrics(&g, &c).unwrap();
            assert!((m.rho_c - total / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn design_score_arithmetic() {
        let mut m = clustering_metrics(&clique_pair(), &Clustering::blocks(2, 4).unwrap()).unwrap();
        m.rho_c = 0.4;
        assert!((design_score(&m, 4.0).unwrap() - 0.2).abs() < 1e-15);
        m.rho_c = 0.0;
        assert_eq!(design_score(&m, 9.0).unwrap(), 0.0);
        assert!(design_score(&m, 0.0).is_err());
        assert!(design_score(&m, -1.0).is_err());
    }

    #[test]
    fn design_score_prefers_clique_split() {
        let g = clique_pair();
        let good = clustering_metrics(&g, &Clustering::blocks(2, 4).unwrap()).unwrap();
        let bad = clustering_metrics(&g, &Clustering::new(vec![0, 1, 0, 1, 0, 1, 0, 1], 2).unwrap()).unwrap();
        assert!(design_score(&good, 1.0).unwrap() > design_score(&bad, 1.0).unwrap());
    }

    #[test]
    fn subsample_counts() {
        let c = Clustering::blocks(10, 3).unwrap();
        assert_eq!(subsample_clusters(&c, 1.0, 1).unwrap(), (0..10).collect::<Vec<_>>());
        let half = subsample_clusters(&c, 0.5, 9).unwrap();
        assert_eq!(half.len(), 5);
        assert!(half.windows(2).all(|w| w[0] < w[1]));
        assert!(subsample_clusters(&c, 0.1, 1).is_err());
        assert!(subsample_clusters(&c, 0.0, 1).is_err());
        assert!(subsample_clusters(&c, 1.5, 1).is_err());
        assert_eq!(subsample_clusters(&c, 0.5, 9).unwrap(), half);
    }

    #[test]
    fn subsample_is_uniform() {
        let c = Clustering::blocks(10, 1).unwrap();
        let draws = 10_000;
        let mut hits = [0usize; 10];
        for seed in 0..draws {
            for k in subsample_clusters(&c, 0.5, seed).unwrap() {
                hits[k] += 1;
            }
        }
        let se = (0.25 / draws as f64).sqrt();
        for h in hits {
            assert!((h as f64 / draws as f64 - 0.5).abs() < 4.0 * se, "{hits:?}");
        }
    }
}
