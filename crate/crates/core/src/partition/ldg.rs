//! Restreaming linear deterministic greedy partitioning and the exact
//! rebalancing pass.

use rand::seq::SliceRandom;

use super::{internal_edge_count, Clustering};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::seed::SeedStream;

const UNASSIGNED: usize = usize::MAX;

/// Result of [`ldg_restream_traced`].
#[derive(Clone, Debug)]
pub struct LdgOutcome {
    pub clustering: Clustering,
    pub capacity: usize,
    /// Internal edge fraction after each pass.
    pub pass_internal_fraction: Vec<f64>,
    /// Number of requested clusters that ended up empty and were dropped.
    pub dropped_empty: usize,
}

pub fn ldg_restream(graph: &Graph, m: usize, leniency: f64, iterations: usize, seed: u64) -> Result<Clustering> {
    ldg_restream_traced(graph, m, leniency, iterations, seed).map(|o| o.clustering)
}

/// Capacity `ceil(N/m * (1 + leniency))`, never below `ceil(N/m)`.
fn capacity(n: usize, m: usize, leniency: f64) -> usize {
    let exact = n.div_ceil(m);
    if leniency == 0.0 {
        return exact;
    }
    // guard against 1e-16 noise pushing an integral product up by one
    let lenient = (n as f64 * (1.0 + leniency) / m as f64 - 1e-9).ceil() as usize;
    lenient.max(exact)
}

pub fn ldg_restream_traced(
    graph: &Graph,
    m: usize,
    leniency: f64,
    iterations: usize,
    seed: u64,
) -> Result<LdgOutcome> {
    let n = graph.num_units();
    if m == 0 || m > n {
        return Err(Error::validation(format!("cluster count {m} must be in 1..={n}")));
    }
    if !(leniency >= 0.0) || !leniency.is_finite() {
        return Err(Error::validation(format!("leniency must be finite and >= 0, got {leniency}")));
    }
    if iterations == 0 {
        return Err(Error::validation("at least one streaming pass is required"));
    }
    let cap = capacity(n, m, leniency);
    if cap.checked_mul(m).is_none_or(|total| total < n) {
        return Err(Error::Infeasible(format!("capacity {cap} times {m} clusters cannot hold {n} units")));
    }

    let stream = SeedStream::new(seed).child("ldg");
    let mut labels = vec![UNASSIGNED; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut counts = vec![0usize; m];
    let mut trace = Vec::with_capacity(iterations);

    for pass in 0..iterations {
        order.sort_unstable();
        order.shuffle(&mut stream.index(pass as u64).rng());
        // `labels` holds the previous pass until a unit is re-placed
        let mut sizes = vec![0usize; m];
        for &u in &order {
            counts.iter_mut().for_each(|c| *c = 0);
            for &v in graph.neighbors(u) {
                if labels[v] != UNASSIGNED {
                    counts[labels[v]] += 1;
                }
            }
            let mut best = UNASSIGNED;
            let mut best_score = f64::NEG_INFINITY;
            for c in 0..m {
                if sizes[c] >= cap {
                    continue;
                }
                let score = counts[c] as f64 * (1.0 - sizes[c] as f64 / cap as f64);
                if score > best_score {
                    best = c;
                    best_score = score;
                }
            }
            labels[u] = best;
            sizes[best] += 1;
        }
        let pass_clustering = Clustering::from_labels(&labels)?;
        let internal = internal_edge_count(graph, &pass_clustering);
        trace.push(if graph.num_edges() == 0 {
            0.0
        } else {
            internal as f64 / graph.num_edges() as f64
        });
    }

    let clustering = Clustering::from_labels(&labels)?;
    Ok(LdgOutcome {
        dropped_empty: m - clustering.num_clusters(),
        clustering,
        capacity: cap,
        pass_internal_fraction: trace,
    })
}

/// Moves units from oversized to undersized clusters until every one of
/// `target_clusters` clusters holds exactly `N / target_clusters` units.
///
/// Oversized clusters are drained in id order, each giving up the members
/// with the fewest neighbours inside it (ties to the lowest unit id). A
/// moved unit goes to the undersized cluster holding most of its
/// neighbours (ties to the lowest cluster id). Clusters with ids at or
/// above the current count start empty.
pub fn rebalance(graph: &Graph, clustering: &Clustering, target_clusters: usize) -> Result<Clustering> {
    let n = clustering.num_units();
    if graph.num_units() != n {
        return Err(Error::validation("clustering and graph cover different unit counts"));
    }
    if target_clusters == 0 || n % target_clusters != 0 {
        return Err(Error::validation(format!(
            "{n} units cannot be split into {target_clusters} equal clusters"
        )));
    }
    if target_clusters < clustering.num_clusters() {
        return Err(Error::validation(format!(
            "cannot rebalance {} clusters into fewer ({target_clusters})",
            clustering.num_clusters()
        )));
    }
    let size = n / target_clusters;
    let mut labels = clustering.assignment().to_vec();
    let mut sizes = vec![0usize; target_clusters];
    for &c in &labels {
        sizes[c] += 1;
    }

    for c in 0..target_clusters {
        if sizes[c] <= size {
            continue;
        }
        let mut members: Vec<(usize, usize)> = (0..n)
            .filter(|&u| labels[u] == c)
            .map(|u| (graph.neighbors(u).iter().filter(|&&v| labels[v] == c).count(), u))
            .collect();
        members.sort_unstable();
        let excess = sizes[c] - size;
        for &(_, u) in &members[..excess] {
            let mut best = UNASSIGNED;
            let mut best_links = 0;
            for d in 0..target_clusters {
                if sizes[d] >= size {
                    continue;
                }
                let links = graph.neighbors(u).iter().filter(|&&v| labels[v] == d).count();
                if best == UNASSIGNED || links > best_links {
                    best = d;
                    best_links = links;
                }
            }
            labels[u] = best;
            sizes[c] -= 1;
            sizes[best] += 1;
        }
    }
    Clustering::new(labels, target_clusters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::clustering_metrics;
    use crate::partition::tests::clique_pair;

    /// All balanced 2-partitions of the clique pair, by brute force.
    #[test]
    fn clique_split_is_unique_best_balanced_bipartition() {
        let g = clique_pair();
        let mut best = (0, Vec::new());
        for mask in 0u32..256 {
            if mask.count_ones() != 4 || mask & 1 == 0 {
                continue;
            }
            let inside = g
                .edges()
                .filter(|&(u, v)| (mask >> u) & 1 == (mask >> v) & 1)
                .count();
            if inside > best.0 {
                best = (inside, vec![mask]);
            } else if inside == best.0 {
                best.1.push(mask);
            }
        }
        assert_eq!(best, (12, vec![0b0000_1111]));
    }

    /// Pass one sends every unit without placed neighbours to cluster 0, so
    /// a few stream orders need more than three passes to escape. With zero
    /// leniency the size penalty can also push a boundary unit out of an
    /// optimal split, so a pass may lose ground; that is counted, not
    /// forbidden.
    #[test]
    fn recovers_clique_pair() {
        let g = clique_pair();
        let mut recovered = 0;
        let mut regressions = 0;
        for seed in 0..200 {
            let out = ldg_restream_traced(&g, 2, 0.0, 3, seed).unwrap();
            let t = &out.pass_internal_fraction;
            regressions += usize::from(t[2] < t[1]);
            let m = clustering_metrics(&g, &out.clustering).unwrap();
            if m.internal_edge_fraction >= 12.0 / 13.0 {
                recovered += 1;
            }
        }
        assert!(recovered >= 170, "{recovered}/200");
        assert!(regressions <= 10, "{regressions}/200");
        let benchmark = ldg_restream_traced(&g, 2, 0.0, 3, 1).unwrap().pass_internal_fraction;
        assert!(benchmark[2] >= benchmark[1] && benchmark[2] >= 12.0 / 13.0, "{benchmark:?}");
        let ten = (0..200)
            .filter(|&s| ldg_restream_traced(&g, 2, 0.0, 10, s).unwrap().pass_internal_fraction[9] >= 12.0 / 13.0)
            .count();
        assert!(ten >= 195, "{ten}/200");
    }

    #[test]
    fn empty_graph_is_balanced() {
        let g = Graph::empty(20);
        let c = ldg_restream(&g, 4, 0.0, 2, 3).unwrap();
        assert_eq!(c.sizes(), vec![5; 4]);
    }

    #[test]
    fn validation_errors() {
        let g = Graph::empty(5);
        assert!(matches!(ldg_restream(&g, 6, 0.0, 1, 0), Err(Error::Validation(_))));
        assert!(matches!(ldg_restream(&g, 0, 0.0, 1, 0), Err(Error::Validation(_))));
        assert!(ldg_restream(&g, 2, -0.1, 1, 0).is_err());
        assert!(ldg_restream(&g, 2, 0.0, 0, 0).is_err());
    }

    #[test]
    fn capacity_arithmetic() {
        assert_eq!(capacity(100, 4, 0.0), 25);
        assert_eq!(capacity(100, 3, 0.0), 34);
        assert_eq!(capacity(100, 4, 0.04), 26);
        assert_eq!(capacity(4000, 40, 0.01), 101);
        assert_eq!(capacity(4000, 40, 0.0), 100);
    }

    #[test]
    fn leniency_bounds_cluster_size() {
        let spec = crate::graph::SbmSpec { num_blocks: 10, block_size: 40, p_intra: 0.3, p_inter: 0.01, seed: 11 };
        let (g, _) = crate::graph::generate_sbm(&spec).unwrap();
        let out = ldg_restream_traced(&g, 10, 0.01, 4, 5).unwrap();
        assert_eq!(out.capacity, 41);
        assert!(out.clustering.sizes().iter().all(|&s| s <= 41));
        let m = clustering_metrics(&g, &out.clustering).unwrap();
        assert!(m.internal_edge_fraction > 0.5, "{:?}", out.pass_internal_fraction);
    }

    #[test]
    fn deterministic_per_seed() {
        let g = clique_pair();
        assert_eq!(ldg_restream(&g, 2, 0.5, 3, 9).unwrap(), ldg_restream(&g, 2, 0.5, 3, 9).unwrap());
    }

    #[test]
    fn rebalance_equalises() {
        let g = clique_pair();
        let lopsided = Clustering::new(vec![0, 0, 0, 0, 0, 1, 1, 1], 2).unwrap();
        let fixed = rebalance(&g, &lopsided, 2).unwrap();
        assert_eq!(fixed.sizes(), vec![4, 4]);
        // unit 4 has one link into cluster 0 and three into cluster 1
        assert_eq!(fixed.assignment(), &[0, 0, 0, 0, 1, 1, 1, 1]);

        let one = Clustering::new(vec![0; 8], 1).unwrap();
        assert_eq!(rebalance(&g, &one, 4).unwrap().sizes(), vec![2; 4]);
        assert!(rebalance(&g, &one, 3).is_err());
    }
}
