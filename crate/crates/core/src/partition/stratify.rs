//! Sort-and-chunk stratification of clusters on a composite covariate.

use serde::{Deserialize, Serialize};

use super::Clustering;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Per-cluster features used for stratification.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterFeatures {
    pub internal_edges: Vec<usize>,
    pub boundary_edges: Vec<usize>,
    /// One row per cluster; every row has the same length.
    pub covariates: Vec<Vec<f64>>,
}

impl ClusterFeatures {
    /// Edge counts from the graph, no covariates.
    pub fn from_graph(graph: &Graph, clustering: &Clustering) -> Self {
        let m = clustering.num_clusters();
        let mut internal_edges = vec![0; m];
        let mut boundary_edges = vec![0; m];
        for (u, v) in graph.edges() {
            let (cu, cv) = (clustering.cluster_of(u), clustering.cluster_of(v));
            if cu == cv {
                internal_edges[cu] += 1;
            } else {
                boundary_edges[cu] += 1;
                boundary_edges[cv] += 1;
            }
        }
        Self { internal_edges, boundary_edges, covariates: vec![Vec::new(); m] }
    }

    /// Covariates only, zero edge counts.
    pub fn from_covariates(covariates: Vec<Vec<f64>>) -> Self {
        let m = covariates.len();
        Self { internal_edges: vec![0; m], boundary_edges: vec![0; m], covariates }
    }

    pub fn num_clusters(&self) -> usize {
        self.internal_edges.len()
    }

    fn columns(&self) -> Result<Vec<Vec<f64>>> {
        let m = self.num_clusters();
        if self.boundary_edges.len() != m || self.covariates.len() != m {
            return Err(Error::validation("feature vectors cover different cluster counts"));
        }
        let width = self.covariates.first().map_or(0, Vec::len);
        if self.covariates.iter().any(|row| row.len() != width) {
            return Err(Error::validation("covariate rows have different lengths"));
        }
        let mut cols = vec![
            self.internal_edges.iter().map(|&x| x as f64).collect(),
            self.boundary_edges.iter().map(|&x| x as f64).collect(),
        ];
        for k in 0..width {
            let col: Vec<f64> = self.covariates.iter().map(|row| row[k]).collect();
            if col.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("covariate {k} has a non-finite value")));
            }
            cols.push(col);
        }
        Ok(cols)
    }

    /// Sum of z-scored feature columns; constant columns are skipped.
    pub fn composite(&self) -> Result<Vec<f64>> {
        let cols = self.columns()?;
        let mut total = vec![0.0; self.num_clusters()];
        for col in cols {
            let mean = crate::stats::mean(&col);
            let sd = crate::stats::sample_variance(&col).unwrap_or(0.0).sqrt();
            if sd > 0.0 {
                for (t, x) in total.iter_mut().zip(&col) {
                    *t += (x - mean) / sd;
                }
            }
        }
        Ok(total)
    }
}

/// How many clusters each stratum receives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrataSizing {
    /// Sizes differ by at most one; the first strata take the remainder.
    #[default]
    Balanced,
    /// Sizes are multiples of the given block when `M` allows it; leftover
    /// clusters go to the first stratum.
    Multiple(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratification {
    pub num_strata: usize,
    pub stratum_of: Vec<usize>,
    pub strata_sizes: Vec<usize>,
}

impl Stratification {
    pub fn new(stratum_of: Vec<usize>, num_strata: usize) -> Result<Self> {
        let mut strata_sizes = vec![0; num_strata];
        for (cluster, &s) in stratum_of.iter().enumerate() {
            if s >= num_strata {
                return Err(Error::validation(format!("cluster {cluster} in stratum {s}, expected < {num_strata}")));
            }
            strata_sizes[s] += 1;
        }
        if let Some(s) = strata_sizes.iter().position(|&k| k < 2) {
            return Err(Error::validation(format!("stratum {s} has fewer than 2 clusters")));
        }
        Ok(Self { num_strata, stratum_of, strata_sizes })
    }

    pub fn single(num_clusters: usize) -> Result<Self> {
        Self::new(vec![0; num_clusters], 1)
    }

    pub fn num_clusters(&self) -> usize {
        self.stratum_of.len()
    }

    /// Cluster ids of a stratum, ascending.
    pub fn clusters_in(&self, stratum: usize) -> Vec<usize> {
        (0..self.num_clusters()).filter(|&c| self.stratum_of[c] == stratum).collect()
    }
}

fn strata_sizes(m: usize, l: usize, sizing: StrataSizing) -> Result<Vec<usize>> {
    let block = match sizing {
        StrataSizing::Balanced => 1,
        StrataSizing::Multiple(0) => return Err(Error::validation("stratum size block must be positive")),
        StrataSizing::Multiple(k) => k,
    };
    let blocks = m / block;
    if blocks < l {
        return Err(Error::validation(format!(
            "{m} clusters give {blocks} blocks of {block}, fewer than {l} strata"
        )));
    }
    let mut sizes: Vec<usize> = (0..l).map(|s| block * (blocks / l + usize::from(s < blocks % l))).collect();
    sizes[0] += m % block;
    Ok(sizes)
}

/// Sorts clusters by the composite covariate (ties by cluster id) and
/// chunks the order into `l` contiguous strata.
pub fn stratify_clusters(features: &ClusterFeatures, l: usize, sizing: StrataSizing) -> Result<Stratification> {
    let m = features.num_clusters();
    if l == 0 || m < 2 * l {
        return Err(Error::validation(format!("{m} clusters cannot form {l} strata of at least 2")));
    }
    let score = features.composite()?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
    let sizes = strata_sizes(m, l, sizing)?;
    let mut stratum_of = vec![0; m];
    let mut next = order.iter();
    for (s, &size) in sizes.iter().enumerate() {
        for &c in next.by_ref().take(size) {
            stratum_of[c] = s;
        }
    }
    Stratification::new(stratum_of, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_stratum() {
        let f = ClusterFeatures::from_covariates(vec![vec![3.0], vec![1.0], vec![2.0]]);
        let s = stratify_clusters(&f, 1, StrataSizing::Balanced).unwrap();
        assert_eq!(s.stratum_of, vec![0, 0, 0]);
    }

    #[test]
    fn sort_and_chunk() {
        let f = ClusterFeatures::from_covariates(vec![vec![3.0], vec![1.0], vec![4.0], vec![2.0]]);
        let s = stratify_clusters(&f, 2, StrataSizing::Balanced).unwrap();
        assert_eq!(s.clusters_in(0), vec![1, 3]);
        assert_eq!(s.clusters_in(1), vec![0, 2]);
    }

    #[test]
    fn too_few_clusters() {
        let f = ClusterFeatures::from_covariates(vec![vec![1.0]; 5]);
        assert!(stratify_clusters(&f, 3, StrataSizing::Balanced).is_err());
        assert!(stratify_clusters(&f, 0, StrataSizing::Balanced).is_err());
        let bad = ClusterFeatures::from_covariates(vec![vec![1.0], vec![f64::NAN], vec![0.0], vec![2.0]]);
        assert!(stratify_clusters(&bad, 2, StrataSizing::Balanced).is_err());
    }

    #[test]
    fn multiple_sizing() {
        assert_eq!(strata_sizes(20, 3, StrataSizing::Multiple(4)).unwrap(), vec![8, 8, 4]);
        assert_eq!(strata_sizes(22, 2, StrataSizing::Multiple(4)).unwrap(), vec![14, 8]);
        assert_eq!(strata_sizes(10, 3, StrataSizing::Balanced).unwrap(), vec![4, 3, 3]);
        assert!(strata_sizes(8, 3, StrataSizing::Multiple(4)).is_err());
    }

    #[test]
    fn edge_features() {
        let g = crate::partition::tests::clique_pair();
        let f = ClusterFeatures::from_graph(&g, &Clustering::blocks(2, 4).unwrap());
        assert_eq!(f.internal_edges, vec![6, 6]);
        assert_eq!(f.boundary_edges, vec![1, 1]);
    }

    proptest! {
        #[test]
        fn strata_partition_clusters(
            rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 2..60),
            l in 1usize..10,
        ) {
            let m = rows.len();
            prop_assume!(m >= 2 * l);
            let s = stratify_clusters(&ClusterFeatures::from_covariates(rows), l, StrataSizing::Balanced).unwrap();
            prop_assert_eq!(s.stratum_of.len(), m);
            prop_assert_eq!(s.strata_sizes.iter().sum::<usize>(), m);
            let lo = *s.strata_sizes.iter().min().unwrap();
            let hi = *s.strata_sizes.iter().max().unwrap();
            prop_assert!(hi - lo <= 1);
            prop_assert!(lo >= 2);
        }
    }
}
