//! Small design description used by the oracle checks.

use serde::{Deserialize, Serialize};

use interference_core::assign::DesignCounts;
use interference_core::outcomes::{LinearInterferenceModel, PotentialTable};
use interference_core::{Clustering, Graph, Result, SeedStream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountsSpec {
    pub m_cr: usize,
    pub n_cr_t: usize,
    pub m_cbr_t: usize,
}

/// Random potential tables: `y0 ~ N(0, 1)`, `y1 = y0 + effect + N(0, heterogeneity^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub effect: f64,
    pub heterogeneity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Units `k * cluster_size .. (k + 1) * cluster_size` form cluster `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignFixture {
    pub num_clusters: usize,
    pub cluster_size: usize,
    pub edges: Vec<(usize, usize)>,
    pub counts: CountsSpec,
    pub table: TableSpec,
    pub model: ModelSpec,
}

impl DesignFixture {
    pub fn num_units(&self) -> usize {
        self.num_clusters * self.cluster_size
    }

    pub fn clustering(&self) -> Result<Clustering> {
        Clustering::blocks(self.num_clusters, self.cluster_size)
    }

    pub fn graph(&self) -> Result<Graph> {
        Graph::from_edges(self.num_units(), self.edges.iter().copied())
    }

    pub fn counts(&self) -> Result<DesignCounts> {
        let c = self.counts;
        DesignCounts::new(self.num_clusters, self.cluster_size, c.m_cr, c.n_cr_t, c.m_cbr_t)
    }

    /// Noise-free linear model.
    pub fn model(&self) -> LinearInterferenceModel {
        let m = self.model;
        LinearInterferenceModel { alpha: m.alpha, beta: m.beta, gamma: m.gamma, noise_sd: 0.0 }
    }

    /// Table `index` of the stream rooted at `seed`.
    pub fn table(&self, seed: u64, index: u64) -> Result<PotentialTable> {
        let mut rng = SeedStream::new(seed).child("table").index(index).rng();
        PotentialTable::random(self.num_units(), self.table.effect, self.table.heterogeneity, &mut rng)
    }
}
