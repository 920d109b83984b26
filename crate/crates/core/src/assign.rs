//! Randomization mechanisms: complete, re-randomized Bernoulli, cluster,
//! hierarchical and stratified hierarchical.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{Clustering, Stratification};
use crate::seed::{SeedStream, ARM_SPLIT, CBR_ARM, CR_ARM, STRATUM};

/// Unit and cluster counts of a hierarchical design.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignCounts {
    pub n_cr: usize,
    pub n_cbr: usize,
    pub m_cr: usize,
    pub m_cbr: usize,
    pub n_cr_t: usize,
    pub n_cr_c: usize,
    pub m_cbr_t: usize,
    pub m_cbr_c: usize,
}

impl DesignCounts {
    /// Counts for `num_clusters` clusters of `cluster_size` units with
    /// `m_cr` clusters in the completely randomized arm, `n_cr_t` treated
    /// units there and `m_cbr_t` treated clusters in the other arm.
    pub fn new(num_clusters: usize, cluster_size: usize, m_cr: usize, n_cr_t: usize, m_cbr_t: usize) -> Result<Self> {
        if cluster_size == 0 || m_cr == 0 || m_cr >= num_clusters {
            return Err(Error::validation(format!(
                "need 1 <= m_cr < M and non-empty clusters (M={num_clusters}, m_cr={m_cr}, size={cluster_size})"
            )));
        }
        let m_cbr = num_clusters - m_cr;
        let n_cr = m_cr * cluster_size;
        let counts = Self {
            n_cr,
            n_cbr: m_cbr * cluster_size,
            m_cr,
            m_cbr,
            n_cr_t,
            n_cr_c: n_cr.saturating_sub(n_cr_t),
            m_cbr_t,
            m_cbr_c: m_cbr.saturating_sub(m_cbr_t),
        };
        counts.validate()?;
        Ok(counts)
    }

    /// Equal arms and half of each arm treated. Odd splits are rejected.
    pub fn symmetric(num_clusters: usize, cluster_size: usize) -> Result<Self> {
        if num_clusters % 2 != 0 {
            return Err(Error::validation(format!("symmetric design needs an even cluster count, got {num_clusters}")));
        }
        let m_cr = num_clusters / 2;
        if m_cr % 2 != 0 {
            return Err(Error::validation(format!(
                "symmetric design treats half of the {m_cr} cluster-randomized clusters; {m_cr} is odd"
            )));
        }
        Self::new(num_clusters, cluster_size, m_cr, m_cr * cluster_size / 2, m_cr / 2)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.n_cr, self.n_cbr, self.m_cr, self.m_cbr, self.n_cr_t, self.n_cr_c, self.m_cbr_t, self.m_cbr_c];
        if parts.contains(&0) {
            return Err(Error::validation(format!("every design count must be at least 1: {self:?}")));
        }
        if self.n_cr_t + self.n_cr_c != self.n_cr || self.m_cbr_t + self.m_cbr_c != self.m_cbr {
            return Err(Error::validation(format!("treated and control counts do not add up: {self:?}")));
        }
        if self.n_cr % self.m_cr != 0 || self.n_cbr % self.m_cbr != 0 || self.n_cr / self.m_cr != self.n_cbr / self.m_cbr {
            return Err(Error::validation(format!("arms have different cluster sizes: {self:?}")));
        }
        Ok(())
    }

    pub fn num_units(&self) -> usize {
        self.n_cr + self.n_cbr
    }

    pub fn num_clusters(&self) -> usize {
        self.m_cr + self.m_cbr
    }

    pub fn cluster_size(&self) -> usize {
        self.n_cr / self.m_cr
    }

    pub fn is_symmetric(&self) -> bool {
        self.m_cr == self.m_cbr && 2 * self.n_cr_t == self.n_cr && 2 * self.m_cbr_t == self.m_cbr
    }

    /// Checks the counts against an exactly balanced clustering.
    pub fn check_against(&self, clustering: &Clustering) -> Result<()> {
        let size = clustering.require_balanced()?;
        if clustering.num_clusters() != self.num_clusters() || size != self.cluster_size() {
            return Err(Error::validation(format!(
                "design expects {} clusters of {}, clustering has {} of {size}",
                self.num_clusters(),
                self.cluster_size(),
                clustering.num_clusters()
            )));
        }
        Ok(())
    }
}

/// A single-level assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimpleAssignment {
    pub z: Vec<bool>,
    pub n_t: usize,
    pub n_c: usize,
    /// Bernoulli probability when the draw was re-randomized Bernoulli.
    pub p: Option<f64>,
}

impl SimpleAssignment {
    fn from_bits(z: Vec<bool>, p: Option<f64>) -> Self {
        let n_t = z.iter().filter(|&&b| b).count();
        let n_c = z.len() - n_t;
        Self { z, n_t, n_c, p }
    }
}

fn check_split(total: usize, treated: usize, what: &str) -> Result<()> {
    if treated == 0 || treated >= total {
        return Err(Error::validation(format!("{treated} treated {what} out of {total}; need 1..={}", total.saturating_sub(1))));
    }
    Ok(())
}

/// Exactly `k` of `n` bits set, uniformly over subsets.
pub(crate) fn draw_complete(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<bool> {
    let mut z = vec![false; n];
    for i in index::sample(rng, n, k) {
        z[i] = true;
    }
    z
}

/// I.i.d. Bernoulli(p) bits, redrawn until both values occur.
pub(crate) fn draw_bernoulli(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<bool> {
    loop {
        let z: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
        let t = z.iter().filter(|&&b| b).count();
        if t != 0 && t != n {
            return z;
        }
    }
}

pub fn complete_randomization(n: usize, n_t: usize, seed: u64) -> Result<SimpleAssignment> {
    check_split(n, n_t, "units")?;
    let z = draw_complete(&mut SeedStream::new(seed).rng(), n, n_t);
    Ok(SimpleAssignment::from_bits(z, None))
}

pub fn bernoulli_rerandomized(n: usize, p: f64, seed: u64) -> Result<SimpleAssignment> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::validation(format!("Bernoulli probability {p} not in (0, 1)")));
    }
    if n < 2 {
        return Err(Error::validation("re-randomized Bernoulli needs at least 2 units"));
    }
    let z = draw_bernoulli(&mut SeedStream::new(seed).rng(), n, p);
    Ok(SimpleAssignment::from_bits(z, Some(p)))
}

/// Treats `m_t` clusters chosen uniformly; unit bits follow their cluster.
pub fn cluster_randomization(clustering: &Clustering, m_t: usize, seed: u64) -> Result<SimpleAssignment> {
    check_split(clustering.num_clusters(), m_t, "clusters")?;
    let treated = draw_complete(&mut SeedStream::new(seed).rng(), clustering.num_clusters(), m_t);
    let z = clustering.assignment().iter().map(|&c| treated[c]).collect();
    Ok(SimpleAssignment::from_bits(z, None))
}

/// How treatment is drawn inside the completely randomized arm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrMechanism {
    #[default]
    Complete,
    /// Re-randomized Bernoulli with `p = n_cr_t / n_cr`.
    Bernoulli,
}

/// A draw of the two-level design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalAssignment {
    /// Per cluster: `true` for the completely randomized arm.
    omega: Vec<bool>,
    /// Per unit: `true` for the completely randomized arm.
    w: Vec<bool>,
    /// Per cluster: treatment of clusters in the cluster-randomized arm.
    z_cbr: Vec<Option<bool>>,
    z: Vec<bool>,
    counts: DesignCounts,
    /// Realized treated count in the completely randomized arm; equals
    /// `counts.n_cr_t` under complete randomization.
    cr_treated: usize,
    mechanism: CrMechanism,
    seed: Option<u64>,
}

impl HierarchicalAssignment {
    /// Builds and validates an assignment from cluster arms and unit
    /// treatments.
    pub fn from_parts(
        clustering: &Clustering,
        omega: Vec<bool>,
        z: Vec<bool>,
        counts: DesignCounts,
        mechanism: CrMechanism,
    ) -> Result<Self> {
        counts.validate()?;
        counts.check_against(clustering)?;
        if omega.len() != clustering.num_clusters() || z.len() != clustering.num_units() {
            return Err(Error::validation("arm or treatment vector has the wrong length"));
        }
        let m_cr = omega.iter().filter(|&&b| b).count();
        if m_cr != counts.m_cr {
            return Err(Error::validation(format!("{m_cr} clusters in the completely randomized arm, design says {}", counts.m_cr)));
        }
        let mut z_cbr = vec![None; omega.len()];
        for c in (0..omega.len()).filter(|&c| !omega[c]) {
            let members = clustering.members(c);
            let bit = z[members[0]];
            if members.iter().any(|&u| z[u] != bit) {
                return Err(Error::validation(format!("cluster {c} is cluster-randomized but its units disagree on treatment")));
            }
            z_cbr[c] = Some(bit);
        }
        let m_cbr_t = z_cbr.iter().filter(|b| **b == Some(true)).count();
        if m_cbr_t != counts.m_cbr_t {
            return Err(Error::validation(format!("{m_cbr_t} treated clusters in the cluster-randomized arm, design says {}", counts.m_cbr_t)));
        }
        let w: Vec<bool> = clustering.assignment().iter().map(|&c| omega[c]).collect();
        let cr_treated = (0..z.len()).filter(|&u| w[u] && z[u]).count();
        match mechanism {
            CrMechanism::Complete if cr_treated != counts.n_cr_t => {
                return Err(Error::validation(format!(
                    "{cr_treated} treated units in the completely randomized arm, design says {}",
                    counts.n_cr_t
                )))
            }
            CrMechanism::Bernoulli if cr_treated == 0 || cr_treated == counts.n_cr => {
                return Err(Error::validation("completely randomized arm is all treated or all control"))
            }
            _ => {}
        }
        Ok(Self { omega, w, z_cbr, z, counts, cr_treated, mechanism, seed: None })
    }

    /// Assembles a draw without validation; the caller guarantees the
    /// design's invariants.
    pub(crate) fn from_raw(clustering: &Clustering, omega: Vec<bool>, z: Vec<bool>, counts: DesignCounts) -> Self {
        let w: Vec<bool> = clustering.assignment().iter().map(|&c| omega[c]).collect();
        let z_cbr = (0..omega.len())
            .map(|c| (!omega[c]).then(|| z[clustering.members(c)[0]]))
            .collect();
        let cr_treated = (0..z.len()).filter(|&u| w[u] && z[u]).count();
        Self { omega, w, z_cbr, z, counts, cr_treated, mechanism: CrMechanism::Complete, seed: None }
    }

    pub fn omega(&self) -> &[bool] {
        &self.omega
    }

    pub fn w(&self) -> &[bool] {
        &self.w
    }

    pub fn z(&self) -> &[bool] {
        &self.z
    }

    pub fn z_cbr(&self) -> &[Option<bool>] {
        &self.z_cbr
    }

    pub fn counts(&self) -> &DesignCounts {
        &self.counts
    }

    pub fn cr_treated(&self) -> usize {
        self.cr_treated
    }

    pub fn cr_control(&self) -> usize {
        self.counts.n_cr - self.cr_treated
    }

    pub fn mechanism(&self) -> CrMechanism {
        self.mechanism
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Draws the hierarchical design.
///
/// The arm split, the completely randomized arm and the cluster-randomized
/// arm each use their own substream of `seed`.
pub fn hierarchical_assign(
    clustering: &Clustering,
    counts: &DesignCounts,
    seed: u64,
    mechanism: CrMechanism,
) -> Result<HierarchicalAssignment> {
    counts.validate()?;
    counts.check_against(clustering)?;
    let stream = SeedStream::new(seed);
    let m = clustering.num_clusters();

    let omega = draw_complete(&mut stream.child(ARM_SPLIT).rng(), m, counts.m_cr);
    let w: Vec<bool> = clustering.assignment().iter().map(|&c| omega[c]).collect();

    let cr_units: Vec<usize> = (0..w.len()).filter(|&u| w[u]).collect();
    let mut cr_rng = stream.child(CR_ARM).rng();
    let cr_bits = match mechanism {
        CrMechanism::Complete => draw_complete(&mut cr_rng, counts.n_cr, counts.n_cr_t),
        CrMechanism::Bernoulli => draw_bernoulli(&mut cr_rng, counts.n_cr, counts.n_cr_t as f64 / counts.n_cr as f64),
    };

    let cbr_clusters: Vec<usize> = (0..m).filter(|&c| !omega[c]).collect();
    let cbr_bits = draw_complete(&mut stream.child(CBR_ARM).rng(), counts.m_cbr, counts.m_cbr_t);
    let mut z_cbr = vec![None; m];
    for (&c, &bit) in cbr_clusters.iter().zip(&cbr_bits) {
        z_cbr[c] = Some(bit);
    }

    let mut z = vec![false; w.len()];
    for (&u, &bit) in cr_units.iter().zip(&cr_bits) {
        z[u] = bit;
    }
    for u in 0..z.len() {
        if let Some(bit) = z_cbr[clustering.cluster_of(u)] {
            z[u] = bit;
        }
    }
    let cr_treated = cr_bits.iter().filter(|&&b| b).count();
    Ok(HierarchicalAssignment {
        omega,
        w,
        z_cbr,
        z,
        counts: *counts,
        cr_treated,
        mechanism,
        seed: Some(seed),
    })
}

/// One stratum of a stratified design, indexed locally.
#[derive(Clone, Debug)]
pub struct StratumAssignment {
    pub stratum: usize,
    /// Global ids of the stratum's clusters; local cluster `k` is `clusters[k]`.
    pub clusters: Vec<usize>,
    /// Global id of each local unit.
    pub units: Vec<usize>,
    pub clustering: Clustering,
    pub assignment: HierarchicalAssignment,
}

/// Independent hierarchical draws in every stratum, each from the
/// stratum's own substream.
pub fn stratified_hierarchical_assign(
    clustering: &Clustering,
    strata: &Stratification,
    counts: &[DesignCounts],
    seed: u64,
    mechanism: CrMechanism,
) -> Result<Vec<StratumAssignment>> {
    if strata.num_clusters() != clustering.num_clusters() {
        return Err(Error::validation("stratification and clustering cover different cluster counts"));
    }
    if counts.len() != strata.num_strata {
        return Err(Error::validation(format!("{} design counts for {} strata", counts.len(), strata.num_strata)));
    }
    let stream = SeedStream::new(seed).child(STRATUM);
    (0..strata.num_strata)
        .map(|s| {
            let clusters = strata.clusters_in(s);
            let (sub, units) = clustering.restrict(&clusters).map_err(|e| e.in_stratum(s))?;
            let assignment = hierarchical_assign(&sub, &counts[s], stream.index(s as u64).seed(), mechanism)
                .map_err(|e| e.in_stratum(s))?;
            Ok(StratumAssignment { stratum: s, clusters, units, clustering: sub, assignment })
        })
        .collect()
}

/// Symmetric counts for each stratum of a balanced clustering.
pub fn symmetric_stratum_counts(clustering: &Clustering, strata: &Stratification) -> Result<Vec<DesignCounts>> {
    let size = clustering.require_balanced()?;
    strata
        .strata_sizes
        .iter()
        .enumerate()
        .map(|(s, &m)| DesignCounts::symmetric(m, size).map_err(|e| e.in_stratum(s)))
        .collect()
}
