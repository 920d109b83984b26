//! Immutable undirected simple graphs, edge-list ingestion and stochastic
//! block model generation.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Clustering;
use crate::seed::SeedStream;

/// Undirected simple graph over units `0..num_units`.
///
/// Adjacency lists are sorted, symmetric, free of duplicates and self-loops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
    num_edges: usize,
}

impl Graph {
    pub fn empty(num_units: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); num_units],
            num_edges: 0,
        }
    }

    /// Builds a graph from an edge list. Duplicate edges (in either
    /// orientation) are collapsed.
    pub fn from_edges<I>(num_units: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if num_units == 0 {
            return Err(Error::validation("a graph needs at least one unit"));
        }
        let mut adjacency = vec![Vec::new(); num_units];
        for (u, v) in edges {
            if u >= num_units || v >= num_units {
                return Err(Error::validation(format!(
                    "edge ({u}, {v}) references a unit outside 0..{num_units}"
                )));
            }
            if u == v {
                return Err(Error::validation(format!("self-loop on unit {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let mut num_edges = 0;
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
            num_edges += list.len();
        }
        Ok(Self {
            adjacency,
            num_edges: num_edges / 2,
        })
    }

    pub fn num_units(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn neighbors(&self, unit: usize) -> &[usize] {
        &self.adjacency[unit]
    }

    pub fn degree(&self, unit: usize) -> usize {
        self.adjacency[unit].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Every edge once, as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn isolated_units(&self) -> usize {
        self.adjacency.iter().filter(|l| l.is_empty()).count()
    }

    /// Serializes to the edge-list text format, with an `N=` header so that
    /// trailing isolated units survive a round trip.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("N={}\n", self.num_units());
        for (u, v) in self.edges() {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }
}

/// Parses the edge-list text format: one edge per line as two integers
/// separated by whitespace or a comma; `#` starts a comment line; an
/// optional `N=<int>` line fixes the unit count (otherwise `1 + max id`).
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut declared: Option<usize> = None;
    let mut max_id: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("N=") {
            let n = rest.trim().parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid unit count header {line:?}"),
            })?;
            declared = Some(n);
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected two unit ids, found {line:?}"),
            });
        }
        let mut ids = [0usize; 2];
        for (slot, field) in ids.iter_mut().zip(&fields) {
            let id = field.parse::<i64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("{field:?} is not an integer"),
            })?;
            if id < 0 {
                return Err(Error::validation(format!("line {line_no}: negative unit id {id}")));
            }
            *slot = id as usize;
        }
        if ids[0] == ids[1] {
            return Err(Error::validation(format!("line {line_no}: self-loop on unit {}", ids[0])));
        }
        max_id = Some(max_id.map_or(ids[0].max(ids[1]), |m| m.max(ids[0]).max(ids[1])));
        edges.push((ids[0], ids[1]));
    }
    let needed = max_id.map_or(0, |m| m + 1);
    let num_units = match declared {
        Some(n) if n < needed => {
            return Err(Error::validation(format!(
                "header declares N={n} but unit id {} appears",
                needed - 1
            )))
        }
        Some(n) => n,
        None => needed,
    };
    Graph::from_edges(num_units, edges)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_edge_list(&text)
}

/// Stochastic block model with equal-size contiguous blocks: unit `u`
/// belongs to block `u / block_size`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub num_blocks: usize,
    pub block_size: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn num_units(&self) -> Result<usize> {
        self.num_blocks
            .checked_mul(self.block_size)
            .ok_or_else(|| Error::Size(format!("{} blocks of {} units", self.num_blocks, self.block_size)))
    }

    fn validate(&self) -> Result<usize> {
        if self.num_blocks == 0 || self.block_size == 0 {
            return Err(Error::validation("an SBM needs at least one block of at least one unit"));
        }
        for (name, p) in [("p_intra", self.p_intra), ("p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name} = {p} is not a probability")));
            }
        }
        let n = self.num_units()?;
        let n64 = n as u64;
        n64.checked_mul(n64.saturating_sub(1))
            .ok_or_else(|| Error::Size(format!("{n} units have too many pairs to enumerate")))?;
        Ok(n)
    }

    /// Intra/inter probabilities whose expected graph has the requested
    /// mean degree and an expected in-cluster neighbour fraction of
    /// `target_rho` (ignoring the small chance of isolated units).
    pub fn probabilities_for_target(
        num_blocks: usize,
        block_size: usize,
        target_rho: f64,
        mean_degree: f64,
    ) -> Result<(f64, f64)> {
        if num_blocks < 2 || block_size < 2 {
            return Err(Error::validation("need at least two blocks of at least two units"));
        }
        if !(0.0..=1.0).contains(&target_rho) || !(mean_degree > 0.0) {
            return Err(Error::validation("target_rho must be in [0, 1] and mean_degree positive"));
        }
        let intra_pairs = (block_size - 1) as f64;
        let inter_pairs = ((num_blocks - 1) * block_size) as f64;
        let p_intra = target_rho * mean_degree / intra_pairs;
        let p_inter = (1.0 - target_rho) * mean_degree / inter_pairs;
        if p_intra > 1.0 || p_inter > 1.0 {
            return Err(Error::Infeasible(format!(
                "mean degree {mean_degree} with rho {target_rho} needs edge probabilities above 1"
            )));
        }
        Ok((p_intra, p_inter))
    }
}

/// Draws a graph from the block model together with its ground-truth
/// block clustering. Deterministic given `spec.seed`.
pub fn generate_sbm(spec: &SbmSpec) -> Result<(Graph, Clustering)> {
    let n = spec.validate()?;
    let b = spec.block_size;
    let mut rng = SeedStream::new(spec.seed).child("sbm").rng();
    let mut edges = Vec::new();
    for a in 0..spec.num_blocks {
        let base_a = a * b;
        let triangle = (b as u64) * (b as u64 - 1) / 2;
        sample_pairs(triangle, spec.p_intra, &mut rng, |k| {
            let (row, col) = triangle_index(k);
            edges.push((base_a + col as usize, base_a + row as usize));
        });
        for c in a + 1..spec.num_blocks {
            let base_c = c * b;
            sample_pairs((b as u64) * (b as u64), spec.p_inter, &mut rng, |k| {
                edges.push((base_a + (k / b as u64) as usize, base_c + (k % b as u64) as usize));
            });
        }
    }
    let graph = Graph::from_edges(n, edges)?;
    let clustering = Clustering::new((0..n).map(|u| u / b).collect(), spec.num_blocks)?;
    Ok((graph, clustering))
}

/// Calls `emit` for each index in `0..count` independently with probability
/// `p`, using geometric skips so the cost scales with the number of hits.
fn sample_pairs<R: Rng>(count: u64, p: f64, rng: &mut R, mut emit: impl FnMut(u64)) {
    if count == 0 || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        (0..count).for_each(emit);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut next = 0u64;
    loop {
        let u: f64 = rng.random();
        let skip = ((1.0 - u).ln() / log_q).floor();
        if skip >= (count - next) as f64 {
            return;
        }
        next += skip as u64;
        emit(next);
        next += 1;
        if next >= count {
            return;
        }
    }
}

/// Maps a linear index over pairs `col < row` (row-major) to `(row, col)`.
fn triangle_index(k: u64) -> (u64, u64) {
    let mut row = ((1.0 + (1.0 + 8.0 * k as f64).sqrt()) / 2.0).floor() as u64;
    while row * (row - 1) / 2 > k {
        row -= 1;
    }
    while (row + 1) * row / 2 <= k {
        row += 1;
    }
    (row, k - row * (row - 1) / 2)
}

/// Fraction of `unit`'s neighbours that share its cluster; 0 for an
/// isolated unit.
pub fn neighborhood_fraction_in_cluster(graph: &Graph, clustering: &Clustering, unit: usize) -> Result<f64> {
    if unit >= graph.num_units() {
        return Err(Error::validation(format!(
            "unit {unit} outside 0..{}",
            graph.num_units()
        )));
    }
    if clustering.num_units() != graph.num_units() {
        return Err(Error::validation("clustering and graph cover different unit counts"));
    }
    Ok(fraction_in_own_cluster(graph, clustering, unit))
}

pub(crate) fn fraction_in_own_cluster(graph: &Graph, clustering: &Clustering, unit: usize) -> f64 {
    let neighbors = graph.neighbors(unit);
    if neighbors.is_empty() {
        return 0.0;
    }
    let own = clustering.cluster_of(unit);
    let inside = neighbors.iter().filter(|&&v| clustering.cluster_of(v) == own).count();
    inside as f64 / neighbors.len() as f64
}
