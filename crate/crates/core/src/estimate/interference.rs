//! Approximate `var(delta)` under the linear interference model for the
//! symmetric design, from neighbourhood-pair statistics.
//!
//! For unit `i` with degree `d_i > 0`, `a_i` counts neighbours in its own
//! cluster and `n_i(c)` neighbours in cluster `c`. Pairs `(p, q)` are
//! ordered and may coincide. Isolated units contribute nothing.

use serde::{Deserialize, Serialize};

use crate::assign::DesignCounts;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::outcomes::LinearInterferenceModel;
use crate::partition::{clustering_metrics, Clustering};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterferenceVarianceTerms {
    /// Mean of `a_i^2 / d_i^2`.
    pub a_bar: f64,
    /// Mean of the share of neighbour pairs in different clusters.
    pub b_bar: f64,
    /// Mean of the share of neighbour pairs in one shared foreign cluster.
    pub c_bar: f64,
    /// `N^-2` sum over same-cluster `i != j` of `(a_j b_i + b_j a_i) / (d_i d_j)`, `b = d - a`.
    pub d_bar: f64,
    /// `N^-2` sum over same-cluster `i != j` of `a_i a_j / (d_i d_j)`.
    pub e_bar: f64,
    /// `N^-2` sum over different-cluster `(i, j)` of
    /// `(a_i a_j + n_j(C(i)) n_i(C(j))) / (d_i d_j)`.
    pub f_bar: f64,
    /// `N^-2` sum over `i != j` of `1 / (d_i d_j)`.
    pub g_bar: f64,
    pub rho_c: f64,
}

/// Neighbour counts per cluster, sorted by cluster id.
fn cluster_profile(graph: &Graph, clustering: &Clustering, u: usize) -> Vec<(usize, usize)> {
    let mut ids: Vec<usize> = graph.neighbors(u).iter().map(|&v| clustering.cluster_of(v)).collect();
    ids.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for c in ids {
        match out.last_mut() {
            Some((last, k)) if *last == c => *k += 1,
            _ => out.push((c, 1)),
        }
    }
    out
}

fn count_in(profile: &[(usize, usize)], cluster: usize) -> usize {
    profile.binary_search_by_key(&cluster, |p| p.0).map_or(0, |i| profile[i].1)
}

pub fn interference_variance_terms(graph: &Graph, clustering: &Clustering) -> Result<InterferenceVarianceTerms> {
    let n = graph.num_units();
    if clustering.num_units() != n {
        return Err(Error::validation("graph and clustering cover different units"));
    }
    let profiles: Vec<Vec<(usize, usize)>> = (0..n).map(|u| cluster_profile(graph, clustering, u)).collect();
    let deg: Vec<f64> = (0..n).map(|u| graph.degree(u) as f64).collect();
    let own: Vec<f64> = (0..n).map(|u| count_in(&profiles[u], clustering.cluster_of(u)) as f64).collect();

    let (mut a_sum, mut b_sum, mut c_sum) = (0.0, 0.0, 0.0);
    for u in (0..n).filter(|&u| deg[u] > 0.0) {
        let d2 = deg[u] * deg[u];
        let squares: f64 = profiles[u].iter().map(|&(_, k)| (k * k) as f64).sum();
        a_sum += own[u] * own[u] / d2;
        b_sum += (d2 - squares) / d2;
        c_sum += (squares - own[u] * own[u]) / d2;
    }

    // ratios a_i / d_i and b_i / d_i, zero for isolated units
    let ratio = |x: f64, u: usize| if deg[u] > 0.0 { x / deg[u] } else { 0.0 };
    let (mut d_sum, mut e_sum) = (0.0, 0.0);
    let mut own_ratio_by_cluster = vec![0.0; clustering.num_clusters()];
    for c in 0..clustering.num_clusters() {
        let members = clustering.members(c);
        let (mut sa, mut sb, mut sab, mut saa) = (0.0, 0.0, 0.0, 0.0);
        for &u in members {
            let ra = ratio(own[u], u);
            let rb = ratio(deg[u] - own[u], u);
            sa += ra;
            sb += rb;
            sab += ra * rb;
            saa += ra * ra;
        }
        d_sum += 2.0 * (sa * sb - sab);
        e_sum += sa * sa - saa;
        own_ratio_by_cluster[c] = sa;
    }

    let total_own: f64 = own_ratio_by_cluster.iter().sum();
    let mut f_sum = total_own * total_own - own_ratio_by_cluster.iter().map(|s| s * s).sum::<f64>();
    for i in (0..n).filter(|&u| deg[u] > 0.0) {
        let ci = clustering.cluster_of(i);
        for &(c, k) in &profiles[i] {
            if c == ci {
                continue;
            }
            for &j in clustering.members(c) {
                let back = count_in(&profiles[j], ci);
                if back > 0 {
                    f_sum += (k * back) as f64 / (deg[i] * deg[j]);
                }
            }
        }
    }

    let inv: Vec<f64> = deg.iter().filter(|&&d| d > 0.0).map(|d| 1.0 / d).collect();
    let inv_sum: f64 = inv.iter().sum();
    let g_sum = inv_sum * inv_sum - inv.iter().map(|x| x * x).sum::<f64>();

    let nf = n as f64;
    Ok(InterferenceVarianceTerms {
        a_bar: a_sum / nf,
        b_bar: b_sum / nf,
        c_bar: c_sum / nf,
        d_bar: d_sum / (nf * nf),
        e_bar: e_sum / (nf * nf),
        f_bar: f_sum / (nf * nf),
        g_bar: g_sum / (nf * nf),
        rho_c: clustering_metrics(graph, clustering)?.rho_c,
    })
}

/// `beta^2 (8/N + 5/(2M)) - beta gamma rho_C
///  + gamma^2 (8 A/N + 6 B/N + 9 C/N + G + F - rho_C^2)`.
///
/// Only defined for equal arms with half of each arm treated.
pub fn interference_variance_approx(
    model: &LinearInterferenceModel,
    graph: &Graph,
    clustering: &Clustering,
    counts: &DesignCounts,
) -> Result<f64> {
    model.validate()?;
    counts.validate()?;
    counts.check_against(clustering)?;
    if !counts.is_symmetric() {
        return Err(Error::Unsupported(
            "the interference variance approximation assumes equal arms with half of each arm treated".into(),
        ));
    }
    let t = interference_variance_terms(graph, clustering)?;
    let n = graph.num_units() as f64;
    let m = clustering.num_clusters() as f64;
    let (b, g) = (model.beta, model.gamma);
    Ok(b * b * (8.0 / n + 5.0 / (2.0 * m)) - b * g * t.rho_c
        + g * g * (8.0 * t.a_bar / n + 6.0 * t.b_bar / n + 9.0 * t.c_bar / n + t.g_bar + t.f_bar - t.rho_c * t.rho_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedStream;
    use rand::Rng;

    /// Every term by explicit enumeration of units, pairs and neighbour pairs.
    fn brute_force(g: &Graph, c: &Clustering) -> [f64; 7] {
        let n = g.num_units();
        let cl = |u: usize| c.cluster_of(u);
        let nb = |u: usize| g.neighbors(u).to_vec();
        let d = |u: usize| g.degree(u) as f64;
        let mut t = [0.0; 7];
        for i in (0..n).filter(|&i| g.degree(i) > 0) {
            let (mut a, mut b, mut cc) = (0.0, 0.0, 0.0);
            for &p in &nb(i) {
                for &q in &nb(i) {
                    if cl(p) == cl(i) && cl(q) == cl(i) {
                        a += 1.0;
                    }
                    if cl(p) != cl(q) {
                        b += 1.0;
                    }
                    if cl(p) != cl(i) && cl(q) != cl(i) && cl(p) == cl(q) {
                        cc += 1.0;
                    }
                }
            }
            t[0] += a / (d(i) * d(i));
            t[1] += b / (d(i) * d(i));
            t[2] += cc / (d(i) * d(i));
        }
        for i in (0..n).filter(|&i| g.degree(i) > 0) {
            for j in (0..n).filter(|&j| j != i && g.degree(j) > 0) {
                let dd = d(i) * d(j);
                t[6] += 1.0 / dd;
                let (mut dij, mut eij, mut fij) = (0.0, 0.0, 0.0);
                for &p in &nb(j) {
                    for &q in &nb(i) {
                        if cl(i) == cl(j) {
                            let k = cl(i);
                            if (cl(p) == k) != (cl(q) == k) {
                                dij += 1.0;
                            }
                            if cl(p) == k && cl(q) == k {
                                eij += 1.0;
                            }
                        } else {
                            let inside = |x: usize| cl(x) == cl(i) || cl(x) == cl(j);
                            if inside(p) && inside(q) && cl(p) != cl(q) {
                                fij += 1.0;
                            }
                        }
                    }
                }
                t[3] += dij / dd;
                t[4] += eij / dd;
                t[5] += fij / dd;
            }
        }
        let nf = n as f64;
        [t[0] / nf, t[1] / nf, t[2] / nf, t[3] / (nf * nf), t[4] / (nf * nf), t[5] / (nf * nf), t[6] / (nf * nf)]
    }

    #[test]
    fn terms_match_brute_force() {
        let mut rng = SeedStream::new(21).rng();
        for trial in 0..8 {
            let n = 24;
            let c = Clustering::blocks(6, 4).unwrap();
            let p = 0.05 + 0.04 * trial as f64;
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.random::<f64>() < p {
                        edges.push((u, v));
                    }
                }
            }
            let g = Graph::from_edges(n, edges).unwrap();
            let t = interference_variance_terms(&g, &c).unwrap();
            let got = [t.a_bar, t.b_bar, t.c_bar, t.d_bar, t.e_bar, t.f_bar, t.g_bar];
            let want = brute_force(&g, &c);
            for k in 0..7 {
                assert!((got[k] - want[k]).abs() < 1e-12, "trial {trial} term {k}: {got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn gamma_zero_reduces_to_beta_term() {
        let c = Clustering::blocks(4, 2).unwrap();
        let g = Graph::from_edges(8, [(0, 1), (1, 2), (5, 7)]).unwrap();
        let counts = DesignCounts::symmetric(4, 2).unwrap();
        let m = LinearInterferenceModel { alpha: 0.0, beta: 2.0, gamma: 0.0, noise_sd: 0.0 };
        let v = interference_variance_approx(&m, &g, &c, &counts).unwrap();
        assert!((v - 4.0 * (1.0 + 5.0 / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_graph_has_no_gamma_terms() {
        let c = Clustering::blocks(4, 2).unwrap();
        let counts = DesignCounts::symmetric(4, 2).unwrap();
        let m = LinearInterferenceModel { alpha: 0.0, beta: 1.0, gamma: 3.0, noise_sd: 0.0 };
        let v = interference_variance_approx(&m, &Graph::empty(8), &c, &counts).unwrap();
        assert!((v - (1.0 + 5.0 / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_design_is_unsupported() {
        let c = Clustering::blocks(4, 2).unwrap();
        let counts = DesignCounts::new(4, 2, 2, 1, 1).unwrap();
        let m = LinearInterferenceModel { alpha: 0.0, beta: 1.0, gamma: 1.0, noise_sd: 0.0 };
        assert!(matches!(interference_variance_approx(&m, &Graph::empty(8), &c, &counts), Err(Error::Unsupported(_))));
    }
}
