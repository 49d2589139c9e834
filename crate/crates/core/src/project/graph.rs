use std::collections::BTreeMap;

use rayon::prelude::*;

use super::ProjectError;

pub const SIGMA_MIN: f64 = 1e-6;
pub const SIGMA_MAX: f64 = 1e6;
const SIGMA_ITERS: usize = 64;

/// Exact nearest neighbours, self excluded, sorted by distance then index.
#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn knn_graph(points: &[Vec<f64>], k: usize) -> Result<Knn, ProjectError> {
    let n = points.len();
    if k == 0 || k >= n {
        return Err(ProjectError::KTooLarge { k, n });
    }
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (euclidean(&points[i], &points[j]), j)).collect();
            cand.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter().map(|(d, j)| (j, d)).unzip()
        })
        .collect();
    let (indices, distances) = rows.into_iter().unzip();
    Ok(Knn { indices, distances })
}

fn membership_sum(dists: &[f64], rho: f64, sigma: f64) -> f64 {
    dists.iter().map(|&d| (-(d - rho).max(0.0) / sigma).exp()).sum()
}

/// Per-point calibration `(rho, sigma)`: `rho` is the nearest-neighbour
/// distance and `sigma` solves `Σ exp(−max(0, d−rho)/sigma) = log2(k)` by
/// bisection. When every distance equals `rho` the sum cannot move and
/// `sigma` takes the bracket maximum; otherwise it is clamped to the
/// bracket.
pub fn smooth_knn(dists: &[f64]) -> (f64, f64) {
    let rho = dists.iter().copied().fold(f64::INFINITY, f64::min);
    if dists.iter().all(|&d| d <= rho) {
        return (rho, SIGMA_MAX);
    }
    let target = (dists.len() as f64).log2();
    let (mut lo, mut hi) = (SIGMA_MIN, SIGMA_MAX);
    if membership_sum(dists, rho, lo) >= target {
        return (rho, lo);
    }
    for _ in 0..SIGMA_ITERS {
        let mid = 0.5 * (lo + hi);
        if membership_sum(dists, rho, mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (rho, 0.5 * (lo + hi))
}

/// Symmetric weighted graph; each undirected edge stored once with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl FuzzyGraph {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by(|e| (e.0, e.1).cmp(&key))
            .map_or(0.0, |p| self.edges[p].2)
    }
}

/// Directed memberships `exp(−max(0, d−rho_i)/sigma_i)` combined by fuzzy
/// union `a + b − ab`. Edges whose weight underflows to zero are dropped.
pub fn fuzzy_graph(knn: &Knn, calib: &[(f64, f64)]) -> FuzzyGraph {
    let n = knn.indices.len();
    let mut directed: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for i in 0..n {
        let (rho, sigma) = calib[i];
        for (&j, &d) in knn.indices[i].iter().zip(&knn.distances[i]) {
            let w = (-(d - rho).max(0.0) / sigma).exp();
            let slot = directed.entry((i.min(j), i.max(j))).or_insert((0.0, 0.0));
            if i < j {
                slot.0 = w;
            } else {
                slot.1 = w;
            }
        }
    }
    let edges = directed
        .into_iter()
        // a + b − ab, arranged to be exact when either side is 1 and
        // never below either input.
        .map(|((i, j), (a, b))| {
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            (i, j, hi + lo * (1.0 - hi))
        })
        .filter(|e| e.2 > 0.0)
        .collect();
    FuzzyGraph { n, edges }
}
