use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClusterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(format!("unknown metric {other:?} (euclidean|cosine)")),
        }
    }
}

/// Anything that can answer `d(i, j)` over `len()` items.
pub trait Distances: Sync {
    fn len(&self) -> usize;
    fn dist(&self, i: usize, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dense symmetric distance matrix with an exactly zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
    metric: Metric,
}

impl DistanceMatrix {
    /// Build from a full row-major `n×n` buffer. Symmetry is enforced by
    /// averaging the two triangles; the diagonal is set to zero.
    pub fn from_values(n: usize, mut values: Vec<f64>, metric: Metric) -> Result<Self, ClusterError> {
        if values.len() != n * n {
            return Err(ClusterError::LengthMismatch { expected: n * n, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ClusterError::InvalidDistance);
        }
        for i in 0..n {
            values[i * n + i] = 0.0;
            for j in i + 1..n {
                let v = 0.5 * (values[i * n + j] + values[j * n + i]);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Ok(DistanceMatrix { n, values, metric })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Copy of the sub-matrix over `items`, in that order.
    pub fn subset(&self, items: &[usize]) -> DistanceMatrix {
        let m = items.len();
        let mut values = Vec::with_capacity(m * m);
        for &i in items {
            for &j in items {
                values.push(self.get(i, j));
            }
        }
        DistanceMatrix { n: m, values, metric: self.metric }
    }
}

impl Distances for DistanceMatrix {
    fn len(&self) -> usize {
        self.n
    }
    fn dist(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }
}

/// On-demand distances over a set of vectors. Used where an `n×n` matrix
/// would not fit comfortably (tens of thousands of reactions).
pub struct VectorDistances {
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
    metric: Metric,
}

impl VectorDistances {
    pub fn new<E: AsRef<[f32]>>(embs: &[E], metric: Metric) -> Result<Self, ClusterError> {
        let dim = embs.first().map_or(0, |e| e.as_ref().len());
        let mut data = Vec::with_capacity(embs.len() * dim);
        for e in embs {
            let e = e.as_ref();
            if e.len() != dim {
                return Err(ClusterError::LengthMismatch { expected: dim, found: e.len() });
            }
            data.extend(e.iter().map(|&v| f64::from(v)));
        }
        Self::from_f64(dim, data, metric)
    }

    pub fn from_f64(dim: usize, data: Vec<f64>, metric: Metric) -> Result<Self, ClusterError> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(ClusterError::LengthMismatch { expected: dim, found: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ClusterError::InvalidDistance);
        }
        let norms: Vec<f64> = data.chunks(dim).map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        if metric == Metric::Cosine {
            if let Some(i) = norms.iter().position(|&n| n == 0.0) {
                return Err(ClusterError::ZeroVectorCosine(i));
            }
        }
        Ok(VectorDistances { dim, data, norms, metric })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn compute(&self, i: usize, j: usize) -> f64 {
        // Always evaluate with the smaller index first so d(i,j) and d(j,i)
        // are the same bits.
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if i == j {
            return 0.0;
        }
        let (a, b) = (self.vector(i), self.vector(j));
        match self.metric {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                (1.0 - dot / (self.norms[i] * self.norms[j])).max(0.0)
            }
        }
    }

    /// Materialize every pair, parallel over rows.
    pub fn to_matrix(&self) -> DistanceMatrix {
        let n = self.len();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| self.compute(i, j)).collect())
            .collect();
        let mut values = vec![0.0; n * n];
        for (i, row) in upper.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        DistanceMatrix { n, values, metric: self.metric }
    }
}

impl Distances for VectorDistances {
    fn len(&self) -> usize {
        self.norms.len()
    }
    fn dist(&self, i: usize, j: usize) -> f64 {
        self.compute(i, j)
    }
}

pub fn pairwise_distances<E: AsRef<[f32]>>(embs: &[E], metric: Metric) -> Result<DistanceMatrix, ClusterError> {
    if embs.len() < 2 {
        return Err(ClusterError::TooFewItems { needed: 2, found: embs.len() });
    }
    Ok(VectorDistances::new(embs, metric)?.to_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_examples() {
        let dm = pairwise_distances(&[vec![0.0f32, 0.0], vec![3.0, 4.0], vec![3.0, 4.0]], Metric::Euclidean).unwrap();
        assert_eq!(dm.get(0, 1), 5.0);
        assert_eq!(dm.get(1, 2), 0.0);
        assert_eq!(dm.get(1, 1), 0.0);
        let cos = pairwise_distances(&[vec![1.0f32, 0.0], vec![0.0, 2.0], vec![-3.0, 0.0]], Metric::Cosine).unwrap();
        assert!((cos.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((cos.get(0, 2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(
            pairwise_distances(&[vec![1.0f32, 0.0], vec![0.0, 0.0]], Metric::Cosine),
            Err(ClusterError::ZeroVectorCosine(1))
        );
        assert_eq!(
            pairwise_distances(&[vec![1.0f32, 0.0], vec![0.0]], Metric::Euclidean),
            Err(ClusterError::LengthMismatch { expected: 2, found: 1 })
        );
        assert!(matches!(
            pairwise_distances(&[vec![1.0f32]], Metric::Euclidean),
            Err(ClusterError::TooFewItems { .. })
        ));
    }

    #[test]
    fn matches_naive_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let embs: Vec<Vec<f32>> =
            (0..50).map(|_| (0..12).map(|_| rng.random_range(-2.0f32..2.0)).collect()).collect();
        for metric in [Metric::Euclidean, Metric::Cosine] {
            let dm = pairwise_distances(&embs, metric).unwrap();
            for i in 0..50 {
                for j in 0..50 {
                    let (a, b) = (&embs[i], &embs[j]);
                    let expect = match metric {
                        Metric::Euclidean => {
                            let mut s = 0.0f64;
                            for k in 0..12 {
                                let d = a[k] as f64 - b[k] as f64;
                                s += d * d;
                            }
                            s.sqrt()
                        }
                        Metric::Cosine => {
                            let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
                            for k in 0..12 {
                                ab += a[k] as f64 * b[k] as f64;
                                aa += a[k] as f64 * a[k] as f64;
                                bb += b[k] as f64 * b[k] as f64;
                            }
                            if i == j { 0.0 } else { 1.0 - ab / (aa.sqrt() * bb.sqrt()) }
                        }
                    };
                    assert!((dm.get(i, j) - expect).abs() < 1e-6, "{metric:?} {i} {j}");
                    assert_eq!(dm.get(i, j), dm.get(j, i));
                }
            }
        }
    }

    #[test]
    fn triangle_inequality_spot_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let embs: Vec<Vec<f32>> =
            (0..30).map(|_| (0..8).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect();
        let dm = pairwise_distances(&embs, Metric::Euclidean).unwrap();
        for _ in 0..500 {
            let (i, j, k) = (rng.random_range(0..30), rng.random_range(0..30), rng.random_range(0..30));
            assert!(dm.get(i, k) <= dm.get(i, j) + dm.get(j, k) + 1e-12);
        }
    }

    #[test]
    fn lazy_and_dense_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let embs: Vec<Vec<f32>> =
            (0..20).map(|_| (0..5).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect();
        let lazy = VectorDistances::new(&embs, Metric::Euclidean).unwrap();
        let dense = lazy.to_matrix();
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(lazy.dist(i, j), dense.get(i, j));
            }
        }
    }

    #[test]
    fn from_values_symmetrizes() {
        let dm = DistanceMatrix::from_values(2, vec![1.0, 2.0, 4.0, 1.0], Metric::Euclidean).unwrap();
        assert_eq!(dm.values(), &[0.0, 3.0, 3.0, 0.0]);
        assert!(DistanceMatrix::from_values(2, vec![0.0, -1.0, -1.0, 0.0], Metric::Euclidean).is_err());
    }
}
