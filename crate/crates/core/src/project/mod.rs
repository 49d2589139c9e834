//! Two-dimensional projection of embedding sets: exact k-NN, fuzzy
//! neighbourhood graph, and a seeded stochastic layout.

mod graph;
mod layout;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::{fuzzy_graph, knn_graph, smooth_knn, FuzzyGraph, Knn, SIGMA_MAX, SIGMA_MIN};
pub use layout::{fit_ab, layout_sgd, Layout, SgdParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectError {
    #[error("k = {k} needs more than {n} points")]
    KTooLarge { k: usize, n: usize },
    #[error("curve fit did not converge (rms residual {rms})")]
    NonConvergence { rms: f64 },
    #[error("point {index} has {found} dimensions, expected {expected}")]
    LengthMismatch { index: usize, expected: usize, found: usize },
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("invalid parameter: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub negative_samples: usize,
    pub learning_rate: f64,
    /// Per-dimension zero-mean, unit-variance scaling before the k-NN step.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            n_neighbors: 15,
            min_dist: 0.1,
            epochs: 300,
            negative_samples: 5,
            learning_rate: 1.0,
            standardize: true,
            seed: 0,
        }
    }
}

/// Column-wise standardization. Constant columns are only centred.
pub fn standardize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = points[0].len();
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for p in points {
        for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale: Vec<f64> = var.iter().map(|s| (s / n as f64).sqrt()).map(|sd| if sd > 0.0 { sd } else { 1.0 }).collect();
    points
        .iter()
        .map(|p| p.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect()
}

fn to_f64_points<E: AsRef<[f32]>>(embs: &[E]) -> Result<Vec<Vec<f64>>, ProjectError> {
    let dim = embs.first().map_or(0, |e| e.as_ref().len());
    embs.iter()
        .enumerate()
        .map(|(i, e)| {
            let e = e.as_ref();
            if e.len() != dim {
                return Err(ProjectError::LengthMismatch { index: i, expected: dim, found: e.len() });
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(ProjectError::NonFinite(i));
            }
            Ok(e.iter().map(|&v| f64::from(v)).collect())
        })
        .collect()
}

/// Full pipeline: optional standardization, k-NN, calibration, fuzzy
/// union, curve fit, and the SGD layout.
pub fn project<E: AsRef<[f32]>>(embs: &[E], cfg: &ProjectConfig) -> Result<Layout, ProjectError> {
    if cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(ProjectError::Config("epochs and learning_rate must be positive".into()));
    }
    let mut points = to_f64_points(embs)?;
    if cfg.standardize {
        points = standardize(&points);
    }
    let knn = knn_graph(&points, cfg.n_neighbors)?;
    let calib: Vec<(f64, f64)> = knn.distances.iter().map(|d| smooth_knn(d)).collect();
    let graph = fuzzy_graph(&knn, &calib);
    let (a, b) = fit_ab(cfg.min_dist)?;
    let params = SgdParams { a, b, negative_samples: cfg.negative_samples, learning_rate: cfg.learning_rate };
    Ok(layout_sgd(&graph, cfg.epochs, cfg.seed, &params))
}

/// `reaction_id,x,y,dataset_tag` rows.
pub fn write_layout_csv<W: Write>(out: W, ids: &[String], tags: &[String], layout: &Layout) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["reaction_id", "x", "y", "dataset_tag"])?;
    for (i, p) in layout.points.iter().enumerate() {
        w.write_record([ids[i].as_str(), &p[0].to_string(), &p[1].to_string(), tags[i].as_str()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn standardize_columns() {
        let s = standardize(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        assert_eq!(s, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(matches!(project(&[vec![0.0f32; 2], vec![0.0; 3]], &ProjectConfig::default()), Err(ProjectError::LengthMismatch { index: 1, .. })));
        assert_eq!(project(&[vec![f32::NAN; 2]], &ProjectConfig::default()), Err(ProjectError::NonFinite(0)));
    }

    #[test]
    fn separated_blobs_stay_separated_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut embs = Vec::new();
        for c in 0..3 {
            for _ in 0..40 {
                embs.push((0..8).map(|d| if d == c { 5.0 } else { 0.0 } + noise.sample(&mut rng) as f32).collect::<Vec<f32>>());
            }
        }
        let cfg = ProjectConfig { epochs: 100, ..ProjectConfig::default() };
        let a = project(&embs, &cfg).unwrap();
        assert_eq!(a, project(&embs, &cfg).unwrap());
        assert!(a.points.iter().all(|p| p[0].is_finite() && p[1].is_finite()));
        let centroid = |c: usize| {
            let pts = &a.points[c * 40..(c + 1) * 40];
            [pts.iter().map(|p| p[0]).sum::<f32>() / 40.0, pts.iter().map(|p| p[1]).sum::<f32>() / 40.0]
        };
        // Every point is closer to its own blob's centroid.
        let cs: Vec<[f32; 2]> = (0..3).map(centroid).collect();
        for (i, p) in a.points.iter().enumerate() {
            let d: Vec<f32> = cs.iter().map(|c| (p[0] - c[0]).hypot(p[1] - c[1])).collect();
            let own = i / 40;
            assert!((0..3).all(|c| c == own || d[own] < d[c]), "point {i}");
        }
    }

    #[test]
    fn layout_csv() {
        let layout = Layout { points: vec![[0.5, -1.0]] };
        let mut buf = Vec::new();
        write_layout_csv(&mut buf, &["r1".into()], &["uspto".into()], &layout).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "reaction_id,x,y,dataset_tag\nr1,0.5,-1,uspto\n");
    }
}
