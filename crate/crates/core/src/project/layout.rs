use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{FuzzyGraph, ProjectError};

const FIT_SAMPLES: usize = 300;
const FIT_SPAN: f64 = 3.0;
const FIT_ITERS: usize = 100;
const FIT_MAX_RMS: f64 = 0.05;
const INIT_SIGMA: f64 = 10.0;
const GRAD_CLIP: f64 = 4.0;

fn curve(a: f64, b: f64, x: f64) -> f64 {
    1.0 / (1.0 + a * x.powf(2.0 * b))
}

fn fit_targets(min_dist: f64) -> Vec<(f64, f64)> {
    (0..FIT_SAMPLES)
        .map(|k| {
            let x = FIT_SPAN * k as f64 / (FIT_SAMPLES - 1) as f64;
            (x, if x <= min_dist { 1.0 } else { (-(x - min_dist)).exp() })
        })
        .collect()
}

fn sse(a: f64, b: f64, targets: &[(f64, f64)]) -> f64 {
    targets.iter().map(|&(x, y)| (curve(a, b, x) - y).powi(2)).sum()
}

/// Least-squares `(a, b)` for `1/(1 + a·x^{2b})` against the offset
/// exponential target, by Gauss-Newton from `(1, 1)` with step halving.
pub fn fit_ab(min_dist: f64) -> Result<(f64, f64), ProjectError> {
    if !(min_dist > 0.0 && min_dist < 2.0) {
        return Err(ProjectError::Config(format!("min_dist {min_dist} outside (0, 2)")));
    }
    let targets = fit_targets(min_dist);
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut err = sse(a, b, &targets);
    for _ in 0..FIT_ITERS {
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for &(x, y) in &targets {
            if x == 0.0 {
                // f ≡ 1 there; both partials vanish.
                continue;
            }
            let p = x.powf(2.0 * b);
            let denom = (1.0 + a * p).powi(2);
            let ja = -p / denom;
            let jb = -a * p * 2.0 * x.ln() / denom;
            let r = curve(a, b, x) - y;
            jtj[0][0] += ja * ja;
            jtj[0][1] += ja * jb;
            jtj[1][1] += jb * jb;
            jtr[0] += ja * r;
            jtr[1] += jb * r;
        }
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[0][1];
        if det.abs() < 1e-300 {
            break;
        }
        let da = -(jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let db = -(jtj[0][0] * jtr[1] - jtj[0][1] * jtr[0]) / det;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let (na, nb) = (a + t * da, b + t * db);
            if na > 0.0 && nb > 0.0 {
                let e = sse(na, nb, &targets);
                if e <= err {
                    a = na;
                    b = nb;
                    err = e;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let rms = (err / FIT_SAMPLES as f64).sqrt();
    if !(a.is_finite() && b.is_finite() && rms <= FIT_MAX_RMS) {
        return Err(ProjectError::NonConvergence { rms });
    }
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdParams {
    pub a: f64,
    pub b: f64,
    pub negative_samples: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub points: Vec<[f32; 2]>,
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRAD_CLIP, GRAD_CLIP)
}

/// Seeded stochastic layout. Each directed edge is visited with a
/// frequency proportional to its weight (the heaviest edge every epoch);
/// each visit pulls both endpoints together and pushes the head away from
/// `negative_samples` uniformly drawn points. The step size decays
/// linearly from `learning_rate` toward zero.
pub fn layout_sgd(graph: &FuzzyGraph, epochs: usize, seed: u64, p: &SgdParams) -> Layout {
    let n = graph.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_SIGMA).expect("valid sigma");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();

    let max_w = graph.edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * graph.edges.len());
    for &(i, j, w) in &graph.edges {
        let every = max_w / w;
        if every <= epochs as f64 {
            edges.push((i, j, every));
            edges.push((j, i, every));
        }
    }
    let mut next: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let (a, b) = (p.a, p.b);

    for epoch in 0..epochs {
        let alpha = p.learning_rate * (1.0 - epoch as f64 / epochs as f64);
        let now = (epoch + 1) as f64;
        for (e, &(i, j, every)) in edges.iter().enumerate() {
            if next[e] > now {
                continue;
            }
            let dx = [y[i][0] - y[j][0], y[i][1] - y[j][1]];
            let d2 = dx[0] * dx[0] + dx[1] * dx[1];
            if d2 > 0.0 {
                let coeff = -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0);
                for c in 0..2 {
                    let g = clip(coeff * dx[c]) * alpha;
                    y[i][c] += g;
                    y[j][c] -= g;
                }
            }
            for _ in 0..p.negative_samples {
                let k = rng.random_range(0..n);
                if k == i {
                    continue;
                }
                let dx = [y[i][0] - y[k][0], y[i][1] - y[k][1]];
                let d2 = dx[0] * dx[0] + dx[1] * dx[1];
                let coeff = if d2 > 0.0 { 2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0)) } else { 0.0 };
                for c in 0..2 {
                    let g = if d2 > 0.0 { clip(coeff * dx[c]) } else { GRAD_CLIP };
                    y[i][c] += g * alpha;
                }
            }
            next[e] += every;
        }
    }
    Layout { points: y.into_iter().map(|q| [q[0] as f32, q[1] as f32]).collect() }
}
