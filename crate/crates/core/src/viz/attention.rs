use serde::{Deserialize, Serialize};

use crate::encoder::{AttentionBundle, Side};

use super::VizError;

const SUM_TOLERANCE: f64 = 1e-6;

/// Pooling weights of one molecule, raw and max-rescaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomIntensities {
    pub side: Side,
    pub component: usize,
    pub raw: Vec<f64>,
    /// `raw / max(raw)`: the strongest atom reads 1.0.
    pub scaled: Vec<f64>,
}

/// Per-molecule pooling weights rescaled so each molecule's top atom is 1.
/// Fails if any molecule's raw weights do not sum to one.
pub fn aggregate_pool_attention(bundle: &AttentionBundle) -> Result<Vec<AtomIntensities>, VizError> {
    bundle
        .molecules
        .iter()
        .map(|m| {
            let sum: f64 = m.atom_weights.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE || m.atom_weights.iter().any(|w| !(*w >= 0.0)) {
                return Err(VizError::BadAttention(format!(
                    "{:?} molecule {} pooling weights sum to {sum}",
                    m.side, m.component
                )));
            }
            let max = m.atom_weights.iter().copied().fold(0.0, f64::max);
            Ok(AtomIntensities {
                side: m.side,
                component: m.component,
                raw: m.atom_weights.clone(),
                scaled: m.atom_weights.iter().map(|w| w / max).collect(),
            })
        })
        .collect()
}

/// Mean molecule-to-molecule attention of one side over every layer and
/// head, restricted to real molecules and renormalized per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideAttention {
    pub side: Side,
    pub size: usize,
    /// Row-major `size×size`.
    pub matrix: Vec<f64>,
}

pub fn aggregate_transformer_attention(bundle: &AttentionBundle) -> Result<Vec<SideAttention>, VizError> {
    let mut out = Vec::new();
    for side in [Side::Reactants, Side::Products] {
        let layers: Vec<_> = bundle.transformer.iter().filter(|l| l.side == side).collect();
        if layers.is_empty() {
            continue;
        }
        let real: Vec<usize> = (0..layers[0].size).filter(|&i| layers[0].mask[i]).collect();
        let m = real.len();
        let mut acc = vec![0.0; m * m];
        let mut count = 0usize;
        for layer in &layers {
            if layer.mask != layers[0].mask {
                return Err(VizError::BadAttention("layers disagree on the molecule mask".into()));
            }
            for head in &layer.heads {
                for (a, &i) in real.iter().enumerate() {
                    for (b, &j) in real.iter().enumerate() {
                        acc[a * m + b] += head[i * layer.size + j];
                    }
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(VizError::BadAttention(format!("{side:?} has no attention heads")));
        }
        for row in acc.chunks_mut(m.max(1)) {
            let s: f64 = row.iter().sum();
            if !(s > 0.0) {
                return Err(VizError::BadAttention(format!("{side:?} attention row sums to {s}")));
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        out.push(SideAttention { side, size: m, matrix: acc });
    }
    if out.is_empty() {
        return Err(VizError::BadAttention("no Transformer layers recorded".into()));
    }
    Ok(out)
}
