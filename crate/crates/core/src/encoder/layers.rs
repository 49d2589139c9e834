//! Building blocks recorded on a tape. Parameters are passed as tape
//! variables so the same code serves inference (constants) and training.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::autodiff::{Scalar, Tape, Tensor, Var};

use super::{Activation, EncoderError, JkMode, Side, SidePool};

const LN_EPS: f64 = 1e-5;

/// Parameter handles on one tape, looked up by checkpoint name.
pub struct LayerNames {
    vars: BTreeMap<String, Var>,
}

impl LayerNames {
    pub fn new(vars: BTreeMap<String, Var>) -> Self {
        LayerNames { vars }
    }

    pub fn get(&self, name: &str) -> Result<Var, EncoderError> {
        self.vars.get(name).copied().ok_or_else(|| EncoderError::MissingParameter(name.to_string()))
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }
}

fn activate<T: Scalar>(tape: &mut Tape<T>, x: Var, act: Activation) -> Result<Var, EncoderError> {
    Ok(match act {
        Activation::Relu => tape.relu(x)?,
        Activation::Gelu => tape.gelu(x)?,
    })
}

/// `act(Â·H·W + b)`.
pub fn gcn_forward<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    a_hat: Var,
    w: Var,
    b: Var,
    act: Activation,
) -> Result<Var, EncoderError> {
    let hw = tape.matmul(h, w)?;
    let agg = tape.matmul(a_hat, hw)?;
    let z = tape.add_row(agg, b)?;
    activate(tape, z, act)
}

/// Combines the per-layer node states. `projection` is required for
/// `ConcatProject` and ignored for `Last`.
pub fn jumping_knowledge<T: Scalar>(
    tape: &mut Tape<T>,
    layers: &[Var],
    expected: usize,
    mode: JkMode,
    projection: Option<(Var, Var)>,
) -> Result<Var, EncoderError> {
    if layers.len() != expected || layers.is_empty() {
        return Err(EncoderError::LayerCountMismatch { expected, got: layers.len() });
    }
    match mode {
        JkMode::Last => Ok(*layers.last().unwrap()),
        JkMode::ConcatProject => {
            let (w, b) = projection.ok_or_else(|| EncoderError::MissingParameter("jk.weight".into()))?;
            let cat = tape.concat_cols(layers)?;
            Ok(tape.linear(cat, w, b)?)
        }
    }
}

/// Attention pooling over the atoms of each molecule in a disjoint union.
/// `offsets` are molecule boundaries (`offsets[i]..offsets[i+1]`).
/// Returns the `m×d` molecule vectors and the `m×n_atoms` weight matrix,
/// whose row `i` is zero outside molecule `i` and sums to one inside it.
pub fn attention_pool<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    offsets: &[usize],
    gate_w: Var,
    gate_b: Var,
    value_w: Var,
) -> Result<(Var, Var), EncoderError> {
    let n = *offsets.last().expect("offsets end with the atom count");
    let m = offsets.len() - 1;
    let scores = tape.linear(h, gate_w, gate_b)?; // n×1
    let scores_t = tape.transpose(scores)?; // 1×n
    let weights = if m == 1 {
        tape.softmax_rows(scores_t, None)?
    } else {
        let ones = tape.constant(Tensor::filled(&[m, 1], T::one()));
        let spread = tape.matmul(ones, scores_t)?;
        let mut mask = vec![false; m * n];
        for i in 0..m {
            mask[i * n + offsets[i]..i * n + offsets[i + 1]].fill(true);
        }
        tape.softmax_rows(spread, Some(mask.into()))?
    };
    let values = tape.matmul(h, value_w)?;
    let pooled = tape.matmul(weights, values)?;
    Ok((pooled, weights))
}

/// Zero-pads `m×d` molecule vectors to `max×d`; the mask marks real rows.
pub fn pad_molecule_set<T: Scalar>(
    tape: &mut Tape<T>,
    vecs: Var,
    max_components: usize,
    side: Side,
) -> Result<(Var, Arc<[bool]>), EncoderError> {
    let (m, d) = tape.value(vecs).dims();
    if m > max_components {
        return Err(EncoderError::TooManyComponents { side, count: m, max: max_components });
    }
    let mask: Arc<[bool]> = (0..max_components).map(|i| i < m).collect::<Vec<_>>().into();
    if m == max_components {
        return Ok((vecs, mask));
    }
    let pad = tape.constant(Tensor::zeros(&[max_components - m, d]));
    Ok((tape.concat_rows(&[vecs, pad])?, mask))
}

/// Pre-norm block `X + MHA(LN(X))`, then `+ FFN(LN(·))`. Keys outside
/// `mask` are excluded from every softmax. `prefix` is e.g.
/// `reactant.tf.0`. Returns the new states and one `max×max` attention
/// matrix per head.
pub fn transformer_layer<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    mask: &Arc<[bool]>,
    names: &LayerNames,
    prefix: &str,
    heads: usize,
    act: Activation,
) -> Result<(Var, Vec<Var>), EncoderError> {
    let (rows, d) = tape.value(x).dims();
    let p = |s: &str| names.get(&format!("{prefix}.{s}"));
    let dh = d / heads;
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());

    let ln1 = tape.layer_norm(x, p("ln1.gamma")?, p("ln1.beta")?, T::from_f64(LN_EPS))?;
    let q = tape.linear(ln1, p("attn.q.weight")?, p("attn.q.bias")?)?;
    let k = tape.linear(ln1, p("attn.k.weight")?, p("attn.k.bias")?)?;
    let v = tape.linear(ln1, p("attn.v.weight")?, p("attn.v.bias")?)?;
    let key_mask: Arc<[bool]> = (0..rows * rows).map(|i| mask[i % rows]).collect::<Vec<_>>().into();

    let mut outs = Vec::with_capacity(heads);
    let mut attn = Vec::with_capacity(heads);
    for hd in 0..heads {
        let (lo, hi) = (hd * dh, (hd + 1) * dh);
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (tape.slice_cols(q, lo, hi)?, tape.slice_cols(k, lo, hi)?, tape.slice_cols(v, lo, hi)?)
        };
        let kt = tape.transpose(kh)?;
        let logits = tape.matmul(qh, kt)?;
        let logits = tape.scale(logits, scale)?;
        let a = tape.softmax_rows(logits, Some(key_mask.clone()))?;
        outs.push(tape.matmul(a, vh)?);
        attn.push(a);
    }
    let cat = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    let o = tape.linear(cat, p("attn.o.weight")?, p("attn.o.bias")?)?;
    let x = tape.add(x, o)?;

    let ln2 = tape.layer_norm(x, p("ln2.gamma")?, p("ln2.beta")?, T::from_f64(LN_EPS))?;
    let f = tape.linear(ln2, p("ffn.0.weight")?, p("ffn.0.bias")?)?;
    let f = activate(tape, f, act)?;
    let f = tape.linear(f, p("ffn.1.weight")?, p("ffn.1.bias")?)?;
    Ok((tape.add(x, f)?, attn))
}

/// Collapses the real rows of a padded set to one `1×d` vector.
pub fn side_pool<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    mask: &Arc<[bool]>,
    mode: SidePool,
) -> Result<Var, EncoderError> {
    let mean = tape.masked_mean_rows(x, mask.clone())?;
    Ok(match mode {
        SidePool::Mean => mean,
        SidePool::Sum => {
            let count = mask.iter().filter(|&&m| m).count();
            tape.scale(mean, T::from_f64(count as f64))?
        }
    })
}

/// `[r ‖ p ‖ p − r] → linear → layer norm → linear`.
pub fn interaction_embed<T: Scalar>(
    tape: &mut Tape<T>,
    r: Var,
    p: Var,
    names: &LayerNames,
) -> Result<Var, EncoderError> {
    let diff = tape.sub(p, r)?;
    let z = tape.concat_cols(&[r, p, diff])?;
    let h = tape.linear(z, names.get("interaction.0.weight")?, names.get("interaction.0.bias")?)?;
    let h = tape.layer_norm(h, names.get("interaction.norm.gamma")?, names.get("interaction.norm.beta")?, T::from_f64(LN_EPS))?;
    Ok(tape.linear(h, names.get("interaction.1.weight")?, names.get("interaction.1.bias")?)?)
}

/// Real-vs-fictitious logit; apply a sigmoid for the probability.
pub fn classify_real<T: Scalar>(tape: &mut Tape<T>, emb: Var, names: &LayerNames) -> Result<Var, EncoderError> {
    Ok(tape.linear(emb, names.get("classifier.weight")?, names.get("classifier.bias")?)?)
}
