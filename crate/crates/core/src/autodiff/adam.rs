use std::collections::BTreeMap;

use super::tensor::{Scalar, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, keyed like the parameters they track.
#[derive(Debug, Clone, Default)]
pub struct AdamState<T> {
    pub step: u64,
    m: BTreeMap<String, Vec<T>>,
    v: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new() -> Self {
        AdamState { step: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }
}

/// One bias-corrected Adam update. Parameters without a gradient entry are
/// left untouched; a gradient for an unknown or differently shaped
/// parameter is an error and nothing is modified.
pub fn adam_step<T: Scalar>(
    params: &mut BTreeMap<String, Tensor<T>>,
    grads: &BTreeMap<String, Tensor<T>>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<(), TensorError> {
    for (name, g) in grads {
        let p = params.get(name).ok_or_else(|| TensorError::ShapeMismatch {
            op: "adam_step",
            left: vec![],
            right: g.shape().to_vec(),
        })?;
        if p.len() != g.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one = T::one();
    let c1 = T::from_f64(1.0 - cfg.beta1.powf(t));
    let c2 = T::from_f64(1.0 - cfg.beta2.powf(t));
    let lr = T::from_f64(cfg.lr);
    let eps = T::from_f64(cfg.eps);
    for (name, g) in grads {
        let p = params.get_mut(name).expect("checked above");
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.len()]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.len()]);
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            let mhat = *mv / c1;
            let vhat = *vv / c2;
            *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
