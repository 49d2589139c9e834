//! Central finite-difference check of tape gradients in 64-bit.

use std::collections::BTreeMap;

use super::tape::{Tape, Var};
use super::tensor::{Tensor, TensorError};

/// Denominator floor for the entrywise relative error, so entries that
/// are zero up to rounding are compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// Norm floor for the tensor-wise error. Some gradients vanish exactly
/// (a key bias shifts every logit of a softmax row equally), leaving only
/// finite-difference rounding noise of order 1e-13.
pub const NORM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest norm-wise relative error over parameter tensors,
    /// `‖a − n‖ / max(‖a‖, ‖n‖, NORM_FLOOR)`.
    pub max_rel_err: f64,
    pub worst_tensor: Option<String>,
    /// Largest entrywise relative error (see [`relative_error`]).
    pub max_entry_rel_err: f64,
    /// Name, flat index, analytic and numeric gradient of the worst entry.
    pub worst_entry: Option<(String, usize, f64, f64)>,
    pub checked: usize,
    /// Entries whose ±step evaluations straddle a ReLU kink.
    pub skipped_kinks: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares `backward` against `(f(θ+h) − f(θ−h)) / 2h` for every entry of
/// every parameter. `build` records the loss on a fresh tape given the
/// parameter handles.
pub fn check_gradients<F, E>(
    params: &BTreeMap<String, Tensor<f64>>,
    step: f64,
    build: F,
) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape<f64>, &BTreeMap<String, Var>) -> Result<Var, E>,
    E: From<TensorError>,
{
    let eval = |ps: &BTreeMap<String, Tensor<f64>>| -> Result<(Tape<f64>, Var), E> {
        let mut tape = Tape::new();
        let vars = ps.iter().map(|(k, v)| (k.clone(), tape.param(v.clone()))).collect();
        let loss = build(&mut tape, &vars)?;
        Ok((tape, loss))
    };

    let mut tape = Tape::new();
    let vars: BTreeMap<String, Var> = params.iter().map(|(k, v)| (k.clone(), tape.param(v.clone()))).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss).map_err(E::from)?;
    let base_pattern = tape.relu_pattern();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_tensor: None,
        max_entry_rel_err: 0.0,
        worst_entry: None,
        checked: 0,
        skipped_kinks: 0,
    };
    let mut work = params.clone();
    for (name, value) in params {
        let analytic = grads.get(vars[name]).expect("parameters always receive a gradient");
        let (mut diff2, mut a2, mut n2) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..value.len() {
            let orig = value.data()[i];
            work.get_mut(name).unwrap().data_mut()[i] = orig + step;
            let (tp, lp) = eval(&work)?;
            work.get_mut(name).unwrap().data_mut()[i] = orig - step;
            let (tm, lm) = eval(&work)?;
            work.get_mut(name).unwrap().data_mut()[i] = orig;

            let pp = tp.relu_pattern();
            if pp != tm.relu_pattern() || pp != base_pattern {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (tp.value(lp).data()[0] - tm.value(lm).data()[0]) / (2.0 * step);
            let a = analytic.data()[i];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
            report.checked += 1;
            let err = relative_error(a, numeric);
            if err > report.max_entry_rel_err || report.worst_entry.is_none() {
                report.max_entry_rel_err = err;
                report.worst_entry = Some((name.clone(), i, a, numeric));
            }
        }
        let err = diff2.sqrt() / a2.max(n2).sqrt().max(NORM_FLOOR);
        if err > report.max_rel_err || report.worst_tensor.is_none() {
            report.max_rel_err = err;
            report.worst_tensor = Some(name.clone());
        }
    }
    Ok(report)
}
