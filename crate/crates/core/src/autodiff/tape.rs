//! Reverse-mode tape. Every operation appends a node holding its value;
//! `backward` walks the nodes in reverse, so insertion order is the
//! topological order.

use std::sync::Arc;

use super::tensor::{matmul, Scalar, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    MaskedMeanRows { x: Var, mask: Arc<[bool]>, count: usize },
    Sum(Var),
    BceWithLogits { logit: Var, target: T },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one scalar loss with respect to every node that needs one.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// `None` for constants and for nodes that do not reach the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn mismatch<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> TensorError {
    TensorError::ShapeMismatch { op, left: a.shape().to_vec(), right: b.shape().to_vec() }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`; handles to dropped
    /// nodes become invalid. Lets inference reuse one tape of constants.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool, name: &'static str) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable leaf; always receives a gradient entry.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        let t = as_matrix(t);
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Detached input; never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        let t = as_matrix(t);
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = matmul(self.value(a), false, self.value(b), false)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), ng, "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        let (r, c) = x.dims();
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = x.data()[i * c + j];
            }
        }
        let value = Tensor::matrix(c, r, data)?;
        let ng = self.needs(a);
        self.push(value, Op::Transpose(a), ng, "transpose")
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.dims() != y.dims() {
            return Err(mismatch(name, x, y));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(&[x.rows(), x.cols()], data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.zip_same(a, b, "add", |p, q| p + q)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), ng, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.zip_same(a, b, "sub", |p, q| p - q)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Sub(a, b), ng, "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.zip_same(a, b, "mul", |p, q| p * q)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Mul(a, b), ng, "mul")
    }

    /// Adds the `1×n` row `bias` to every row of the `m×n` input.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (x, b) = (self.value(a), self.value(bias));
        let (m, n) = x.dims();
        if b.len() != n {
            return Err(mismatch("add_row", x, b));
        }
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, &bb) in row.iter_mut().zip(b.data()) {
                *v = *v + bb;
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        let ng = self.needs(a) || self.needs(bias);
        self.push(value, Op::AddRow(a, bias), ng, "add_row")
    }

    /// `x·w + b`, the affine map used by every linear layer.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var, TensorError> {
        let x = self.value(a);
        let data = x.data().iter().map(|&v| v * s).collect();
        let value = Tensor::matrix(x.rows(), x.cols(), data)?;
        let ng = self.needs(a);
        self.push(value, Op::Scale(a, s), ng, "scale")
    }

    fn map(&mut self, a: Var, f: impl Fn(T) -> T) -> Result<Tensor<T>, TensorError> {
        let x = self.value(a);
        Tensor::matrix(x.rows(), x.cols(), x.data().iter().map(|&v| f(v)).collect())
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.map(a, |v| if v > T::zero() { v } else { T::zero() })?;
        let ng = self.needs(a);
        self.push(value, Op::Relu(a), ng, "relu")
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Result<Var, TensorError> {
        let half = T::from_f64(0.5);
        let c = T::from_f64(GELU_C);
        let k = T::from_f64(GELU_K);
        let value = self.map(a, |x| half * x * (T::one() + (c * (x + k * x * x * x)).tanh()))?;
        let ng = self.needs(a);
        self.push(value, Op::Gelu(a), ng, "gelu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.map(a, sigmoid)?;
        let ng = self.needs(a);
        self.push(value, Op::Sigmoid(a), ng, "sigmoid")
    }

    /// Row-wise softmax. Masked (`false`) entries are excluded and come out
    /// exactly zero.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<Arc<[bool]>>) -> Result<Var, TensorError> {
        let x = self.value(a);
        let (m, n) = x.dims();
        if let Some(mk) = &mask {
            if mk.len() != m * n {
                return Err(TensorError::ShapeMismatch {
                    op: "softmax_rows",
                    left: x.shape().to_vec(),
                    right: vec![mk.len()],
                });
            }
        }
        let mut data = vec![T::zero(); m * n];
        for r in 0..m {
            let keep = |c: usize| mask.as_ref().is_none_or(|mk| mk[r * n + c]);
            let row = x.row_slice(r);
            let max = (0..n)
                .filter(|&c| keep(c))
                .map(|c| row[c])
                .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.max(v))))
                .ok_or(TensorError::AllMaskedRow { row: r })?;
            let mut sum = T::zero();
            for c in 0..n {
                if keep(c) {
                    let e = (row[c] - max).exp();
                    data[r * n + c] = e;
                    sum = sum + e;
                }
            }
            for c in 0..n {
                data[r * n + c] = data[r * n + c] / sum;
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        let ng = self.needs(a);
        self.push(value, Op::Softmax(a), ng, "softmax_rows")
    }

    /// Per-row normalization to zero mean and unit variance followed by
    /// the affine `gamma`, `beta` (both `1×n`).
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var, eps: T) -> Result<Var, TensorError> {
        let x = self.value(a);
        let (m, n) = x.dims();
        let (g, b) = (self.value(gamma), self.value(beta));
        if g.len() != n || b.len() != n {
            return Err(mismatch("layer_norm", x, g));
        }
        let nf = T::from_f64(n as f64);
        let mut xhat = vec![T::zero(); m * n];
        let mut inv_std = vec![T::zero(); m];
        let mut data = vec![T::zero(); m * n];
        for r in 0..m {
            let row = x.row_slice(r);
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..n {
                let h = (row[c] - mean) * is;
                xhat[r * n + c] = h;
                data[r * n + c] = h * g.data()[c] + b.data()[c];
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        let ng = self.needs(a) || self.needs(gamma) || self.needs(beta);
        self.push(value, Op::LayerNorm { x: a, gamma, beta, xhat, inv_std }, ng, "layer_norm")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let m = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        for &p in parts {
            if self.value(p).rows() != m {
                return Err(mismatch("concat_cols", self.value(parts[0]), self.value(p)));
            }
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let value = Tensor::matrix(m, total, data)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), ng, "concat_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let n = self.value(parts[0]).cols();
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.cols() != n {
                return Err(mismatch("concat_rows", self.value(parts[0]), v));
            }
            data.extend_from_slice(v.data());
        }
        let m = data.len() / n;
        let value = Tensor::matrix(m, n, data)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(value, Op::ConcatRows(parts.to_vec()), ng, "concat_rows")
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let x = self.value(a);
        let (m, n) = x.dims();
        if start >= end || end > n {
            return Err(TensorError::ShapeMismatch {
                op: "slice_cols",
                left: x.shape().to_vec(),
                right: vec![start, end],
            });
        }
        let mut data = Vec::with_capacity(m * (end - start));
        for r in 0..m {
            data.extend_from_slice(&x.row_slice(r)[start..end]);
        }
        let value = Tensor::matrix(m, end - start, data)?;
        let ng = self.needs(a);
        self.push(value, Op::SliceCols { x: a, start }, ng, "slice_cols")
    }

    /// Mean over the rows whose mask entry is `true`, as a `1×n` row.
    pub fn masked_mean_rows(&mut self, a: Var, mask: Arc<[bool]>) -> Result<Var, TensorError> {
        let x = self.value(a);
        let (m, n) = x.dims();
        if mask.len() != m {
            return Err(TensorError::ShapeMismatch {
                op: "masked_mean_rows",
                left: x.shape().to_vec(),
                right: vec![mask.len()],
            });
        }
        let count = mask.iter().filter(|&&k| k).count();
        if count == 0 {
            return Err(TensorError::AllMasked);
        }
        let mut data = vec![T::zero(); n];
        for r in (0..m).filter(|&r| mask[r]) {
            for (d, &v) in data.iter_mut().zip(x.row_slice(r)) {
                *d = *d + v;
            }
        }
        let cf = T::from_f64(count as f64);
        for d in &mut data {
            *d = *d / cf;
        }
        let value = Tensor::matrix(1, n, data)?;
        let ng = self.needs(a);
        self.push(value, Op::MaskedMeanRows { x: a, mask, count }, ng, "masked_mean_rows")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.value(a).data().iter().copied().sum::<T>();
        let ng = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng, "sum")
    }

    /// Numerically stable binary cross-entropy on a `1×1` logit.
    pub fn bce_with_logits(&mut self, logit: Var, target: T) -> Result<Var, TensorError> {
        let x = self.value(logit);
        if x.len() != 1 {
            return Err(TensorError::NotScalar(x.shape().to_vec()));
        }
        let z = x.data()[0];
        let loss = z.max(T::zero()) - z * target + (T::one() + (-z.abs()).exp()).ln();
        let ng = self.needs(logit);
        self.push(Tensor::scalar(loss), Op::BceWithLogits { logit, target }, ng, "bce_with_logits")
    }

    /// Sign pattern of every ReLU input on the tape; two evaluations with
    /// equal patterns lie on the same linear piece of every ReLU.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(a) = node.op {
                out.extend(self.value(a).data().iter().map(|&v| v > T::zero()));
            }
        }
        out
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(&[1, 1], T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        // Constants never report a gradient; trainable leaves always do.
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.needs_grad {
                grads[i] = None;
            } else if matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(&[node.value.rows(), node.value.cols()]));
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<(), TensorError> {
        let node = &self.nodes[idx];
        let acc = |v: Var, t: Tensor<T>, grads: &mut [Option<Tensor<T>>]| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        let shaped = |data: Vec<T>, like: &Tensor<T>| -> Tensor<T> {
            Tensor::matrix(like.rows(), like.cols(), data).expect("gradient shape")
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    acc(*a, matmul(g, false, self.value(*b), true)?, grads);
                }
                if self.needs(*b) {
                    acc(*b, matmul(self.value(*a), true, g, false)?, grads);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = g.dims();
                let mut data = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        data[j * r + i] = g.data()[i * c + j];
                    }
                }
                acc(*a, Tensor::matrix(c, r, data)?, grads);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone(), grads);
                acc(*b, g.clone(), grads);
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone(), grads);
                let neg = g.data().iter().map(|&v| -v).collect();
                acc(*b, shaped(neg, g), grads);
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let data = g.data().iter().zip(y.data()).map(|(&gv, &yv)| gv * yv).collect();
                    acc(*a, shaped(data, g), grads);
                }
                if self.needs(*b) {
                    let data = g.data().iter().zip(x.data()).map(|(&gv, &xv)| gv * xv).collect();
                    acc(*b, shaped(data, g), grads);
                }
            }
            Op::AddRow(a, b) => {
                acc(*a, g.clone(), grads);
                if self.needs(*b) {
                    let n = g.cols();
                    let mut col = vec![T::zero(); n];
                    for row in g.data().chunks(n) {
                        for (c, &v) in col.iter_mut().zip(row) {
                            *c = *c + v;
                        }
                    }
                    let bv = self.value(*b);
                    acc(*b, shaped(col, bv), grads);
                }
            }
            Op::Scale(a, s) => {
                let data = g.data().iter().map(|&v| v * *s).collect();
                acc(*a, shaped(data, g), grads);
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                    .collect();
                acc(*a, shaped(data, g), grads);
            }
            Op::Gelu(a) => {
                let x = self.value(*a);
                let half = T::from_f64(0.5);
                let c = T::from_f64(GELU_C);
                let k = T::from_f64(GELU_K);
                let three = T::from_f64(3.0);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gv, &xv)| {
                        let t = (c * (xv + k * xv * xv * xv)).tanh();
                        let d = half * (T::one() + t)
                            + half * xv * (T::one() - t * t) * c * (T::one() + three * k * xv * xv);
                        gv * d
                    })
                    .collect();
                acc(*a, shaped(data, g), grads);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&gv, &yv)| gv * yv * (T::one() - yv))
                    .collect();
                acc(*a, shaped(data, g), grads);
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let (m, n) = y.dims();
                let mut data = vec![T::zero(); m * n];
                for r in 0..m {
                    let yr = y.row_slice(r);
                    let gr = &g.data()[r * n..(r + 1) * n];
                    let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for c in 0..n {
                        data[r * n + c] = yr[c] * (gr[c] - dot);
                    }
                }
                acc(*x, shaped(data, g), grads);
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let (m, n) = g.dims();
                let gm = self.value(*gamma);
                let nf = T::from_f64(n as f64);
                if self.needs(*x) {
                    let mut data = vec![T::zero(); m * n];
                    for r in 0..m {
                        let gr = &g.data()[r * n..(r + 1) * n];
                        let hr = &xhat[r * n..(r + 1) * n];
                        let dh: Vec<T> = gr.iter().zip(gm.data()).map(|(&a, &b)| a * b).collect();
                        let mean_dh = dh.iter().copied().sum::<T>() / nf;
                        let mean_dh_h = dh.iter().zip(hr).map(|(&a, &b)| a * b).sum::<T>() / nf;
                        for c in 0..n {
                            data[r * n + c] = inv_std[r] * (dh[c] - mean_dh - hr[c] * mean_dh_h);
                        }
                    }
                    acc(*x, shaped(data, g), grads);
                }
                let mut dg = vec![T::zero(); n];
                let mut db = vec![T::zero(); n];
                for r in 0..m {
                    for c in 0..n {
                        let gv = g.data()[r * n + c];
                        dg[c] = dg[c] + gv * xhat[r * n + c];
                        db[c] = db[c] + gv;
                    }
                }
                acc(*gamma, shaped(dg, gm), grads);
                acc(*beta, shaped(db, self.value(*beta)), grads);
            }
            Op::ConcatCols(parts) => {
                let m = g.rows();
                let total = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.needs(p) {
                        let mut data = Vec::with_capacity(m * w);
                        for r in 0..m {
                            data.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                        }
                        acc(p, Tensor::matrix(m, w, data)?, grads);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let n = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let h = self.value(p).rows();
                    if self.needs(p) {
                        let data = g.data()[offset * n..(offset + h) * n].to_vec();
                        acc(p, Tensor::matrix(h, n, data)?, grads);
                    }
                    offset += h;
                }
            }
            Op::SliceCols { x, start } => {
                let xv = self.value(*x);
                let (m, n) = xv.dims();
                let w = g.cols();
                let mut data = vec![T::zero(); m * n];
                for r in 0..m {
                    data[r * n + start..r * n + start + w].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                }
                acc(*x, Tensor::matrix(m, n, data)?, grads);
            }
            Op::MaskedMeanRows { x, mask, count } => {
                let xv = self.value(*x);
                let (m, n) = xv.dims();
                let cf = T::from_f64(*count as f64);
                let mut data = vec![T::zero(); m * n];
                for r in (0..m).filter(|&r| mask[r]) {
                    for c in 0..n {
                        data[r * n + c] = g.data()[c] / cf;
                    }
                }
                acc(*x, Tensor::matrix(m, n, data)?, grads);
            }
            Op::Sum(a) => {
                let av = self.value(*a);
                acc(*a, Tensor::filled(&[av.rows(), av.cols()], g.data()[0]), grads);
            }
            Op::BceWithLogits { logit, target } => {
                let z = self.value(*logit).data()[0];
                acc(*logit, Tensor::scalar(g.data()[0] * (sigmoid(z) - *target)), grads);
            }
        }
        Ok(())
    }
}

/// Overflow-free logistic function.
pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn as_matrix<T: Scalar>(t: Tensor<T>) -> Tensor<T> {
    let (r, c) = t.dims();
    t.reshape(&[r, c]).expect("same element count")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_f64_rows(rows)
    }

    #[test]
    fn matmul_identity_and_small_product() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(t(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]));
        let i = tape.constant(t(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]));
        let ai = tape.matmul(a, i).unwrap();
        assert_eq!(tape.value(ai), tape.value(a));

        let x = tape.constant(t(&[&[1.0, 2.0]]));
        let y = tape.constant(t(&[&[3.0], &[4.0]]));
        let xy = tape.matmul(x, y).unwrap();
        assert_eq!(tape.value(xy).data(), &[11.0]);
        assert!(matches!(tape.matmul(x, a), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[&[0.0, 0.0], &[2f64.ln(), 0.0]]));
        let y = tape.softmax_rows(x, None).unwrap();
        let v = tape.value(y).data();
        assert!((v[0] - 0.5).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12);
        assert!((v[2] - 2.0 / 3.0).abs() < 1e-12 && (v[3] - 1.0 / 3.0).abs() < 1e-12);

        let x = tape.constant(t(&[&[5.0, 5.0, 100.0]]));
        let mask: Arc<[bool]> = vec![true, true, false].into();
        let y = tape.softmax_rows(x, Some(mask)).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5, 0.0]);

        let mask: Arc<[bool]> = vec![false, false, false].into();
        assert_eq!(tape.softmax_rows(x, Some(mask)), Err(TensorError::AllMaskedRow { row: 0 }));
    }

    #[test]
    fn layer_norm_examples() {
        let mut tape = Tape::<f64>::new();
        let gamma = tape.constant(t(&[&[1.0, 1.0]]));
        let beta = tape.constant(t(&[&[0.0, 0.0]]));
        let x = tape.constant(t(&[&[3.0, 3.0], &[1.0, -1.0]]));
        let y = tape.layer_norm(x, gamma, beta, 1e-5).unwrap();
        let v = tape.value(y).data();
        assert_eq!(&v[..2], &[0.0, 0.0]);
        assert!((v[2] - 1.0).abs() < 1e-5 && (v[3] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn activations() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[&[-1.0, 0.0, 2.0]]));
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = tape.constant(t(&[&[0.0]]));
        let g = tape.gelu(z).unwrap();
        assert_eq!(tape.value(g).data(), &[0.0]);
    }

    #[test]
    fn sum_of_matmul_gradient_is_broadcast_input() {
        let mut tape = Tape::<f64>::new();
        let w = tape.param(t(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
        let x = tape.constant(t(&[&[7.0], &[8.0]]));
        let wx = tape.matmul(w, x).unwrap();
        let loss = tape.sum(wx).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[7.0, 8.0, 7.0, 8.0, 7.0, 8.0]);
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn unreachable_param_gets_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let used = tape.param(t(&[&[2.0]]));
        let unused = tape.param(t(&[&[1.0, 1.0]]));
        let loss = tape.sum(used).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(unused).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(grads.get(used).unwrap().data(), &[1.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::<f64>::new();
        let w = tape.param(t(&[&[1.0, 2.0]]));
        assert_eq!(tape.backward(w).err(), Some(TensorError::NotScalar(vec![1, 2])));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[&[f64::MAX]]));
        assert_eq!(tape.scale(x, 10.0), Err(TensorError::NonFinite { op: "scale" }));
    }

    #[test]
    fn bce_matches_direct_formula() {
        let mut tape = Tape::<f64>::new();
        for (z, y) in [(0.3, 1.0), (-2.0, 0.0), (4.0, 0.0), (-4.0, 1.0)] {
            let l = tape.constant(t(&[&[z]]));
            let b = tape.bce_with_logits(l, y).unwrap();
            let p: f64 = sigmoid(z);
            let direct = if y > 0.5 { -(p.ln()) } else { -((1.0 - p).ln()) };
            let got = tape.value(b).data()[0];
            assert!((got - direct).abs() < 1e-9 * direct.max(1.0), "{z} {y}: {got} vs {direct}");
        }
        // Far in the tails the naive formula overflows; the loss tends to |z|.
        let l = tape.constant(t(&[&[800.0]]));
        let b = tape.bce_with_logits(l, 0.0).unwrap();
        assert_eq!(tape.value(b).data()[0], 800.0);
    }
}
