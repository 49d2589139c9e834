use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("softmax row {row} has every entry masked")]
    AllMaskedRow { row: usize },
    #[error("masked reduction over zero rows")]
    AllMasked,
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("data length {len} does not match shape {shape:?}")]
    BadData { shape: Vec<usize>, len: usize },
}

/// Floating-point element type. `f32` is used for training and inference,
/// `f64` for gradient checks.
pub trait Scalar: Float + Default + Debug + Display + Send + Sync + Sum + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = a·b + beta·c` over strided row-major views.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        beta: f32,
        c: &mut [f32],
    ) {
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        // SAFETY: bounds asserted above; the strides describe dense m×k, k×n
        // and m×n matrices inside those slices.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        beta: f64,
        c: &mut [f64],
    ) {
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        // SAFETY: as for f32.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

/// Dense row-major tensor. Vectors are stored as `1×n` matrices by the
/// tape operations.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self, TensorError> {
        if shape.iter().product::<usize>() != data.len() || shape.contains(&0) {
            return Err(TensorError::BadData { shape: shape.to_vec(), len: data.len() });
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(v: T) -> Self {
        Tensor { shape: vec![1, 1], data: vec![v] }
    }

    pub fn row(values: Vec<T>) -> Self {
        Tensor { shape: vec![1, values.len()], data: values }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, TensorError> {
        Self::new(&[rows, cols], data)
    }

    pub fn from_f64_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let data = rows.iter().flat_map(|r| r.iter().map(|&v| T::from_f64(v))).collect();
        Tensor { shape: vec![rows.len(), cols], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)` for a 2-D tensor; 1-D tensors read as a single row.
    pub fn dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => (1, self.data.len()),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims().0
    }

    pub fn cols(&self) -> usize {
        self.dims().1
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols() + c]
    }

    pub fn row_slice(&self, r: usize) -> &[T] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TensorError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(TensorError::BadData { shape: shape.to_vec(), len: self.data.len() });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v.as_f64()).collect()
    }
}

/// Plain matrix product with optional transposed operands. `a` is `m×k`
/// (or `k×m` when `ta`), `b` is `k×n` (or `n×k` when `tb`).
pub fn matmul<T: Scalar>(
    a: &Tensor<T>,
    ta: bool,
    b: &Tensor<T>,
    tb: bool,
) -> Result<Tensor<T>, TensorError> {
    let (ar, ac) = a.dims();
    let (br, bc) = b.dims();
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    if k != k2 {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let mut out = vec![T::zero(); m * n];
    if m.min(k).min(n) <= SKINNY {
        skinny_matmul(m, k, n, &a.data, ta, &b.data, tb, &mut out);
    } else {
        let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
        let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
        T::gemm(m, k, n, &a.data, rsa, csa, &b.data, rsb, csb, T::zero(), &mut out);
    }
    Ok(Tensor { shape: vec![m, n], data: out })
}

/// Below this smallest dimension, packing for the blocked kernel costs
/// more than the product itself.
const SKINNY: usize = 16;

/// Direct loops for thin products. Every output entry accumulates its `k`
/// terms in ascending order, whatever the transposes.
#[allow(clippy::too_many_arguments)]
fn skinny_matmul<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], ta: bool, b: &[T], tb: bool, c: &mut [T]) {
    // Row-major k×n view of op(b); a transposed b is copied once so the
    // inner loop always runs over contiguous memory.
    let copied;
    let b = if tb {
        let mut t = vec![T::zero(); k * n];
        for j in 0..n {
            for p in 0..k {
                t[p * n + j] = b[j * k + p];
            }
        }
        copied = t;
        &copied[..]
    } else {
        b
    };
    for i in 0..m {
        let out = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = if ta { a[p * m + i] } else { a[i * k + p] };
            for (o, &bv) in out.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o = *o + av * bv;
            }
        }
    }
}
