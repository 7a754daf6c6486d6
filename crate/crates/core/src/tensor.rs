//! Dense row-major kernels: the handful of operations the toy decoder needs.
//!
//! Every product here is computed one output row at a time with a fixed
//! accumulation order, so encoding a sequence in one batch or in several
//! chunks produces bit-identical activations.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Wraps an existing buffer. Fails if the length is wrong or any entry is
    /// non-finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        ensure_finite("from_vec", &data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape {
                    op: "from_rows",
                    left: (i, r.len()),
                    right: (0, cols),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    /// Elementwise cast to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&x| U::from_f64_lossy(x.to_f64_lossy()))
                .collect(),
        }
    }

    /// Embedding lookup: copies of the requested rows, stacked.
    pub fn gather_rows(&self, ids: &[u32]) -> Result<Matrix<T>> {
        let mut out = Vec::with_capacity(ids.len() * self.cols);
        for &id in ids {
            let id = id as usize;
            if id >= self.rows {
                return Err(Error::arg(format!(
                    "row {id} out of range for {} rows",
                    self.rows
                )));
            }
            out.extend_from_slice(self.row(id));
        }
        Ok(Matrix {
            rows: ids.len(),
            cols: self.cols,
            data: out,
        })
    }
}

fn ensure_finite<T: Scalar>(op: &str, data: &[T]) -> Result<()> {
    if data.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::arg(format!("{op}: non-finite entry")))
    }
}

/// `out = x · w` for a single row vector `x` of length `w.rows()`.
#[inline]
pub(crate) fn vec_mat_into<T: Scalar>(x: &[T], w: &Matrix<T>, out: &mut [T]) {
    debug_assert_eq!(x.len(), w.rows);
    debug_assert_eq!(out.len(), w.cols);
    out.fill(T::zero());
    for (k, &xk) in x.iter().enumerate() {
        if xk == T::zero() {
            continue;
        }
        let wrow = &w.data[k * w.cols..(k + 1) * w.cols];
        for (o, &wv) in out.iter_mut().zip(wrow) {
            *o += xk * wv;
        }
    }
}

/// Matrix product `a · b`.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut data = vec![T::zero(); a.rows * b.cols];
    for (r, out) in data.chunks_mut(b.cols.max(1)).enumerate().take(a.rows) {
        vec_mat_into(a.row(r), b, out);
    }
    ensure_finite("matmul", &data)?;
    Ok(Matrix {
        rows: a.rows,
        cols: b.cols,
        data,
    })
}

/// Numerically stable softmax of one row.
pub fn softmax_row<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(Error::arg("softmax of an empty row"));
    }
    ensure_finite("softmax_row", v)?;
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place<T: Scalar>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = T::one() / sum;
    for x in v.iter_mut() {
        *x *= inv;
    }
}

/// `out_k = gain_k · v_k / sqrt(mean(v²) + eps)`. An all-zero input with
/// `eps == 0` yields zeros rather than NaN.
pub fn rms_norm<T: Scalar>(v: &[T], gain: &[T], eps: T) -> Result<Vec<T>> {
    if v.len() != gain.len() {
        return Err(Error::Shape {
            op: "rms_norm",
            left: (1, v.len()),
            right: (1, gain.len()),
        });
    }
    if eps < T::zero() || !eps.is_finite() {
        return Err(Error::arg("rms_norm eps must be finite and non-negative"));
    }
    let mut out = vec![T::zero(); v.len()];
    rms_norm_into(v, gain, eps, &mut out);
    Ok(out)
}

pub(crate) fn rms_norm_into<T: Scalar>(v: &[T], gain: &[T], eps: T, out: &mut [T]) {
    let n = T::from_usize(v.len()).unwrap_or_else(T::one);
    let ms = v.iter().map(|&x| x * x).sum::<T>() / n + eps;
    if ms == T::zero() {
        out.fill(T::zero());
        return;
    }
    let inv = T::one() / ms.sqrt();
    for ((o, &x), &g) in out.iter_mut().zip(v).zip(gain) {
        *o = g * x * inv;
    }
}

/// tanh approximation of GeLU.
#[inline]
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let half = T::from_f64_lossy(0.5);
    let c = T::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt());
    let k = T::from_f64_lossy(0.044715);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}
