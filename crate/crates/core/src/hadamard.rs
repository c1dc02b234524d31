//! Classical Hadamard transforms in natural (Hadamard) order.
//!
//! The fast transform is the iterative in-place butterfly: `log2 N` stages of
//! sum/difference pairs, no bit-reversal or Gray-code permutation. The naive
//! matrix product is kept as a correctness oracle.

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::fsqrt;
use crate::{Error, Matrix, Real, Result};

/// Normalization applied by a forward/inverse transform pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    /// `sqrt(1/N)` on both the forward and the inverse transform. The
    /// transform is then orthonormal and its own inverse.
    #[default]
    Symmetric,
    /// Unscaled forward transform, `1/N` on the inverse.
    FoldedInverse,
}

impl Convention {
    /// Scale applied after the unnormalized forward butterfly for `len` points.
    pub fn forward_scale(self, len: usize) -> f64 {
        match self {
            Convention::Symmetric => 1.0 / fsqrt(len as f64),
            Convention::FoldedInverse => 1.0,
        }
    }

    /// Scale applied after the unnormalized inverse butterfly for `len` points.
    pub fn inverse_scale(self, len: usize) -> f64 {
        match self {
            Convention::Symmetric => 1.0 / fsqrt(len as f64),
            Convention::FoldedInverse => 1.0 / len as f64,
        }
    }
}

pub(crate) fn ensure_pow2(len: usize) -> Result<()> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(len));
    }
    Ok(())
}

/// The unnormalized `±1` Hadamard matrix of order `n`, built by the block
/// recursion `H_2n = [[H_n, H_n], [H_n, -H_n]]` starting from `H_1 = [1]`.
pub fn hadamard_matrix(n: usize) -> Result<Matrix<i32>> {
    ensure_pow2(n)?;
    let mut h = vec![1i32];
    let mut size = 1;
    while size < n {
        let next = size * 2;
        let mut grown = vec![0i32; next * next];
        for r in 0..size {
            for c in 0..size {
                let v = h[r * size + c];
                grown[r * next + c] = v;
                grown[r * next + c + size] = v;
                grown[(r + size) * next + c] = v;
                grown[(r + size) * next + c + size] = -v;
            }
        }
        h = grown;
        size = next;
    }
    Matrix::from_vec(n, n, h)
}

/// Hadamard transform as an explicit `O(N^2)` matrix-vector product.
pub fn naive_ht(x: &[f64], convention: Convention) -> Result<Vec<f64>> {
    let n = x.len();
    let h = hadamard_matrix(n)?;
    let scale = convention.forward_scale(n);
    Ok((0..n)
        .map(|k| {
            scale
                * h.row(k)
                    .iter()
                    .zip(x)
                    .map(|(&s, &v)| s as f64 * v)
                    .sum::<f64>()
        })
        .collect())
}

/// Unnormalized fast Hadamard transform, in place.
pub fn fht_in_place<T: Real>(data: &mut [T]) -> Result<()> {
    ensure_pow2(data.len())?;
    butterfly(data);
    Ok(())
}

fn butterfly<T: Real>(data: &mut [T]) {
    let n = data.len();
    let mut half = 1;
    while half < n {
        for block in data.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        half *= 2;
    }
}

fn scale_all<T: Real>(data: &mut [T], scale: f64) {
    if scale != 1.0 {
        let s = T::lit(scale);
        data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Fast forward transform, `O(N log N)`.
pub fn fht1d<T: Real>(x: &[T], convention: Convention) -> Result<Vec<T>> {
    let mut out = x.to_vec();
    fht_in_place(&mut out)?;
    let scale = convention.forward_scale(out.len());
    scale_all(&mut out, scale);
    Ok(out)
}

/// Inverse of [`fht1d`] under the same convention.
pub fn ifht1d<T: Real>(x: &[T], convention: Convention) -> Result<Vec<T>> {
    let mut out = x.to_vec();
    fht_in_place(&mut out)?;
    let scale = convention.inverse_scale(out.len());
    scale_all(&mut out, scale);
    Ok(out)
}

/// Unnormalized separable 2D transform of a row-major `rows x cols` block, in
/// place: every row, then every column.
pub fn fht2d_in_place<T: Real>(data: &mut [T], rows: usize, cols: usize) -> Result<()> {
    ensure_pow2(rows)?;
    ensure_pow2(cols)?;
    if data.len() != rows * cols {
        return Err(Error::LengthMismatch {
            left: data.len(),
            right: rows * cols,
        });
    }
    for row in data.chunks_exact_mut(cols) {
        butterfly(row);
    }
    // Column pass as butterflies between whole rows.
    let mut half = 1;
    while half < rows {
        for block in data.chunks_exact_mut(2 * half * cols) {
            let (lo, hi) = block.split_at_mut(half * cols);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        half *= 2;
    }
    Ok(())
}

/// Two-dimensional forward transform.
pub fn fht2d<T: Real>(x: &Matrix<T>, convention: Convention) -> Result<Matrix<T>> {
    let (rows, cols) = x.shape();
    let mut out = x.as_slice().to_vec();
    fht2d_in_place(&mut out, rows, cols)?;
    scale_all(&mut out, convention.forward_scale(rows * cols));
    Matrix::from_vec(rows, cols, out)
}

/// Inverse of [`fht2d`] under the same convention.
pub fn ifht2d<T: Real>(x: &Matrix<T>, convention: Convention) -> Result<Matrix<T>> {
    let (rows, cols) = x.shape();
    let mut out = x.as_slice().to_vec();
    fht2d_in_place(&mut out, rows, cols)?;
    scale_all(&mut out, convention.inverse_scale(rows * cols));
    Matrix::from_vec(rows, cols, out)
}

/// Dyadic (XOR) convolution `y[n] = sum_m a[m] * x[n ^ m]`, by brute force.
pub fn dyadic_conv(a: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if a.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: x.len(),
        });
    }
    ensure_pow2(a.len())?;
    Ok((0..x.len())
        .map(|n| a.iter().enumerate().map(|(m, &am)| am * x[n ^ m]).sum())
        .collect())
}

/// Outcome of a convolution-theorem comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvTheoremReport {
    pub holds: bool,
    pub max_abs_error: f64,
    pub tolerance: f64,
}

/// Both sides of the Hadamard convolution theorem under the symmetric convention:
/// `H(a *_d x)` and `sqrt(N) * H(a) ∘ H(x)`.
///
/// With `sqrt(1/N)` on each transform the elementwise product picks up one
/// extra `1/sqrt(N)`, so the right-hand side carries the compensating `sqrt(N)`.
pub fn conv_theorem_sides(a: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let y = dyadic_conv(a, x)?;
    let lhs = fht1d(&y, Convention::Symmetric)?;
    let fa = fht1d(a, Convention::Symmetric)?;
    let fx = fht1d(x, Convention::Symmetric)?;
    let root_n = fsqrt(a.len() as f64);
    let rhs = fa.iter().zip(&fx).map(|(p, q)| root_n * p * q).collect();
    Ok((lhs, rhs))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

/// Checks `H(a *_d x) == sqrt(N) * H(a) ∘ H(x)` to an absolute tolerance.
pub fn conv_theorem_check(a: &[f64], x: &[f64], tol: f64) -> Result<ConvTheoremReport> {
    let (lhs, rhs) = conv_theorem_sides(a, x)?;
    let max_abs_error = max_abs_diff(&lhs, &rhs);
    Ok(ConvTheoremReport {
        holds: max_abs_error < tol,
        max_abs_error,
        tolerance: tol,
    })
}
