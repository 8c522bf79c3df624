//! Small dense linear algebra helpers.
//!
//! The factor solvers only ever need d x d symmetric positive definite
//! systems (d is the latent dimension, tens at most), so a plain Cholesky
//! factorization is enough and avoids linking an external LAPACK.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Solves `A x = b` for symmetric positive definite `A` (row-major, d x d).
///
/// `A` is overwritten with its Cholesky factor and `b` with the solution.
/// Fails if a pivot drops below `1e-300`, i.e. the matrix is not numerically
/// positive definite; callers add a ridge term before calling when the system
/// may be rank-deficient.
pub fn solve_spd_in_place(a: &mut [f64], b: &mut [f64], d: usize) -> Result<()> {
    debug_assert_eq!(a.len(), d * d);
    debug_assert_eq!(b.len(), d);

    // Lower-triangular Cholesky, A = L L^T.
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if !(diag > 1e-300) {
            return Err(Error::Numerical(format!(
                "Cholesky pivot {diag:e} at column {j}: matrix not positive definite"
            )));
        }
        let ljj = diag.sqrt();
        a[j * d + j] = ljj;
        for i in (j + 1)..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / ljj;
        }
    }

    // Forward substitution: L y = b.
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * d + k] * b[k];
        }
        b[i] = s / a[i * d + i];
    }

    // Back substitution: L^T x = y.
    for i in (0..d).rev() {
        let mut s = b[i];
        for k in (i + 1)..d {
            s -= a[k * d + i] * b[k];
        }
        b[i] = s / a[i * d + i];
    }
    Ok(())
}

#[inline]
#[must_use]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[must_use]
pub fn frobenius(m: &ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// ||a - b||_F / ||b||_F, the relative change used by iteration stop rules.
/// Returns the absolute change when `b` is (numerically) zero.
#[must_use]
pub fn relative_change(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        num += (x - y) * (x - y);
        den += y * y;
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Numerically stable log(sum(exp(xs))). `-inf` entries are allowed and
/// contribute nothing; returns `-inf` for an all `-inf` (or empty) input.
#[must_use]
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}
