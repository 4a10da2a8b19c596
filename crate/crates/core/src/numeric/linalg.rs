//! Dense linear algebra helpers.
//!
//! Small systems (at most the number of filters) go through an in-place LU
//! on flat row-major buffers; Gram-sized work uses nalgebra.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, Dyn};

/// In-place LU with partial pivoting of the row-major `n x n` matrix `a`,
/// solving `a x = b` into `b`. Returns `ln |det a|` and the sign of the
/// determinant, or `None` when the matrix is singular.
pub fn lu_solve(a: &mut [f64], n: usize, b: &mut [f64]) -> Option<(f64, f64)> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut sign = 1.0;
    let mut log_det = 0.0;
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
            sign = -sign;
        }
        let d = a[col * n + col];
        if d < 0.0 {
            sign = -sign;
        }
        log_det += d.abs().ln();
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f != 0.0 {
                a[row * n + col] = f;
                for k in col + 1..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            } else {
                a[row * n + col] = 0.0;
            }
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * b[k];
        }
        b[row] = acc / a[row * n + row];
    }
    Some((log_det, sign))
}

/// Cholesky factor of a PSD matrix, adding `jitter * scale` to the diagonal
/// with `jitter` escalating by 10x from `1e-10` up to `1e-4`.
///
/// Returns the factor and the jitter that succeeded (zero when the matrix
/// factors as given).
pub fn cholesky_with_jitter(m: &DMatrix<f64>, scale: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok((ch, 0.0));
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut jitter = 1e-10;
    while jitter <= 1e-4 * (1.0 + 1e-9) {
        let mut shifted = m.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter * scale;
        }
        if let Some(ch) = shifted.cholesky() {
            return Ok((ch, jitter * scale));
        }
        jitter *= 10.0;
    }
    Err(Error::Cholesky {
        jitter: 1e-4 * scale,
    })
}
