//! Small dense and banded linear algebra used by the solvers.

use nalgebra::DMatrix;

use crate::error::{Result, SolverError};

/// Solves a tridiagonal system with the Thomas algorithm.
///
/// `lower[i]` multiplies `x[i-1]` in row `i` (so `lower[0]` is ignored) and
/// `upper[i]` multiplies `x[i+1]` (so `upper[n-1]` is ignored).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 || !denom.is_finite() {
        return Err(SolverError::Singular {
            context: "tridiagonal solve (row 0)".into(),
        });
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(SolverError::Singular {
                context: format!("tridiagonal solve (row {i})"),
            });
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Inverts a small row-major `k × k` matrix.
pub fn invert(matrix: &[f64], k: usize, context: &str) -> Result<Vec<f64>> {
    let m = DMatrix::from_row_slice(k, k, matrix);
    let inv = m.try_inverse().ok_or_else(|| SolverError::Singular {
        context: context.to_string(),
    })?;
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            out[i * k + j] = inv[(i, j)];
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of a symmetric row-major `k × k` matrix.
pub fn min_symmetric_eigenvalue(matrix: &[f64], k: usize) -> f64 {
    let m = DMatrix::from_row_slice(k, k, matrix);
    m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// `out = A x` for a row-major `n × n` matrix.
#[inline]
pub fn mat_vec(a: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &a[i * n..(i + 1) * n];
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}
