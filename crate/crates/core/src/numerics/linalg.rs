use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense row/column matrix of `f64`.
pub type Matrix = DMatrix<f64>;

/// Relative singular-value threshold for [`rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Solves `A·X = B` for square `A`.
///
/// Rejects matrices whose 2-norm condition number exceeds 1e12.
pub fn solve_linear(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::domain(format!("solve_linear: A is {}x{}", a.nrows(), a.ncols())));
    }
    if a.nrows() != b.nrows() {
        return Err(Error::domain("solve_linear: row mismatch between A and B"));
    }
    let condition = condition_number(a);
    if !(condition <= 1e12) {
        return Err(Error::Singular { condition });
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or(Error::Singular { condition: f64::INFINITY })
}

/// 2-norm condition number `σ_max / σ_min`; infinite for singular input.
pub fn condition_number(a: &Matrix) -> f64 {
    if a.is_empty() || a.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank: singular values above `tol · σ_max`.
pub fn rank(a: &Matrix, tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
