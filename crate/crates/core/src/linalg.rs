//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Maximum absolute column sum.
pub fn norm_1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute row sum.
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse by pivoted LU together with the 1-norm condition number.
/// Returns `None` when the factorization is singular or produces non-finite
/// entries.
pub fn inverse_with_condition(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let inv = m.clone().lu().try_inverse()?;
    if inv.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let cond = norm_1(m) * norm_1(&inv);
    Some((inv, cond))
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with relative tolerance `rtol` on the largest singular value.
pub fn rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > rtol * top).count(),
        _ => 0,
    }
}

/// Solution of `a x = b`: pivoted LU when square and well conditioned,
/// minimum-norm least squares through the SVD otherwise. Returns the solution
/// and the numerical rank of `a`.
pub fn solve_linear(a: &DMatrix<f64>, b: &DVector<f64>, rtol: f64) -> (DVector<f64>, usize) {
    let r = rank(a, rtol);
    if a.is_square() && r == a.nrows() {
        if let Some(x) = a.clone().lu().solve(b) {
            return (x, r);
        }
    }
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.max();
    let eps = (rtol * top).max(f64::MIN_POSITIVE);
    let x = svd
        .solve(b, eps)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()));
    (x, r)
}
