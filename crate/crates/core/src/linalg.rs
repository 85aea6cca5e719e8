//! Dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

/// Shift applied to the diagonal when a Newton system is numerically singular.
pub const TIKHONOV_SHIFT: f64 = 1e-12;

/// Pivot ratio below which an LU factorization is treated as singular.
const PIVOT_RATIO: f64 = 1e-14;

/// Outcome of [`solve_regularized`].
#[derive(Debug, Clone)]
pub struct LinearSolve {
    pub x: DVector<f64>,
    /// True when the plain factorization was rejected and the shifted system was used.
    pub regularized: bool,
}

/// Solves `a x = b` by LU with partial pivoting. A near-singular matrix is
/// retried once as `(a + shift I) x = b` with `shift = 1e-12 max(1, ‖a‖∞)`.
/// Returns `None` when both attempts fail or produce non-finite values.
pub fn solve_regularized(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<LinearSolve> {
    if a.nrows() == 0 {
        return Some(LinearSolve {
            x: DVector::zeros(0),
            regularized: false,
        });
    }
    if let Some(x) = solve_lu_checked(a, b) {
        return Some(LinearSolve {
            x,
            regularized: false,
        });
    }
    let shift = TIKHONOV_SHIFT * inf_norm(a).max(1.0);
    let mut shifted = a.clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] += shift;
    }
    let lu = shifted.lu();
    let x = lu.solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(LinearSolve {
        x,
        regularized: true,
    })
}

/// LU solve that refuses numerically singular factorizations.
pub fn solve_lu_checked(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = a.clone().lu();
    let u = lu.u();
    let n = u.nrows().min(u.ncols());
    let mut max_pivot = 0.0_f64;
    let mut min_pivot = f64::INFINITY;
    for i in 0..n {
        let p = u[(i, i)].abs();
        max_pivot = max_pivot.max(p);
        min_pivot = min_pivot.min(p);
    }
    if !(max_pivot > 0.0) || min_pivot <= PIVOT_RATIO * max_pivot {
        return None;
    }
    let x = lu.solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Minimum-norm least-squares solution of `a x ≈ b`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    if a.nrows() == 0 {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1e-300);
    svd.solve(b, eps)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

pub fn smallest_singular_value(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return f64::INFINITY;
    }
    a.clone().svd(false, false).singular_values.min()
}

pub fn symmetric_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Sorted (ascending) eigenvalues of the symmetric part of `a`.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetric_part(a)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn all_finite_matrix(a: &DMatrix<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Euclidean distance between two vectors of equal length.
pub fn distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm()
}
