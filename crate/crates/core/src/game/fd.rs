//! Central finite-difference checks for user-supplied derivative oracles.
//!
//! Errors are reported relative to the analytic value:
//! `max_k |fd_k − exact_k| / max(1, ‖exact‖∞)`.

use nalgebra::{DMatrix, DVector};

use super::{game_hessian, pseudogradient, ConstraintFunction, GameProblem};
use crate::error::Result;

/// Default step for first derivatives of costs.
pub const STEP_GRADIENT: f64 = 1e-6;
/// Default step for differentiating the pseudogradient.
pub const STEP_HESSIAN: f64 = 1e-6;

pub const TOL_GRADIENT: f64 = 1e-5;
pub const TOL_HESSIAN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdCheck {
    pub rel_error: f64,
    pub tol: f64,
}

impl FdCheck {
    pub fn passed(&self) -> bool {
        self.rel_error <= self.tol
    }
}

pub fn rel_error_vec(approx: &DVector<f64>, exact: &DVector<f64>) -> f64 {
    (approx - exact).amax() / exact.amax().max(1.0)
}

pub fn rel_error_mat(approx: &DMatrix<f64>, exact: &DMatrix<f64>) -> f64 {
    if exact.is_empty() {
        return 0.0;
    }
    (approx - exact).amax() / exact.amax().max(1.0)
}

/// Central differences of each `J_i` with respect to its own block.
pub fn fd_pseudogradient(game: &GameProblem, a: &DVector<f64>, h: f64) -> DVector<f64> {
    let layout = game.layout();
    let mut out = DVector::zeros(a.len());
    for i in 0..layout.n_agents() {
        for k in layout.range(i) {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[k] += h;
            am[k] -= h;
            out[k] = (game.costs().cost(i, &ap) - game.costs().cost(i, &am)) / (2.0 * h);
        }
    }
    out
}

/// Central differences of the pseudogradient (columns of the game Hessian).
pub fn fd_game_hessian(game: &GameProblem, a: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
    jacobian_fd(|x| pseudogradient(game, x), a, h)
}

/// Central-difference Jacobian of a vector map.
pub fn jacobian_fd<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let f0 = f(x)?;
    let mut j = DMatrix::zeros(f0.len(), x.len());
    for k in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (f(&xp)? - f(&xm)?) / (2.0 * h);
        j.column_mut(k).copy_from(&col);
    }
    Ok(j)
}

pub fn check_pseudogradient(game: &GameProblem, a: &DVector<f64>) -> Result<FdCheck> {
    let exact = pseudogradient(game, a)?;
    let approx = fd_pseudogradient(game, a, STEP_GRADIENT);
    Ok(FdCheck {
        rel_error: rel_error_vec(&approx, &exact),
        tol: TOL_GRADIENT,
    })
}

pub fn check_game_hessian(game: &GameProblem, a: &DVector<f64>) -> Result<FdCheck> {
    let exact = game_hessian(game, a)?.assembled;
    let approx = fd_game_hessian(game, a, STEP_HESSIAN)?;
    Ok(FdCheck {
        rel_error: rel_error_mat(&approx, &exact),
        tol: TOL_HESSIAN,
    })
}

/// Own Hessian blocks must be symmetric.
pub fn check_own_hessian_symmetry(game: &GameProblem, a: &DVector<f64>) -> Result<FdCheck> {
    let h = game_hessian(game, a)?;
    let mut worst: f64 = 0.0;
    for (i, row) in h.blocks.iter().enumerate() {
        let b = &row[i];
        worst = worst.max(rel_error_mat(b, &b.transpose()));
    }
    Ok(FdCheck {
        rel_error: worst,
        tol: 1e-12,
    })
}

pub fn check_constraint_jacobian(g: &dyn ConstraintFunction, a: &DVector<f64>) -> Result<FdCheck> {
    let exact = g.jacobian(a);
    let approx = jacobian_fd(|x| Ok(g.value(x)), a, STEP_GRADIENT)?;
    Ok(FdCheck {
        rel_error: rel_error_mat(&approx, &exact),
        tol: TOL_GRADIENT,
    })
}
