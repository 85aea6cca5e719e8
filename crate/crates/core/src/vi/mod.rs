//! Affine variational inequalities `VI(A, q + M a)` over products of boxes
//! and polyhedra.

mod enumerate;
mod grid;
mod solver;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::game::{FeasibleSet, ProductSet};

pub use enumerate::{enumerate_active_set_solution, MAX_ENUMERATION_DIM};
pub use grid::{grid_check, GridVerdict};
pub use solver::solve_affine_vi;

/// Find `a ∈ A` with `(a' − a)ᵀ(q + M a) ≥ 0` for all `a' ∈ A`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineViProblem {
    pub m: DMatrix<f64>,
    pub q: DVector<f64>,
    pub set: ProductSet,
}

impl AffineViProblem {
    pub fn new(m: DMatrix<f64>, q: DVector<f64>, set: ProductSet) -> Result<Self> {
        let n = q.len();
        if m.shape() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "M has shape {:?}, expected ({n}, {n})",
                m.shape()
            )));
        }
        check_len("feasible set dimension", n, set.dim())?;
        if !m.iter().chain(q.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("affine VI data must be finite".into()));
        }
        Ok(AffineViProblem { m, q, set })
    }

    /// Single-block box problem.
    pub fn boxed(m: DMatrix<f64>, q: DVector<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        let set = ProductSet::new(vec![FeasibleSet::boxed(lower, upper)?]);
        Self::new(m, q, set)
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// `q + M a`.
    pub fn map(&self, a: &DVector<f64>) -> DVector<f64> {
        &self.m * a + &self.q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViStatus {
    Converged,
    MaxIter,
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ViConfig {
    fn default() -> Self {
        ViConfig {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViSolution {
    pub a: DVector<f64>,
    /// Multipliers of the polyhedral rows (empty for pure boxes).
    pub multipliers: DVector<f64>,
    /// Natural-map residual at `a`.
    pub residual: f64,
    pub status: ViStatus,
    pub iterations: usize,
    pub used_fallback: bool,
}

impl ViSolution {
    pub fn converged(&self) -> bool {
        self.status == ViStatus::Converged
    }
}

/// `‖a − proj_A(a − (q + M a))‖`.
pub fn natural_map_residual(p: &AffineViProblem, a: &DVector<f64>) -> f64 {
    let w = a - p.map(a);
    (a - p.set.project(&w)).norm()
}

/// Euclidean projection of `x` onto `{y : a·y ≤ b}`, through the dual
/// complementarity problem `0 ≤ μ ⊥ b − a x + a aᵀ μ ≥ 0`, `y = x − aᵀ μ`.
pub fn project_polyhedron(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    if a.nrows() == 0 {
        return x.clone();
    }
    let slack = b - a * x;
    if slack.iter().all(|s| *s >= 0.0) {
        return x.clone();
    }
    let m = a * a.transpose();
    let lower = DVector::zeros(a.nrows());
    let upper = DVector::from_element(a.nrows(), f64::INFINITY);
    let Ok(p) = AffineViProblem::boxed(m, slack, lower, upper) else {
        return x.clone();
    };
    let scale = x.amax().max(b.amax()).max(1.0);
    let cfg = ViConfig {
        tol: 1e-14 * scale,
        max_iter: 200,
    };
    let mu0 = DVector::zeros(a.nrows());
    match solve_affine_vi(&p, &mu0, &cfg) {
        Ok(sol) => x - a.transpose() * sol.a,
        Err(_) => x.clone(),
    }
}
