//! Josephy-Newton iterations for NE problems.

mod centralized;
mod distributed;
mod perturbation;
mod rate;
mod trace;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::game::{pseudogradient, GameProblem};
use crate::vi::ViConfig;

pub use centralized::{josephy_newton, jn_step, perturbed_josephy_newton, reference_solution};
pub use distributed::{
    distributed_jn_mechanism1, distributed_jn_mechanism2, mechanism1_step, BestResponseOrder,
};
pub use perturbation::{PerturbationDistribution, PerturbationMode, PerturbationSpec, PerturbationStream};
pub use rate::{
    estimate_iss_constants, estimate_iss_from_triples, estimate_q_rate, iss_triples, q_rate_from_errors,
    ultimate_error, IssEstimate, IssTriple,
    QRateClass, QRateEstimate, MIN_ISS_TRIPLES, Q_RATE_FLOOR, Q_RATIO_BOUND,
};
pub use trace::{parse_trace_csv, IterateTrace, TraceRow, TRACE_CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Terminal natural-map residual of the original problem.
    pub tol_outer: f64,
    pub max_outer: usize,
    pub inner: ViConfig,
    /// Step fraction in `(0, 1]`; `1` is the pure method.
    pub damping: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol_outer: 1e-10,
            max_outer: 50,
            inner: ViConfig::default(),
            damping: 1.0,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_outer > 0.0) || !self.tol_outer.is_finite() {
            return Err(Error::InvalidInput(format!("tol_outer must be positive, got {}", self.tol_outer)));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidInput("max_outer must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.inner.tol > 0.0) || self.inner.max_iter == 0 {
            return Err(Error::InvalidInput("inner tolerance and iteration limit must be positive".into()));
        }
        Ok(())
    }
}

/// A residual larger than this multiple of the initial one counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Natural-map residual `‖a − P_A(a − F(a))‖` of `VI(A, F)` for an NE-form game.
pub fn ne_residual(game: &GameProblem, a: &DVector<f64>) -> Result<f64> {
    let sets = game.sets()?;
    let f = pseudogradient(game, a)?;
    Ok((a - sets.project(&(a - f))).norm())
}

/// Natural-map residual of agent `i`'s block with the others fixed.
pub fn block_residual(game: &GameProblem, agent: usize, a: &DVector<f64>) -> Result<f64> {
    let sets = game.agent_sets()?;
    let g = game.costs().gradient(agent, a);
    let ai = game.layout().block(a, agent);
    Ok((&ai - sets[agent].project(&(&ai - g))).norm())
}

fn diverged(residual: f64, initial: f64, tol: f64) -> bool {
    !residual.is_finite() || residual > DIVERGENCE_FACTOR * initial.max(tol)
}

/// Inner tolerance for a linearized subproblem solved at a point with outer
/// residual `r`: a forcing term `1e-3·r`, never looser than the configured
/// inner tolerance and never below `1e-14`.
fn inner_config(cfg: &NewtonConfig, r: f64) -> ViConfig {
    ViConfig {
        tol: cfg.inner.tol.min((1e-3 * r).max(1e-14)),
        ..cfg.inner
    }
}
