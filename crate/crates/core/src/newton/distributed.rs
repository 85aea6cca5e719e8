use std::time::Instant;

use nalgebra::DVector;

use super::{block_residual, diverged, inner_config, ne_residual, IterateTrace, NewtonConfig};
use crate::error::{Error, Result};
use crate::game::{own_hessian, FeasibleSet, GameProblem, ProductSet};
use crate::linalg::{smallest_singular_value, spectral_norm};
use crate::vi::{solve_affine_vi, AffineViProblem};

/// Agent `i`'s Josephy-Newton step using only its own gradient and Hessian
/// block, with the other agents held at their values in `a`.
fn agent_step(
    game: &GameProblem,
    set: &FeasibleSet,
    agent: usize,
    a: &DVector<f64>,
    cfg: &NewtonConfig,
    iteration: usize,
) -> Result<DVector<f64>> {
    let layout = game.layout();
    let ai = layout.block(a, agent);
    let g = game.costs().gradient(agent, a);
    let m = own_hessian(game, agent, a)?;
    let q = &g - &m * &ai;
    let sub = AffineViProblem::new(m, q, ProductSet::new(vec![set.clone()]))?;
    let inner = inner_config(cfg, block_residual(game, agent, a)?);
    let sol = solve_affine_vi(&sub, &ai, &inner)?;
    if !sol.converged() {
        return Err(Error::InnerSolveFailed {
            iteration,
            agent: Some(agent),
        });
    }
    Ok(if cfg.damping == 1.0 {
        sol.a
    } else {
        &ai + (sol.a - &ai) * cfg.damping
    })
}

/// One synchronous (Jacobi) round of Mechanism 1: every agent solves its
/// block subproblem at the same `a`; results are concatenated. Agent
/// subproblems are independent, so the order of evaluation does not matter.
pub fn mechanism1_step(game: &GameProblem, a: &DVector<f64>, cfg: &NewtonConfig, iteration: usize) -> Result<DVector<f64>> {
    let sets = game.agent_sets()?;
    let layout = game.layout();
    let mut next = a.clone();
    for (i, set) in sets.iter().enumerate() {
        let ai = agent_step(game, set, i, a, cfg, iteration)?;
        layout.set_block(&mut next, i, &ai);
    }
    Ok(next)
}

/// Distributed Josephy-Newton (Mechanism 1), a local method.
pub fn distributed_jn_mechanism1(game: &GameProblem, a0: &DVector<f64>, cfg: &NewtonConfig) -> Result<IterateTrace> {
    cfg.validate()?;
    game.check_point(a0)?;
    let sets = game.sets()?;
    game.agent_sets()?;
    let clock = Instant::now();
    let mut a = a0.clone();
    let mut warnings = Vec::new();
    if sets.max_violation(&a) > 0.0 {
        a = sets.project(&a);
        warnings.push("start point was infeasible and has been projected".to_string());
    }
    let r0 = ne_residual(game, &a)?;
    let mut trace = IterateTrace::start(a.clone(), r0, None);
    trace.warnings = warnings;
    if r0 <= cfg.tol_outer {
        trace.converged = true;
        return Ok(trace);
    }
    for k in 0..cfg.max_outer {
        let next = mechanism1_step(game, &a, cfg, k)?;
        let r = ne_residual(game, &next)?;
        trace.push(next.clone(), r, None, clock.elapsed().as_secs_f64());
        if diverged(r, r0, cfg.tol_outer) {
            return Err(Error::Diverged { iteration: k + 1, residual: r });
        }
        a = next;
        if r <= cfg.tol_outer {
            trace.converged = true;
            break;
        }
    }
    Ok(trace)
}

/// Update order of the outer best-response loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BestResponseOrder {
    Jacobi,
    GaussSeidel,
}

/// Own Hessian blocks whose smallest singular value is at most this multiple
/// of `max(1, ‖H_ii‖)` are treated as singular.
const SINGULAR_BLOCK_RATIO: f64 = 1e-10;

const CYCLE_TOL: f64 = 1e-12;

fn check_own_block(game: &GameProblem, agent: usize, a: &DVector<f64>) -> Result<()> {
    let m = own_hessian(game, agent, a)?;
    let sigma = smallest_singular_value(&m);
    if sigma <= SINGULAR_BLOCK_RATIO * spectral_norm(&m).max(1.0) {
        return Err(Error::SingularBlock { agent, sigma });
    }
    Ok(())
}

/// Agent `i`'s best response to `a_{-i}`, by inner Josephy-Newton on its
/// block until the block residual is at most `tol_br`.
fn best_response(
    game: &GameProblem,
    set: &FeasibleSet,
    agent: usize,
    a: &DVector<f64>,
    cfg: &NewtonConfig,
    tol_br: f64,
    round: usize,
) -> Result<DVector<f64>> {
    let layout = game.layout();
    let mut x = a.clone();
    for _ in 0..cfg.max_outer {
        if block_residual(game, agent, &x)? <= tol_br {
            break;
        }
        check_own_block(game, agent, &x)?;
        let ai = agent_step(game, set, agent, &x, cfg, round)?;
        layout.set_block(&mut x, agent, &ai);
    }
    Ok(layout.block(&x, agent))
}

/// Best-response dynamics with Josephy-Newton best responses (Mechanism 2).
///
/// Each outer round updates every agent to its (inexact) best response, in
/// Jacobi or Gauss-Seidel order. Stops when the full natural-map residual is at
/// most `cfg.tol_outer`; a round that revisits an earlier outer iterate
/// (within `1e-12`) without converging is reported as a cycle.
pub fn distributed_jn_mechanism2(
    game: &GameProblem,
    a0: &DVector<f64>,
    cfg: &NewtonConfig,
    order: BestResponseOrder,
    tol_br: f64,
) -> Result<IterateTrace> {
    cfg.validate()?;
    game.check_point(a0)?;
    if !(tol_br > 0.0) {
        return Err(Error::InvalidInput(format!("tol_br must be positive, got {tol_br}")));
    }
    let sets = game.agent_sets()?;
    let joint = game.sets()?;
    let clock = Instant::now();
    let mut a = a0.clone();
    let mut warnings = Vec::new();
    if joint.max_violation(&a) > 0.0 {
        a = joint.project(&a);
        warnings.push("start point was infeasible and has been projected".to_string());
    }
    for i in 0..game.n_agents() {
        check_own_block(game, i, &a)?;
    }
    let r0 = ne_residual(game, &a)?;
    let mut trace = IterateTrace::start(a.clone(), r0, None);
    trace.warnings = warnings;
    if r0 <= cfg.tol_outer {
        trace.converged = true;
        return Ok(trace);
    }
    let layout = game.layout();
    for round in 0..cfg.max_outer {
        let mut next = a.clone();
        for (i, set) in sets.iter().enumerate() {
            let base = match order {
                BestResponseOrder::Jacobi => &a,
                BestResponseOrder::GaussSeidel => &next,
            };
            let bi = best_response(game, set, i, base, cfg, tol_br, round)?;
            layout.set_block(&mut next, i, &bi);
        }
        let r = ne_residual(game, &next)?;
        let revisited = trace.iterates.iter().any(|p| (p - &next).amax() <= CYCLE_TOL);
        trace.push(next.clone(), r, None, clock.elapsed().as_secs_f64());
        if r <= cfg.tol_outer {
            trace.converged = true;
            break;
        }
        if revisited {
            return Err(Error::OuterCycleDetected { round: round + 1 });
        }
        if diverged(r, r0, cfg.tol_outer) {
            return Err(Error::Diverged { iteration: round + 1, residual: r });
        }
        a = next;
    }
    Ok(trace)
}
