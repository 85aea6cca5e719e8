use std::fmt::Write as _;

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::build::{build_parameterized_game, ParameterizedGame};
use super::scenario::{MpcMode, MpcScenario};
use crate::error::{check_len, Error, Result};
use crate::kkt::{distributed_ssn_step, phi_norm, semismooth_newton, ssn_step, PrimalDualPoint, TieRule};
use crate::newton::{jn_step, josephy_newton, mechanism1_step, ne_residual, NewtonConfig};

/// Solver run inside each closed-loop step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdoSolver {
    JosephyNewton,
    SemismoothNewton,
    DistributedJn,
    DistributedSsn,
}

impl TdoSolver {
    fn check_mode(self, mode: MpcMode) -> Result<()> {
        let ok = match self {
            TdoSolver::JosephyNewton | TdoSolver::DistributedJn => mode == MpcMode::Ne,
            TdoSolver::SemismoothNewton | TdoSolver::DistributedSsn => mode == MpcMode::Gne,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("solver {self:?} does not apply to {mode:?}-mode games")))
        }
    }
}

/// Settings of the reference solve `v*(t) = V(x(t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Randomized restarts probing isolatedness of the solution.
    pub restarts: usize,
    /// Restart perturbation size relative to `max(1, ‖hint‖∞)`.
    pub restart_scale: f64,
    /// Converged restarts farther than this (primal, ∞-norm) flag non-isolation.
    pub isolation_tol: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            tol: 1e-12,
            max_iter: 200,
            restarts: 5,
            restart_scale: 0.5,
            isolation_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcSolverConfig {
    pub solver: TdoSolver,
    pub newton: NewtonConfig,
    /// Kink rule for the semismooth solvers. Dynamics written as paired
    /// inequalities tie at every solution, so the multiplier side is the default.
    pub tie_rule: TieRule,
    pub reference: ReferenceConfig,
}

impl Default for MpcSolverConfig {
    fn default() -> Self {
        MpcSolverConfig {
            solver: TdoSolver::DistributedJn,
            newton: NewtonConfig::default(),
            tie_rule: TieRule::PreferLambda,
            reference: ReferenceConfig::default(),
        }
    }
}

/// Result of a budgeted solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct TdoOutcome {
    pub v: DVector<f64>,
    /// NE natural-map residual or `‖Φ‖` at `v`.
    pub residual: f64,
}

/// Residual of `v` for the horizon game: natural map (NE) or `‖Φ‖` (GNE).
pub fn horizon_residual(pg: &ParameterizedGame, v: &DVector<f64>) -> Result<f64> {
    match pg.mode {
        MpcMode::Ne => ne_residual(&pg.game, v),
        MpcMode::Gne => phi_norm(&pg.game, &PrimalDualPoint::from_stacked(v, pg.n_primal())),
    }
}

/// Exactly `k` iterations of the selected solver warm-started at `v_prev`,
/// without early stopping.
pub fn tdo_step(pg: &ParameterizedGame, v_prev: &DVector<f64>, k: usize, cfg: &MpcSolverConfig) -> Result<TdoOutcome> {
    cfg.solver.check_mode(pg.mode)?;
    check_len("warm start", pg.decision_dim(), v_prev.len())?;
    let mut v = v_prev.clone();
    for it in 0..k {
        v = match cfg.solver {
            TdoSolver::JosephyNewton => jn_step(&pg.game, &v, &cfg.newton, it)?,
            TdoSolver::DistributedJn => mechanism1_step(&pg.game, &v, &cfg.newton, it)?,
            TdoSolver::SemismoothNewton => ssn_step(&pg.game, &v, &cfg.newton, cfg.tie_rule, it)?,
            TdoSolver::DistributedSsn => distributed_ssn_step(&pg.game, &v, &cfg.newton, cfg.tie_rule, it)?,
        };
    }
    let residual = horizon_residual(pg, &v)?;
    Ok(TdoOutcome { v, residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolve {
    pub v: DVector<f64>,
    pub iterations: usize,
    /// Restarts that converged (all to the same primal solution).
    pub restarts_converged: usize,
}

fn solve_to_tolerance(pg: &ParameterizedGame, start: &DVector<f64>, cfg: &MpcSolverConfig) -> Result<(DVector<f64>, usize, bool)> {
    let rc = &cfg.reference;
    let mut newton = NewtonConfig {
        tol_outer: rc.tol,
        max_outer: rc.max_iter,
        damping: 1.0,
        ..cfg.newton
    };
    newton.inner.tol = newton.inner.tol.min(1e-14);
    match pg.mode {
        MpcMode::Ne => {
            let t = josephy_newton(&pg.game, start, &newton)?;
            Ok((t.last().clone(), t.iterations(), t.converged))
        }
        MpcMode::Gne => {
            let z0 = PrimalDualPoint::from_stacked(start, pg.n_primal());
            let t = semismooth_newton(&pg.game, &z0, &newton, cfg.tie_rule)?;
            Ok((t.trace.last().clone(), t.iterations(), t.converged()))
        }
    }
}

/// High-accuracy solution of the horizon game from `hint` (residual `1e-12`,
/// at most 200 iterations), followed by randomized restarts that must all
/// land on the same primal solution.
pub fn reference_solution(
    pg: &ParameterizedGame,
    hint: &DVector<f64>,
    cfg: &MpcSolverConfig,
    seed: u64,
) -> Result<ReferenceSolve> {
    check_len("reference hint", pg.decision_dim(), hint.len())?;
    let (v, iterations, converged) = solve_to_tolerance(pg, hint, cfg)?;
    if !converged {
        return Err(Error::NotConverged {
            residual: horizon_residual(pg, &v)?,
            iterations,
        });
    }
    let rc = &cfg.reference;
    let n = pg.n_primal();
    let scale = rc.restart_scale * hint.rows(0, n).amax().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut restarts_converged = 0;
    for _ in 0..rc.restarts {
        let mut start = v.clone();
        for k in 0..n {
            start[k] += scale * (2.0 * rng.random::<f64>() - 1.0);
        }
        let Ok((w, _, ok)) = solve_to_tolerance(pg, &start, cfg) else { continue };
        if !ok {
            continue;
        }
        restarts_converged += 1;
        if (w.rows(0, n) - v.rows(0, n)).amax() > rc.isolation_tol {
            return Err(Error::NonIsolated {
                witnesses: vec![v.rows(0, n).into_owned(), w.rows(0, n).into_owned()],
            });
        }
    }
    Ok(ReferenceSolve {
        v,
        iterations,
        restarts_converged,
    })
}

/// Per-step record of a closed-loop run.
#[derive(Debug, Clone, Default)]
pub struct ClosedLoopLog {
    pub k_budget: usize,
    pub x: Vec<DVector<f64>>,
    /// Joint first-step input applied at `t`.
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub v_star: Vec<DVector<f64>>,
    /// `‖v(t) − v*(t)‖` over the primal variables.
    pub e: Vec<f64>,
    /// `‖x(t+1) − x(t)‖`.
    pub dx: Vec<f64>,
    pub residual: Vec<f64>,
    pub x_final: DVector<f64>,
    /// Set when the plant state became non-finite; the log then holds the prefix.
    pub aborted: Option<Error>,
}

pub const CLOSED_LOOP_CSV_HEADER: &str = "t,x,u,e,dx,residual";

impl ClosedLoopLog {
    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    pub fn sup_e(&self) -> f64 {
        self.e.iter().copied().fold(0.0, f64::max)
    }

    /// `‖v*(t+1) − v*(t)‖ / ‖Δx(t)‖` for steps with `Δx(t) > 0`.
    pub fn lipschitz_ratios(&self) -> Vec<f64> {
        (0..self.v_star.len().saturating_sub(1))
            .filter(|&t| self.dx[t] > 0.0)
            .map(|t| (&self.v_star[t + 1] - &self.v_star[t]).norm() / self.dx[t])
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let join = |v: &DVector<f64>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        let mut out = String::from(CLOSED_LOOP_CSV_HEADER);
        out.push('\n');
        for t in 0..self.len() {
            let _ = writeln!(
                out,
                "{t},{},{},{},{},{}",
                join(&self.x[t]),
                join(&self.u[t]),
                self.e[t],
                self.dx[t],
                self.residual[t]
            );
        }
        out
    }
}

/// Applies the joint input to every agent's plant.
pub fn plant_step(s: &MpcScenario, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
    let mut next = DVector::zeros(x.len());
    let mut off = 0;
    for (ag, ui) in s.agents.iter().zip(u) {
        let nx = ag.plant.state_dim();
        let xi = x.rows(off, nx).into_owned();
        next.rows_mut(off, nx).copy_from(&ag.plant.step(&xi, ui));
        off += nx;
    }
    next
}

fn stack(u: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(u.iter().map(|v| v.len()).sum(), u.iter().flat_map(|v| v.iter().copied()))
}

/// Time- and agent-distributed closed loop with `s.k_budget` solver
/// iterations per step.
///
/// `v(−1)` is the exact solution at `x0` plus an offset of norm `s.e0` in a
/// seeded random primal direction; the reference `v*(t)` is recomputed online
/// at each realized state, warm-started from `v*(t−1)`.
pub fn run_closed_loop(s: &MpcScenario, cfg: &MpcSolverConfig, seed: u64) -> Result<ClosedLoopLog> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = s.x0.clone();
    let mut pg = build_parameterized_game(s, &x)?;
    cfg.solver.check_mode(pg.mode)?;
    let n = pg.n_primal();
    let mut v_star = reference_solution(&pg, &DVector::zeros(pg.decision_dim()), cfg, seed)
        .map_err(|e| e.at_step(0))?
        .v;
    let dir = DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    let mut v_prev = v_star.clone();
    if dir.norm() > 0.0 {
        let offset = dir.normalize() * s.e0;
        let mut head = v_prev.rows_mut(0, n);
        head += &offset;
    }
    let mut log = ClosedLoopLog {
        k_budget: s.k_budget,
        ..ClosedLoopLog::default()
    };
    for t in 0..s.t_end {
        if t > 0 {
            pg = build_parameterized_game(s, &x).map_err(|e| e.at_step(t))?;
            v_star = reference_solution(&pg, &v_star, cfg, seed.wrapping_add(t as u64))
                .map_err(|e| e.at_step(t))?
                .v;
        }
        let out = tdo_step(&pg, &v_prev, s.k_budget, cfg).map_err(|e| e.at_step(t))?;
        let u = pg.inputs(&out.v);
        let x_next = plant_step(s, &x, &u);
        if !x_next.iter().all(|v| v.is_finite()) {
            log.aborted = Some(Error::NonFiniteState { t });
            break;
        }
        log.e.push((out.v.rows(0, n) - v_star.rows(0, n)).norm());
        log.dx.push((&x_next - &x).norm());
        log.residual.push(out.residual);
        log.x.push(x.clone());
        log.u.push(stack(&u));
        log.v.push(out.v.clone());
        log.v_star.push(v_star.clone());
        v_prev = out.v;
        x = x_next;
    }
    log.x_final = x;
    Ok(log)
}

/// States of the exact MPC loop (`u(t)` from `v*(t)`), `x(0..=t_end)`.
pub fn reference_closed_loop(s: &MpcScenario, cfg: &MpcSolverConfig) -> Result<Vec<DVector<f64>>> {
    s.validate()?;
    let mut x = s.x0.clone();
    let mut states = vec![x.clone()];
    let mut hint: Option<DVector<f64>> = None;
    for t in 0..s.t_end {
        let pg = build_parameterized_game(s, &x).map_err(|e| e.at_step(t))?;
        let h = hint.take().unwrap_or_else(|| DVector::zeros(pg.decision_dim()));
        let v = reference_solution(&pg, &h, cfg, t as u64).map_err(|e| e.at_step(t))?.v;
        x = plant_step(s, &x, &pg.inputs(&v));
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { t });
        }
        states.push(x.clone());
        hint = Some(v);
    }
    Ok(states)
}
