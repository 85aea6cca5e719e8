use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{assemble_phi, limiting_jacobian, Branch, KktLayout, PrimalDualPoint, TieRule};
use crate::error::{Error, Result};
use crate::game::GameProblem;
use crate::linalg::{least_squares, solve_regularized};
use crate::newton::{IterateTrace, NewtonConfig, PerturbationMode, PerturbationSpec, PerturbationStream, DIVERGENCE_FACTOR};

/// Semismooth Newton trace. `trace` runs over stacked `z = (a, λ)` with
/// `residuals[k] = ‖Φ(z^k)‖`; `branches[k]` are the branches used to leave `z^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktTrace {
    pub trace: IterateTrace,
    pub branches: Vec<Vec<Branch>>,
    /// Steps where the Newton matrix needed the Tikhonov shift.
    pub regularized_steps: Vec<usize>,
    pub n: usize,
}

impl KktTrace {
    pub fn point(&self, k: usize) -> PrimalDualPoint {
        PrimalDualPoint::from_stacked(&self.trace.iterates[k], self.n)
    }

    pub fn last_point(&self) -> PrimalDualPoint {
        PrimalDualPoint::from_stacked(self.trace.last(), self.n)
    }

    pub fn converged(&self) -> bool {
        self.trace.converged
    }

    pub fn iterations(&self) -> usize {
        self.trace.iterations()
    }

    pub fn set_reference(&mut self, z_star: &PrimalDualPoint) {
        self.trace.set_reference(&z_star.stacked());
    }
}

/// `λ_i = max(0, least-squares solution of (∇_{a_i}g_i)ᵀλ_i = −∇_{a_i}J_i)`.
pub fn initial_multipliers(game: &GameProblem, a0: &DVector<f64>) -> Result<DVector<f64>> {
    game.check_point(a0)?;
    let constraints = game.constraints()?;
    let kl = KktLayout::new(game);
    let mut lambda = DVector::zeros(kl.m);
    for (i, g) in constraints.iter().enumerate() {
        let (pr, dr) = (kl.primal(i), kl.dual(i));
        if dr.is_empty() {
            continue;
        }
        let jt = g.jacobian(a0).columns(pr.start, pr.len()).transpose();
        let rhs = -game.costs().gradient(i, a0);
        let li = least_squares(&jt, &rhs).map(|x| x.max(0.0));
        lambda.rows_mut(dr.start, dr.len()).copy_from(&li);
    }
    Ok(lambda)
}

pub fn primal_dual_start(game: &GameProblem, a0: &DVector<f64>) -> Result<PrimalDualPoint> {
    Ok(PrimalDualPoint::new(a0.clone(), initial_multipliers(game, a0)?))
}

/// One semismooth Newton step from the stacked point `z`.
pub fn ssn_step(
    game: &GameProblem,
    z: &DVector<f64>,
    cfg: &NewtonConfig,
    tie_rule: TieRule,
    iteration: usize,
) -> Result<DVector<f64>> {
    let zp = PrimalDualPoint::from_stacked(z, game.dim());
    let phi = assemble_phi(game, &zp)?;
    let el = limiting_jacobian(game, &zp, tie_rule)?;
    let sol = solve_regularized(&el.matrix, &-phi).ok_or(Error::SingularJacobian { iteration, agent: None })?;
    Ok(z + sol.x * cfg.damping)
}

/// One synchronous round of the distributed semismooth Newton method.
pub fn distributed_ssn_step(
    game: &GameProblem,
    z: &DVector<f64>,
    cfg: &NewtonConfig,
    tie_rule: TieRule,
    iteration: usize,
) -> Result<DVector<f64>> {
    let zp = PrimalDualPoint::from_stacked(z, game.dim());
    let phi = assemble_phi(game, &zp)?;
    let el = limiting_jacobian(game, &zp, tie_rule)?;
    distributed_update(game, z, &phi, &el.matrix, cfg, iteration).map(|(next, _)| next)
}

fn distributed_update(
    game: &GameProblem,
    z: &DVector<f64>,
    phi: &DVector<f64>,
    jac: &DMatrix<f64>,
    cfg: &NewtonConfig,
    iteration: usize,
) -> Result<(DVector<f64>, bool)> {
    let kl = KktLayout::new(game);
    let mut next = z.clone();
    let mut regularized = false;
    for i in 0..kl.n_agents() {
        let idx = kl.agent_indices(i);
        if idx.is_empty() {
            continue;
        }
        let jii = DMatrix::from_fn(idx.len(), idx.len(), |r, c| jac[(idx[r], idx[c])]);
        let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&r| -phi[r]));
        let sol = solve_regularized(&jii, &rhs).ok_or(Error::SingularJacobian {
            iteration,
            agent: Some(i),
        })?;
        regularized |= sol.regularized;
        for (p, &r) in idx.iter().enumerate() {
            next[r] += cfg.damping * sol.x[p];
        }
    }
    Ok((next, regularized))
}

/// Semismooth Newton on `Φ(z) = 0`: `z^{k+1} = z^k − JΦ(z^k)⁻¹Φ(z^k)` with the
/// limiting-Jacobian element chosen by `tie_rule`. Stops once `‖Φ‖ ≤ cfg.tol_outer`.
pub fn semismooth_newton(game: &GameProblem, z0: &PrimalDualPoint, cfg: &NewtonConfig, tie_rule: TieRule) -> Result<KktTrace> {
    run(game, z0, cfg, tie_rule, None, None)
}

/// Semismooth Newton with residual disturbances:
/// `JΦ(z^k)(z − z^k) = −Φ(z^k) + r^k`. Only `ResidualInjection` (or an
/// inactive spec) is meaningful here. With an active disturbance all
/// `cfg.max_outer` iterations are run.
pub fn perturbed_semismooth_newton(
    game: &GameProblem,
    z0: &PrimalDualPoint,
    cfg: &NewtonConfig,
    pert: &PerturbationSpec,
    reference: Option<&PrimalDualPoint>,
) -> Result<KktTrace> {
    if !matches!(pert.mode, PerturbationMode::None | PerturbationMode::ResidualInjection) {
        return Err(Error::Unsupported(format!(
            "perturbation mode {:?} for semismooth Newton; use ResidualInjection",
            pert.mode
        )));
    }
    let mut stream = PerturbationStream::new(pert)?;
    run(game, z0, cfg, TieRule::PreferG, Some(&mut stream), reference)
}

fn run(
    game: &GameProblem,
    z0: &PrimalDualPoint,
    cfg: &NewtonConfig,
    tie_rule: TieRule,
    mut stream: Option<&mut PerturbationStream>,
    reference: Option<&PrimalDualPoint>,
) -> Result<KktTrace> {
    cfg.validate()?;
    let n = game.dim();
    let reference = reference.map(|r| r.stacked());
    let clock = Instant::now();
    let mut z = z0.stacked();
    let mut phi = assemble_phi(game, z0)?;
    let r0 = phi.norm();
    let mut out = KktTrace {
        trace: IterateTrace::start(z.clone(), r0, reference.as_ref()),
        branches: Vec::new(),
        regularized_steps: Vec::new(),
        n,
    };
    // An active disturbance keeps the iteration going for the full budget.
    let disturbed = stream.as_ref().is_some_and(|s| !s.spec().is_inactive());
    let scale = r0.max(cfg.tol_outer).max(stream.as_ref().map_or(0.0, |s| s.spec().magnitude));
    if r0 <= cfg.tol_outer && !disturbed {
        out.trace.converged = true;
        return Ok(out);
    }
    for k in 0..cfg.max_outer {
        let zp = PrimalDualPoint::from_stacked(&z, n);
        let el = limiting_jacobian(game, &zp, tie_rule)?;
        let mut rhs = -&phi;
        if let Some(s) = stream.as_deref_mut() {
            let r = s.draw(z.len())?;
            if !s.spec().is_inactive() {
                rhs += &r;
            }
            out.trace.perturbations.push(r);
        }
        let sol = solve_regularized(&el.matrix, &rhs).ok_or(Error::SingularJacobian { iteration: k, agent: None })?;
        if sol.regularized {
            out.regularized_steps.push(k);
        }
        out.branches.push(el.branches);
        let next = &z + sol.x * cfg.damping;
        phi = assemble_phi(game, &PrimalDualPoint::from_stacked(&next, n))?;
        let r = phi.norm();
        out.trace.push(next.clone(), r, reference.as_ref(), clock.elapsed().as_secs_f64());
        if !r.is_finite() || r > DIVERGENCE_FACTOR * scale {
            return Err(Error::Diverged { iteration: k + 1, residual: r });
        }
        z = next;
        if r <= cfg.tol_outer && !disturbed {
            out.trace.converged = true;
            break;
        }
    }
    if disturbed {
        out.trace.converged = out.trace.final_residual() <= cfg.tol_outer;
    }
    Ok(out)
}

/// Synchronous distributed semismooth Newton: agent `i` solves
/// `Φ_i(z^k) + J_{z_i}Φ_i(z^k)(z_i − z_i^k) = 0` for its own `z_i = (a_i, λ_i)`,
/// with `Φ_i` evaluated at the full current `z^k`; the updates are concatenated.
pub fn distributed_semismooth_newton(
    game: &GameProblem,
    z0: &PrimalDualPoint,
    cfg: &NewtonConfig,
    tie_rule: TieRule,
) -> Result<KktTrace> {
    cfg.validate()?;
    let n = game.dim();
    let clock = Instant::now();
    let mut z = z0.stacked();
    let mut phi = assemble_phi(game, z0)?;
    let r0 = phi.norm();
    let mut out = KktTrace {
        trace: IterateTrace::start(z.clone(), r0, None),
        branches: Vec::new(),
        regularized_steps: Vec::new(),
        n,
    };
    if r0 <= cfg.tol_outer {
        out.trace.converged = true;
        return Ok(out);
    }
    for k in 0..cfg.max_outer {
        let el = limiting_jacobian(game, &PrimalDualPoint::from_stacked(&z, n), tie_rule)?;
        let (next, regularized) = distributed_update(game, &z, &phi, &el.matrix, cfg, k)?;
        if regularized {
            out.regularized_steps.push(k);
        }
        out.branches.push(el.branches);
        phi = assemble_phi(game, &PrimalDualPoint::from_stacked(&next, n))?;
        let r = phi.norm();
        out.trace.push(next.clone(), r, None, clock.elapsed().as_secs_f64());
        if !r.is_finite() || r > DIVERGENCE_FACTOR * r0.max(cfg.tol_outer) {
            return Err(Error::Diverged { iteration: k + 1, residual: r });
        }
        z = next;
        if r <= cfg.tol_outer {
            out.trace.converged = true;
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::game::{analytic_shared_gne, ConstraintFunction, QuadraticConstraints, QuadraticGame};
    use crate::kkt::{kkt_violation, phi_norm};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn tight() -> NewtonConfig {
        NewtonConfig {
            tol_outer: 1e-12,
            ..NewtonConfig::default()
        }
    }

    #[test]
    fn analytic_example_converges_fast() {
        let g = analytic_shared_gne(0.5);
        let z0 = PrimalDualPoint::new(v(&[0.4, 0.4]), v(&[0.4, 0.4]));
        let t = semismooth_newton(&g, &z0, &NewtonConfig::default(), TieRule::PreferG).unwrap();
        assert!(t.converged());
        assert!(t.iterations() <= 6);
        let z = t.last_point();
        assert!((z.stacked() - v(&[0.5, 0.5, 0.5, 0.5])).amax() < 1e-9);
        assert!(kkt_violation(&g, &z).unwrap().max() < 1e-9);
    }

    #[test]
    fn solved_start_takes_no_steps() {
        let g = analytic_shared_gne(0.5);
        let z0 = PrimalDualPoint::new(v(&[0.5, 0.5]), v(&[0.5, 0.5]));
        assert_eq!(semismooth_newton(&g, &z0, &tight(), TieRule::PreferG).unwrap().iterations(), 0);
    }

    #[test]
    fn fixed_active_set_is_solved_in_one_step() {
        let g = analytic_shared_gne(0.5);
        let z0 = PrimalDualPoint::new(v(&[0.45, 0.52]), v(&[0.6, 0.55]));
        let t = semismooth_newton(&g, &z0, &tight(), TieRule::PreferG).unwrap();
        assert_eq!(t.iterations(), 1);
    }

    #[test]
    fn zero_residual_disturbance_is_plain_newton() {
        let g = analytic_shared_gne(0.5);
        let z0 = PrimalDualPoint::new(v(&[0.3, 0.6]), v(&[0.0, 0.9]));
        let plain = semismooth_newton(&g, &z0, &tight(), TieRule::PreferG).unwrap();
        let spec = PerturbationSpec::uniform(PerturbationMode::ResidualInjection, 0.0, 1);
        let p = perturbed_semismooth_newton(&g, &z0, &tight(), &spec, None).unwrap();
        assert_eq!(plain.trace.iterates, p.trace.iterates);
    }

    #[test]
    fn fixed_residual_offset_matches_inverse_jacobian() {
        let g = analytic_shared_gne(0.5);
        let z_star = PrimalDualPoint::new(v(&[0.5, 0.5]), v(&[0.5, 0.5]));
        let r = v(&[1.0, -2.0, 0.5, 0.3]);
        let spec = PerturbationSpec::fixed(PerturbationMode::ResidualInjection, 1e-4, r.clone());
        let cfg = NewtonConfig {
            max_outer: 10,
            ..tight()
        };
        let t = perturbed_semismooth_newton(&g, &z_star, &cfg, &spec, Some(&z_star)).unwrap();
        let j = limiting_jacobian(&g, &z_star, TieRule::PreferG).unwrap().matrix;
        let offset = j.lu().solve(&(r.normalize() * 1e-4)).unwrap();
        let e_inf = t.trace.error_to_ref.as_ref().unwrap().last().copied().unwrap();
        assert!((e_inf - offset.norm()).abs() < 1e-8);
    }

    #[test]
    fn distributed_reaches_centralized_solution() {
        let g = analytic_shared_gne(0.5);
        let z0 = PrimalDualPoint::new(v(&[0.45, 0.55]), v(&[0.45, 0.55]));
        let cfg = NewtonConfig {
            max_outer: 200,
            ..tight()
        };
        let c = semismooth_newton(&g, &z0, &cfg, TieRule::PreferG).unwrap();
        let d = distributed_semismooth_newton(&g, &z0, &cfg, TieRule::PreferG).unwrap();
        assert!(d.converged());
        assert!((c.trace.last() - d.trace.last()).amax() < 1e-8);
    }

    #[test]
    fn single_agent_distributed_equals_centralized() {
        let costs = QuadraticGame::from_assembled(
            vec![2],
            &DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            &v(&[-2.0, -1.0]),
        )
        .unwrap();
        let cons: Vec<Arc<dyn ConstraintFunction>> = vec![Arc::new(
            QuadraticConstraints::linear(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[0.5])).unwrap(),
        )];
        let g = GameProblem::with_constraints(Arc::new(costs), cons).unwrap();
        let z0 = primal_dual_start(&g, &v(&[0.0, 0.0])).unwrap();
        let c = semismooth_newton(&g, &z0, &tight(), TieRule::PreferG).unwrap();
        let d = distributed_semismooth_newton(&g, &z0, &tight(), TieRule::PreferG).unwrap();
        assert_eq!(c.trace.iterates, d.trace.iterates);
        assert!(phi_norm(&g, &c.last_point()).unwrap() <= 1e-12);
    }

    #[test]
    fn initial_multipliers_are_nonnegative_least_squares() {
        let g = analytic_shared_gne(0.5);
        // ∇J = a − 1 = (−0.5, 1.5): λ_1 = 0.5, λ_2 = max(0, −1.5) = 0.
        let l = initial_multipliers(&g, &v(&[0.5, 2.5])).unwrap();
        assert!((l - v(&[0.5, 0.0])).amax() < 1e-14);
    }
}
