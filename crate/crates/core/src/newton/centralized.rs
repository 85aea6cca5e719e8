use std::time::Instant;

use nalgebra::DVector;

use super::{diverged, inner_config, ne_residual, IterateTrace, NewtonConfig, PerturbationMode, PerturbationSpec, PerturbationStream};
use crate::error::{Error, Result};
use crate::game::{game_hessian, pseudogradient, GameProblem, ProductSet};
use crate::vi::{solve_affine_vi, AffineViProblem};

/// One Josephy-Newton step: solves `VI(A, F(a) + H(a)(· − a))` warm-started at
/// `a` and applies the damping. `iteration` is only used for error reports.
pub fn jn_step(game: &GameProblem, a: &DVector<f64>, cfg: &NewtonConfig, iteration: usize) -> Result<DVector<f64>> {
    let sets = game.sets()?;
    step(game, sets, a, cfg, iteration, None).map(|(a, _)| a)
}

fn step(
    game: &GameProblem,
    sets: &ProductSet,
    a: &DVector<f64>,
    cfg: &NewtonConfig,
    iteration: usize,
    stream: Option<&mut PerturbationStream>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut f = pseudogradient(game, a)?;
    let mut h = game_hessian(game, a)?.assembled;
    let mut v = DVector::zeros(0);
    let mut injected = None;
    if let Some(s) = stream {
        v = s.draw(s.draw_len(a.len()))?;
        s.apply(&v, &mut f, &mut h);
        if s.spec().mode == PerturbationMode::ResidualInjection && !s.spec().is_inactive() {
            injected = Some(v.clone());
        }
    }
    let mut q = &f - &h * a;
    if let Some(r) = injected {
        q -= r;
    }
    let sub = AffineViProblem::new(h, q, sets.clone())?;
    let inner = inner_config(cfg, ne_residual(game, a)?);
    let sol = solve_affine_vi(&sub, a, &inner)?;
    if !sol.converged() {
        return Err(Error::InnerSolveFailed { iteration, agent: None });
    }
    let next = if cfg.damping == 1.0 {
        sol.a
    } else {
        a + (sol.a - a) * cfg.damping
    };
    Ok((next, v))
}

/// Centralized Josephy-Newton iteration; stops once the natural-map residual
/// of `VI(A, F)` is at most `cfg.tol_outer`.
///
/// An infeasible start point is projected onto `A` and a warning is recorded.
pub fn josephy_newton(game: &GameProblem, a0: &DVector<f64>, cfg: &NewtonConfig) -> Result<IterateTrace> {
    run(game, a0, cfg, None, None)
}

/// Josephy-Newton with the disturbances of `pert` injected at every step.
/// With an active disturbance all `cfg.max_outer` iterations are run; an
/// inactive one behaves exactly like [`josephy_newton`].
pub fn perturbed_josephy_newton(
    game: &GameProblem,
    a0: &DVector<f64>,
    cfg: &NewtonConfig,
    pert: &PerturbationSpec,
    reference: Option<&DVector<f64>>,
) -> Result<IterateTrace> {
    let mut stream = PerturbationStream::new(pert)?;
    run(game, a0, cfg, Some(&mut stream), reference)
}

fn run(
    game: &GameProblem,
    a0: &DVector<f64>,
    cfg: &NewtonConfig,
    mut stream: Option<&mut PerturbationStream>,
    reference: Option<&DVector<f64>>,
) -> Result<IterateTrace> {
    cfg.validate()?;
    game.check_point(a0)?;
    let sets = game.sets()?;
    let clock = Instant::now();
    let mut warnings = Vec::new();
    let mut a = a0.clone();
    if sets.max_violation(&a) > 0.0 {
        a = sets.project(&a);
        warnings.push("start point was infeasible and has been projected".to_string());
    }
    let r0 = ne_residual(game, &a)?;
    let mut trace = IterateTrace::start(a.clone(), r0, reference);
    trace.warnings = warnings;
    let disturbed = stream.as_ref().is_some_and(|s| !s.spec().is_inactive());
    let floor = cfg.tol_outer.max(stream.as_ref().map_or(0.0, |s| s.spec().magnitude));
    if r0 <= cfg.tol_outer && !disturbed {
        trace.converged = true;
        return Ok(trace);
    }
    for k in 0..cfg.max_outer {
        let (next, v) = step(game, sets, &a, cfg, k, stream.as_deref_mut())?;
        if stream.is_some() {
            trace.perturbations.push(v);
        }
        let r = ne_residual(game, &next)?;
        trace.push(next.clone(), r, reference, clock.elapsed().as_secs_f64());
        if diverged(r, r0, floor) {
            return Err(Error::Diverged { iteration: k + 1, residual: r });
        }
        a = next;
        if r <= cfg.tol_outer && !disturbed {
            trace.converged = true;
            break;
        }
    }
    if disturbed {
        trace.converged = trace.final_residual() <= cfg.tol_outer;
    }
    Ok(trace)
}

/// High-accuracy solution used as the reference `a*`: Josephy-Newton to
/// residual `1e-13` with at most 200 outer iterations.
pub fn reference_solution(game: &GameProblem, a0: &DVector<f64>) -> Result<DVector<f64>> {
    let mut cfg = NewtonConfig {
        tol_outer: 1e-13,
        max_outer: 200,
        ..NewtonConfig::default()
    };
    cfg.inner.tol = 1e-14;
    let trace = josephy_newton(game, a0, &cfg)?;
    if !trace.converged {
        return Err(Error::NotConverged {
            residual: trace.final_residual(),
            iterations: trace.iterations(),
        });
    }
    Ok(trace.last().clone())
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;
    use crate::game::{quartic_test_game, random_monotone_quadratic_game, indefinite_orthant_game, RandomGameSpec};
    use crate::vi::enumerate_active_set_solution;

    #[test]
    fn affine_game_converges_in_one_step() {
        for seed in 0..10 {
            let (g, q) = random_monotone_quadratic_game(&RandomGameSpec::default(), seed);
            let t = josephy_newton(&g, &DVector::zeros(g.dim()), &NewtonConfig::default()).unwrap();
            assert!(t.converged);
            assert_eq!(t.iterations(), 1);
            let p = AffineViProblem::new(q.hessian(), q.offset(), g.sets().unwrap().clone()).unwrap();
            let e = enumerate_active_set_solution(&p).unwrap();
            assert!((t.last() - e.a).amax() < 1e-9);
        }
    }

    #[test]
    fn infeasible_start_is_projected_with_warning() {
        let (g, _) = random_monotone_quadratic_game(&RandomGameSpec::default(), 3);
        let t = josephy_newton(&g, &DVector::from_element(g.dim(), 5.0), &NewtonConfig::default()).unwrap();
        assert_eq!(t.warnings.len(), 1);
        assert!(g.sets().unwrap().max_violation(&t.iterates[0]) == 0.0);
    }

    #[test]
    fn zero_perturbation_reproduces_plain_iterates() {
        let g = quartic_test_game();
        let a0 = DVector::from_row_slice(&[0.6, -0.2, -0.3, 0.5]);
        let cfg = NewtonConfig {
            tol_outer: 1e-13,
            ..NewtonConfig::default()
        };
        let plain = josephy_newton(&g, &a0, &cfg).unwrap();
        for mode in [
            PerturbationMode::AdditiveGradient,
            PerturbationMode::AdditiveHessian,
            PerturbationMode::ResidualInjection,
        ] {
            let spec = PerturbationSpec::uniform(mode, 0.0, 4);
            let p = perturbed_josephy_newton(&g, &a0, &cfg, &spec, None).unwrap();
            assert_eq!(p.iterates, plain.iterates);
        }
    }

    #[test]
    fn fixed_gradient_disturbance_offsets_affine_solution() {
        // Unconstrained affine game: a∞ − a* = −H⁻¹v.
        let g = indefinite_orthant_game();
        let h = DMatrix::from_row_slice(2, 2, &[1.0, -3.0, 1.0, 0.0]);
        let v = DVector::from_vec(vec![0.6, 0.8]);
        let spec = PerturbationSpec::fixed(PerturbationMode::AdditiveGradient, 1e-3, v.clone());
        let cfg = NewtonConfig {
            max_outer: 5,
            ..NewtonConfig::default()
        };
        let t = perturbed_josephy_newton(&g, &DVector::from_vec(vec![1.0, 1.0]), &cfg, &spec, None).unwrap();
        let expected = -h.lu().solve(&(v * 1e-3)).unwrap();
        assert!((t.last() - expected).norm() < 1e-14);
        assert_eq!(t.perturbations.len(), t.iterations());
    }

    #[test]
    fn gne_form_game_is_rejected() {
        let g = crate::game::analytic_shared_gne(0.5);
        assert!(josephy_newton(&g, &DVector::zeros(2), &NewtonConfig::default()).is_err());
    }
}
