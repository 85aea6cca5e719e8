use nash_newton::game::{analytic_shared_gne, bilinear_pennies_game, quartic_game, QUARTIC_TEST_EQUILIBRIUM};
use nash_newton::kkt::{
    distributed_semismooth_newton, perturbed_semismooth_newton, phi_norm, primal_dual_start, semismooth_newton,
    solution_csv, TieRule, SOLUTION_CSV_HEADER,
};
use nash_newton::mpc::{
    pursuit_scenario, reference_closed_loop, run_closed_loop, MpcMode, MpcSolverConfig, PursuitSpec, TdoSolver,
    CLOSED_LOOP_CSV_HEADER,
};
use nash_newton::newton::{
    distributed_jn_mechanism1, distributed_jn_mechanism2, josephy_newton, perturbed_josephy_newton, BestResponseOrder,
    NewtonConfig, PerturbationMode, PerturbationSpec,
};
use nash_newton::{DVector, Error};

fn tight() -> NewtonConfig {
    NewtonConfig {
        tol_outer: 1e-12,
        ..NewtonConfig::default()
    }
}

#[test]
fn centralized_and_distributed_jn_agree_on_coupled_quartic() {
    let g = quartic_game(0.3);
    let a0 = DVector::from_row_slice(&QUARTIC_TEST_EQUILIBRIUM).add_scalar(0.05);
    let c = josephy_newton(&g, &a0, &tight()).unwrap();
    let m1 = distributed_jn_mechanism1(&g, &a0, &tight()).unwrap();
    let cfg = NewtonConfig {
        max_outer: 500,
        ..tight()
    };
    let gs = distributed_jn_mechanism2(&g, &a0, &cfg, BestResponseOrder::GaussSeidel, 1e-13).unwrap();
    assert!(c.converged && m1.converged && gs.converged);
    assert!((c.last() - m1.last()).amax() < 1e-9);
    assert!((c.last() - gs.last()).amax() < 1e-9);
}

#[test]
fn perturbation_guard_rejects_large_disturbances() {
    let g = quartic_game(0.0);
    let a0 = DVector::zeros(4);
    let spec = PerturbationSpec::uniform(PerturbationMode::AdditiveGradient, 2.0, 0);
    assert!(matches!(
        perturbed_josephy_newton(&g, &a0, &NewtonConfig::default(), &spec, None),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn semismooth_newton_rejects_gradient_disturbances() {
    let g = analytic_shared_gne(0.5);
    let z0 = primal_dual_start(&g, &DVector::from_element(2, 0.4)).unwrap();
    let spec = PerturbationSpec::uniform(PerturbationMode::AdditiveGradient, 1e-3, 0);
    assert!(matches!(
        perturbed_semismooth_newton(&g, &z0, &NewtonConfig::default(), &spec, None),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn gne_solvers_agree_and_export_solution() {
    let g = analytic_shared_gne(0.5);
    let z0 = primal_dual_start(&g, &DVector::from_element(2, 0.3)).unwrap();
    let c = semismooth_newton(&g, &z0, &tight(), TieRule::PreferG).unwrap();
    let d = distributed_semismooth_newton(&g, &z0, &tight(), TieRule::PreferG).unwrap();
    assert!(c.converged() && d.converged());
    assert!(phi_norm(&g, &c.last_point()).unwrap() <= 1e-12);
    assert!((c.trace.last() - d.trace.last()).amax() < 1e-8);
    let csv = solution_csv(&c);
    assert!(csv.starts_with(SOLUTION_CSV_HEADER));
}

#[test]
fn bilinear_pennies_game_is_solved_in_one_step() {
    // Monotone but not strictly: the symmetric part of the Hessian vanishes.
    let g = bilinear_pennies_game();
    let t = josephy_newton(&g, &DVector::from_element(g.dim(), 0.3), &NewtonConfig::default()).unwrap();
    assert!(t.converged);
    assert_eq!(t.iterations(), 1);
    assert!(t.last().amax() < 1e-10);
}

#[test]
fn closed_loop_is_deterministic_and_exports_csv() {
    let s = pursuit_scenario(&PursuitSpec {
        k_budget: 2,
        t_end: 10,
        ..PursuitSpec::default()
    })
    .unwrap();
    let cfg = MpcSolverConfig::default();
    let a = run_closed_loop(&s, &cfg, 7).unwrap();
    let b = run_closed_loop(&s, &cfg, 7).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.to_csv().starts_with(CLOSED_LOOP_CSV_HEADER));
    assert_eq!(a.len(), 10);
}

#[test]
fn gne_mode_closed_loop_tracks_reference_with_large_budget() {
    let mut s = pursuit_scenario(&PursuitSpec {
        k_budget: 30,
        t_end: 6,
        ..PursuitSpec::default()
    })
    .unwrap();
    s.mode = MpcMode::Gne;
    let cfg = MpcSolverConfig {
        solver: TdoSolver::SemismoothNewton,
        ..MpcSolverConfig::default()
    };
    let log = run_closed_loop(&s, &cfg, 0).unwrap();
    let reference = reference_closed_loop(&s, &cfg).unwrap();
    assert!(log.sup_e() <= 1e-8, "{}", log.sup_e());
    assert!((&log.x_final - reference.last().unwrap()).amax() <= 1e-8);
}
