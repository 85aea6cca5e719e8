//! Acceptance criteria 1–9. Prints one PASS/FAIL line per criterion, then
//! fails unless every criterion passes or is listed in `KNOWN_UNATTAINABLE`.

use std::path::Path;
use std::time::Instant;

use nash_newton::game::fd::{check_game_hessian, check_pseudogradient};
use nash_newton::game::{
    analytic_shared_gne, check_monotonicity, check_strict_semicopositivity, game_hessian, quartic_test_game,
    random_monotone_quadratic_game, indefinite_orthant_game, CoordCone, CriticalCone, Feasibility, GameProblem, MonotonicityClass,
    RandomGameSpec, SemicopositivityVerdict, QUARTIC_TEST_EQUILIBRIUM,
};
use nash_newton::kkt::{
    check_phi_jacobian, check_quasi_regularity, distributed_semismooth_newton, phi_norm, semismooth_newton, vgne_reduce,
    PrimalDualPoint, TieRule,
};
use nash_newton::mpc::{
    build_parameterized_game, estimate_contraction, pursuit_scenario, run_closed_loop, BudgetLogs, ContractionFit,
    MpcSolverConfig, PursuitSpec,
};
use nash_newton::newton::{
    distributed_jn_mechanism1, estimate_q_rate, josephy_newton, NewtonConfig, QRateClass,
};
use nash_newton::vi::{enumerate_active_set_solution, AffineViProblem};
use nash_newton::DVector;
use nash_newton_harness::{builtin, parse_config_str, run_experiment, unit_direction, Problem, Report, BUILTIN_GAMES, BUILTIN_SCENARIOS};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot hold on their literal instance, with the reason.
const KNOWN_UNATTAINABLE: &[(u32, &str)] = &[(
    5,
    "with the constraint a1 + a2 <= 1 registered by both agents the KKT Jacobian at z* has two equal \
     constraint rows, so it is singular and the solution set is a segment; quasi-regularity cannot hold",
)];

struct Outcome {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

fn criterion_1() -> Outcome {
    let clock = Instant::now();
    let h = game_hessian(&indefinite_orthant_game(), &DVector::zeros(2)).unwrap().assembled;
    let mono = check_monotonicity(&h).unwrap();
    let open = CriticalCone::orthant(2, CoordCone::Positive);
    let verdict = check_strict_semicopositivity(&h, &open, 100_000, 0).unwrap();
    let closed = check_strict_semicopositivity(&h, &CriticalCone::orthant(2, CoordCone::Nonnegative), 0, 0).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    let (no_violation, detail) = match &verdict {
        SemicopositivityVerdict::NoViolationFound {
            sampled,
            enumerated,
            min_value,
        } => (
            *sampled == 100_000 && *enumerated > 0,
            format!("sampled {sampled}, enumerated {enumerated}, min block value {min_value:.3e}"),
        ),
        v => (false, format!("{v:?}")),
    };
    Outcome {
        id: 1,
        name: "non-monotone yet strictly semicopositive Hessian",
        passed: mono.class == MonotonicityClass::Indefinite && no_violation && secs < 1.0,
        detail: format!(
            "{:?} (min eig {:.4}); open orthant: {detail}; closed orthant boundary violated: {}; {secs:.3}s",
            mono.class,
            mono.min_eigenvalue,
            closed.is_violated()
        ),
    }
}

fn criterion_2() -> Outcome {
    let clock = Instant::now();
    let spec = RandomGameSpec::default();
    let mut worst: f64 = 0.0;
    let mut bad = vec![];
    for seed in 0..50u64 {
        let (g, q) = random_monotone_quadratic_game(&spec, seed);
        let set = g.sets().unwrap().clone();
        let (lo, hi) = set.bounds();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let a0 = DVector::from_fn(g.dim(), |i, _| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>());
        let n_agents = g.n_agents();
        let t = josephy_newton(&g, &a0, &NewtonConfig::default()).unwrap();
        let p = AffineViProblem::new(q.hessian(), q.offset(), set).unwrap();
        let e = enumerate_active_set_solution(&p).unwrap();
        let diff = (t.last() - &e.a).amax();
        worst = worst.max(diff);
        if !(t.converged && t.iterations() == 1 && diff <= 1e-8 && (2..=3).contains(&n_agents) && g.dim() <= 8) {
            bad.push(seed);
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    Outcome {
        id: 2,
        name: "one-step exactness on random affine games",
        passed: bad.is_empty() && secs < 10.0,
        detail: format!("50 games, failing seeds {bad:?}, max |a - a_enum| {worst:.2e}; {secs:.3}s"),
    }
}

fn criterion_3() -> Outcome {
    let g = quartic_test_game();
    let a_star = DVector::from_row_slice(&QUARTIC_TEST_EQUILIBRIUM);
    let cfg = NewtonConfig {
        tol_outer: 1e-13,
        ..NewtonConfig::default()
    };
    let mut ok = true;
    let mut tails = vec![];
    for seed in 0..5 {
        let a0 = &a_star + unit_direction(4, seed) * 0.1;
        for (name, run) in [
            ("JN", josephy_newton(&g, &a0, &cfg)),
            ("M1", distributed_jn_mechanism1(&g, &a0, &cfg)),
        ] {
            let mut t = run.unwrap();
            t.set_reference(&a_star);
            let q = estimate_q_rate(&t).unwrap();
            ok &= q.classification == QRateClass::Quadratic && q.tail_max <= 1e3;
            tails.push(format!("{name}/{seed}: {:?} {:.2}", q.classification, q.tail_max));
        }
    }
    Outcome {
        id: 3,
        name: "Q-quadratic tails of JN and mechanism 1",
        passed: ok,
        detail: tails.join(", "),
    }
}

fn run_config(text: &str) -> Report {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse_config_str(text, dir.path()).unwrap();
    cfg.output = dir.path().join("out");
    run_experiment(&cfg).unwrap()
}

fn verdict(report: &Report, name: &str) -> (bool, f64) {
    let v = report.verdicts.iter().find(|v| v.name.contains(name)).unwrap_or_else(|| {
        panic!("no verdict {name:?} in {}", report.summary());
    });
    (v.passed, v.value)
}

fn iss_config(problem: &str, solver: &str, mode: &str) -> String {
    format!(
        "kind = \"iss\"\nproblem = \"{problem}\"\nsolver = \"{solver}\"\nseeds = {:?}\n\
         [newton]\nmax_outer = 30\n\
         [perturbation]\nmode = \"{mode}\"\nmagnitudes = [1e-4, 1e-3, 1e-2]\n\
         [thresholds]\nslack = 1.1\nlinearity_factor = 3.0\n",
        seeds(20)
    )
}

fn criterion_4() -> Outcome {
    let r = run_config(&iss_config("builtin:quartic", "josephy-newton", "additive-gradient"));
    let (env_ok, viol) = verdict(&r, "linear ISS envelope violations");
    let (lin_ok, spread) = verdict(&r, "ultimate error linear");
    Outcome {
        id: 4,
        name: "NE input-to-state stability",
        passed: env_ok && lin_ok && r.failures.is_empty(),
        detail: format!(
            "{}; validation violations {viol}, ultimate-error/delta spread {spread:.3}",
            r.notes.join("; ")
        ),
    }
}

fn gne_checks(c: f64) -> (bool, String) {
    let g = analytic_shared_gne(c);
    let z_star = PrimalDualPoint::new(DVector::from_element(2, 0.5), DVector::from_element(2, 0.5));
    let cfg = NewtonConfig {
        tol_outer: 1e-10,
        ..NewtonConfig::default()
    };
    let mut starts = vec![DVector::from_element(4, 0.4)];
    starts.extend((0..4).map(|s| z_star.stacked() + unit_direction(4, s) * 0.1));
    let mut ok = true;
    let mut worst_iter = 0;
    let mut worst_phi: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for z0 in &starts {
        let z0 = PrimalDualPoint::from_stacked(z0, 2);
        let c_run = semismooth_newton(&g, &z0, &cfg, TieRule::PreferG).unwrap();
        let d_run = distributed_semismooth_newton(&g, &z0, &cfg, TieRule::PreferG).unwrap();
        let phi = phi_norm(&g, &c_run.last_point()).unwrap();
        let gap = (c_run.trace.last() - d_run.trace.last()).amax();
        worst_iter = worst_iter.max(c_run.iterations());
        worst_phi = worst_phi.max(phi);
        worst_gap = worst_gap.max(gap);
        ok &= c_run.converged() && phi <= 1e-10 && c_run.iterations() <= 6 && d_run.converged() && gap <= 1e-8;
    }
    let q = check_quasi_regularity(&g, &z_star).unwrap();
    ok &= q.all_nonsingular();
    (
        ok,
        format!(
            "c = {c}: max iterations {worst_iter}, max |Phi| {worst_phi:.1e}, distributed gap {worst_gap:.1e}, quasi-regularity {:?}",
            q.verdict
        ),
    )
}

fn criterion_5() -> Outcome {
    let (ok, detail) = gne_checks(1.0);
    let (_, regular) = gne_checks(0.5);
    Outcome {
        id: 5,
        name: "semismooth Newton on the shared-constraint GNE",
        passed: ok,
        detail: format!("{detail}; for comparison {regular}"),
    }
}

fn criterion_6() -> Outcome {
    let r = run_config(&iss_config("builtin:shared-gne", "semismooth-newton", "residual-injection"));
    let (ok, viol) = verdict(&r, "quadratic ISS envelope violations");
    Outcome {
        id: 6,
        name: "GNE input-to-state stability",
        passed: ok && r.failures.is_empty(),
        detail: format!("{}; validation violations {viol}", r.notes.join("; ")),
    }
}

fn criterion_7() -> Outcome {
    let g = analytic_shared_gne(1.0);
    let red = vgne_reduce(&g).unwrap();
    let t = josephy_newton(&red.problem, &DVector::zeros(2), &NewtonConfig::default()).unwrap();
    let z = red.lift_solution(t.last()).unwrap();
    let phi = phi_norm(&g, &z).unwrap();
    Outcome {
        id: 7,
        name: "lifted variational GNE solves the KKT system",
        passed: t.converged && phi <= 1e-8,
        detail: format!(
            "a = {:?}, lambda = {:?}, |Phi| = {phi:.1e}",
            z.a.as_slice(),
            z.lambda.as_slice()
        ),
    }
}

fn criterion_8() -> Outcome {
    let clock = Instant::now();
    let cfg = MpcSolverConfig::default();
    let base = PursuitSpec::default();
    assert_eq!((base.n_agents, base.horizon, base.t_end), (2, 5, 40));
    let logs = |k: usize| -> Vec<_> {
        let s = pursuit_scenario(&PursuitSpec { k_budget: k, ..base }).unwrap();
        (0..20).map(|seed| run_closed_loop(&s, &cfg, seed).unwrap()).collect()
    };
    let campaign: Vec<BudgetLogs> = [1, 2, 3, 5, 8]
        .into_iter()
        .map(|k| {
            let l = logs(k);
            BudgetLogs {
                k,
                fit: l[..10].to_vec(),
                validation: l[10..].to_vec(),
            }
        })
        .collect();
    let table = estimate_contraction(&campaign, 1.1, ContractionFit::Lipschitz).unwrap();
    let tracking = logs(50).iter().map(|l| l.sup_e()).fold(0.0, f64::max);
    let secs = clock.elapsed().as_secs_f64();
    let rows: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("K={} sup_e={:.3e} alpha={:.3e}", r.k, r.sup_e, r.alpha))
        .collect();
    Outcome {
        id: 8,
        name: "time-distributed MPC budget sweep",
        passed: table.sup_e_nonincreasing
            && table.alpha_nonincreasing
            && table.total_violations() == 0
            && tracking <= 1e-8
            && secs < 60.0,
        detail: format!(
            "{}; violations {}; K=50 sup e {tracking:.1e}; {secs:.2}s",
            rows.join(", "),
            table.total_violations()
        ),
    }
}

/// Random point with every complementarity row at least `margin` from its kink.
fn point_off_kinks(g: &GameProblem, rng: &mut ChaCha8Rng, margin: f64) -> Option<PrimalDualPoint> {
    let Feasibility::Constraints(cons) = g.feasibility() else { return None };
    let m: usize = cons.iter().map(|c| c.len()).sum();
    for _ in 0..1000 {
        let a = DVector::from_fn(g.dim(), |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let lambda = DVector::from_fn(m, |_, _| rng.random::<f64>() * 2.0);
        let gv: Vec<f64> = cons.iter().flat_map(|c| c.value(&a).iter().copied().collect::<Vec<_>>()).collect();
        if gv.iter().zip(lambda.iter()).all(|(g, l)| (-g - l).abs() > margin) {
            return Some(PrimalDualPoint::new(a, lambda));
        }
    }
    None
}

fn criterion_9() -> Outcome {
    let mut problems: Vec<(String, GameProblem)> = vec![];
    for name in BUILTIN_GAMES {
        if let Some(Problem::Game(g)) = builtin(name) {
            problems.push((name.to_string(), g.game));
        }
    }
    for name in BUILTIN_SCENARIOS {
        if let Some(Problem::Scenario(s)) = builtin(name) {
            problems.push((name.to_string(), build_parameterized_game(&s, &s.x0).unwrap().game));
        }
    }
    let mut checks = 0;
    let mut failed = vec![];
    for (i, (name, g)) in problems.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        for _ in 0..20 {
            let a = DVector::from_fn(g.dim(), |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let mut results = vec![
                ("pseudogradient", check_pseudogradient(g, &a).unwrap()),
                ("hessian", check_game_hessian(g, &a).unwrap()),
            ];
            if let Some(z) = point_off_kinks(g, &mut rng, 1e-3) {
                results.push(("phi-jacobian", check_phi_jacobian(g, &z).unwrap()));
            }
            for (what, r) in results {
                checks += 1;
                if !r.passed() {
                    failed.push(format!("{name}/{what}: {:.1e} > {:.0e}", r.rel_error, r.tol));
                }
            }
        }
    }
    Outcome {
        id: 9,
        name: "finite-difference derivative checks",
        passed: failed.is_empty(),
        detail: format!(
            "{} problems, {checks} checks, {} failed {:?}",
            problems.len(),
            failed.len(),
            failed.iter().take(5).collect::<Vec<_>>()
        ),
    }
}

#[test]
fn acceptance() {
    assert!(Path::new(env!("CARGO_MANIFEST_DIR")).exists());
    let outcomes = [
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
    ];
    let mut unexpected = vec![];
    for o in &outcomes {
        let known = KNOWN_UNATTAINABLE.iter().find(|(id, _)| *id == o.id);
        println!(
            "criterion {} {}: {} -- {}",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        match (o.passed, known) {
            (false, Some((_, why))) => println!("    known unattainable: {why}"),
            (false, None) => unexpected.push(o.id),
            (true, Some(_)) => println!("    listed as unattainable but passed; update KNOWN_UNATTAINABLE"),
            (true, None) => {}
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("acceptance: {passed}/{} criteria pass", outcomes.len());
    assert!(unexpected.is_empty(), "criteria failed: {unexpected:?}");
}
