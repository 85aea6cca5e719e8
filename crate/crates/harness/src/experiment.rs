//! Experiment runners: one per [`ExperimentKind`].

use nash_newton::game::{
    check_monotonicity, check_strict_semicopositivity, critical_cone, AgentCone, CoordCone, CriticalCone, game_hessian, Feasibility, GameProblem,
    MonotonicityClass, SemicopositivityVerdict,
};
use nash_newton::kkt::{
    check_quasi_regularity, distributed_semismooth_newton, initial_multipliers, perturbed_semismooth_newton, phi_norm,
    semismooth_newton, PrimalDualPoint, QuasiRegularityVerdict, TieRule,
};
use nash_newton::mpc::{
    estimate_contraction, run_closed_loop, BudgetLogs, ClosedLoopLog, ContractionFit, MpcScenario, MpcSolverConfig,
    TdoSolver,
};
use nash_newton::newton::{
    distributed_jn_mechanism1, distributed_jn_mechanism2, estimate_iss_from_triples, estimate_q_rate, iss_triples,
    josephy_newton, perturbed_josephy_newton, reference_solution, ultimate_error, BestResponseOrder, IterateTrace,
    NewtonConfig, PerturbationMode, PerturbationSpec, QRateClass,
};
use nash_newton::{DVector, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind, ScanCone, SolverKind, StartSpec};
use crate::error::{HarnessError, HarnessResult, RunContext};
use crate::problem::{load_problem, GameInstance, Problem};
use crate::report::{write_file, Report, Table, Verdict};

/// Runs `cfg`, writing traces and `report.json` into `cfg.output`.
///
/// Solver failures inside individual runs are recorded in the report rather
/// than aborting the experiment; configuration, problem and I/O errors are
/// returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> HarnessResult<Report> {
    let problem = load_problem(&cfg.problem)?;
    std::fs::create_dir_all(&cfg.output).map_err(|source| HarnessError::Io {
        path: cfg.output.clone(),
        source,
    })?;
    let mut report = Report::new(cfg.kind.name(), &cfg.problem.to_string(), cfg.solver.name(), &cfg.seeds);
    match (cfg.kind, &problem) {
        (ExperimentKind::MpcSweep, Problem::Scenario(s)) => mpc_sweep(cfg, s, &mut report)?,
        (ExperimentKind::MpcSweep, Problem::Game(_)) => return Err(wrong_problem(cfg, "an MPC scenario")),
        (_, Problem::Scenario(_)) => return Err(wrong_problem(cfg, "a game")),
        (ExperimentKind::Convergence, Problem::Game(g)) => convergence(cfg, g, &mut report)?,
        (ExperimentKind::IssCampaign, Problem::Game(g)) => iss_campaign(cfg, g, &mut report)?,
        (ExperimentKind::DistributedCompare, Problem::Game(g)) => distributed_compare(cfg, g, &mut report)?,
        (ExperimentKind::QuasiRegularityScan, Problem::Game(g)) => quasireg_scan(cfg, g, &mut report)?,
    }
    report.write(&cfg.output)?;
    Ok(report)
}

fn wrong_problem(cfg: &ExperimentConfig, expected: &str) -> HarnessError {
    HarnessError::Problem {
        problem: cfg.problem.to_string(),
        message: format!("{} experiments need {expected}", cfg.kind),
    }
}

fn is_gne(game: &GameProblem) -> bool {
    matches!(game.feasibility(), Feasibility::Constraints(_))
}

fn check_solver(cfg: &ExperimentConfig, game: &GameProblem) -> HarnessResult<()> {
    if cfg.solver.is_kkt() != is_gne(game) {
        return Err(HarnessError::Problem {
            problem: cfg.problem.to_string(),
            message: format!(
                "solver {} needs a {} game",
                cfg.solver,
                if cfg.solver.is_kkt() { "coupled-constraint" } else { "fixed-set" }
            ),
        });
    }
    Ok(())
}

/// Seeded unit direction in `R^n`.
pub fn unit_direction(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let d = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let norm: f64 = d.norm();
        if norm > 1e-12 {
            return d / norm;
        }
    }
}

/// Solution the runs are measured against: the primal `a*` for NE solvers,
/// the stacked `(a*, λ*)` for KKT solvers.
fn reference(cfg: &ExperimentConfig, inst: &GameInstance) -> HarnessResult<DVector<f64>> {
    let game = &inst.game;
    let hint = match &cfg.start {
        StartSpec::Point(p) if p.len() == game.dim() => DVector::from_column_slice(p),
        _ => inst.a_star.clone().unwrap_or_else(|| DVector::zeros(game.dim())),
    };
    if !cfg.solver.is_kkt() {
        return match &inst.a_star {
            Some(a) => Ok(a.clone()),
            None => reference_solution(game, &hint).in_run("reference"),
        };
    }
    if let (Some(a), Some(l)) = (&inst.a_star, &inst.lambda_star) {
        return Ok(PrimalDualPoint::new(a.clone(), l.clone()).stacked());
    }
    let z0 = PrimalDualPoint::new(hint.clone(), initial_multipliers(game, &hint).in_run("reference")?);
    let tight = NewtonConfig {
        tol_outer: 1e-13,
        max_outer: 200,
        ..cfg.newton
    };
    let t = semismooth_newton(game, &z0, &tight, TieRule::PreferG).in_run("reference")?;
    if !t.converged() {
        return Err(HarnessError::Solver {
            run: "reference".into(),
            source: Error::NotConverged {
                residual: t.trace.final_residual(),
                iterations: t.iterations(),
            },
        });
    }
    Ok(t.trace.last().clone())
}

/// Start of the run for `seed`: a fixed point, or the reference offset by a
/// seeded random direction (in the space the solver iterates in).
fn start_point(cfg: &ExperimentConfig, game: &GameProblem, z_star: &DVector<f64>, seed: u64) -> HarnessResult<DVector<f64>> {
    match &cfg.start {
        StartSpec::Offset(r) => Ok(z_star + unit_direction(z_star.len(), seed) * *r),
        StartSpec::Point(p) if p.len() == z_star.len() => Ok(DVector::from_column_slice(p)),
        StartSpec::Point(p) if cfg.solver.is_kkt() && p.len() == game.dim() => {
            let a = DVector::from_column_slice(p);
            let l = initial_multipliers(game, &a).in_run("start")?;
            Ok(PrimalDualPoint::new(a, l).stacked())
        }
        StartSpec::Point(p) => Err(HarnessError::Problem {
            problem: cfg.problem.to_string(),
            message: format!("start point has length {}, expected {}", p.len(), z_star.len()),
        }),
    }
}

/// Runs `solver` from `z0`; KKT traces are over the stacked `(a, λ)`.
fn solve(solver: SolverKind, game: &GameProblem, z0: &DVector<f64>, newton: &NewtonConfig) -> nash_newton::Result<IterateTrace> {
    let kkt_start = || PrimalDualPoint::from_stacked(z0, game.dim());
    let br_tol = (newton.tol_outer * 0.1).max(1e-15);
    match solver {
        SolverKind::JosephyNewton => josephy_newton(game, z0, newton),
        SolverKind::Mechanism1 => distributed_jn_mechanism1(game, z0, newton),
        SolverKind::Mechanism2Jacobi => distributed_jn_mechanism2(game, z0, newton, BestResponseOrder::Jacobi, br_tol),
        SolverKind::Mechanism2GaussSeidel => {
            distributed_jn_mechanism2(game, z0, newton, BestResponseOrder::GaussSeidel, br_tol)
        }
        SolverKind::SemismoothNewton => semismooth_newton(game, &kkt_start(), newton, TieRule::PreferG).map(|t| t.trace),
        SolverKind::DistributedSsn => {
            distributed_semismooth_newton(game, &kkt_start(), newton, TieRule::PreferG).map(|t| t.trace)
        }
    }
}

fn has_rate_guarantee(solver: SolverKind) -> bool {
    !matches!(solver, SolverKind::Mechanism2Jacobi | SolverKind::Mechanism2GaussSeidel)
}

fn convergence(cfg: &ExperimentConfig, inst: &GameInstance, report: &mut Report) -> HarnessResult<()> {
    check_solver(cfg, &inst.game)?;
    let z_star = reference(cfg, inst)?;
    let runs: Vec<(u64, HarnessResult<IterateTrace>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let label = format!("seed{seed}");
            let trace = start_point(cfg, &inst.game, &z_star, seed).and_then(|z0| {
                let mut t = solve(cfg.solver, &inst.game, &z0, &cfg.newton).in_run(&label)?;
                t.set_reference(&z_star);
                Ok(t)
            });
            (seed, trace)
        })
        .collect();

    let mut table = Table::new(
        "runs",
        &["seed", "iterations", "converged", "final_residual", "final_error", "rate", "tail_max", "trace_file"],
    );
    for (seed, trace) in runs {
        let label = format!("seed{seed}");
        let trace = match trace {
            Ok(t) => t,
            Err(e) => {
                report.fail(&label, e);
                continue;
            }
        };
        let file = write_file(&cfg.output, &format!("trace_{label}.csv"), &trace.to_csv())?;
        let final_error = trace.error_to_ref.as_ref().and_then(|e| e.last().copied()).unwrap_or(f64::NAN);
        report.verdicts.push(Verdict::holds(format!("{label} converged"), trace.converged, &file));
        if let Some(max) = cfg.thresholds.max_iterations {
            report.verdicts.push(Verdict::at_most(
                format!("{label} iterations"),
                trace.iterations() as f64,
                max as f64,
                &file,
            ));
        }
        let (mut rate, mut tail) = ("-".to_string(), f64::NAN);
        if trace.iterations() <= 1 && trace.converged {
            rate = "one-step".into();
            report.notes.push(format!("{label}: converged in one step; no rate to estimate"));
        } else if has_rate_guarantee(cfg.solver) {
            match estimate_q_rate(&trace) {
                Ok(q) => {
                    rate = format!("{:?}", q.classification);
                    tail = q.tail_max;
                    report.verdicts.push(Verdict::holds(
                        format!("{label} quadratic rate"),
                        q.classification == QRateClass::Quadratic,
                        &file,
                    ));
                    report.verdicts.push(Verdict::at_most(
                        format!("{label} tail ratio"),
                        q.tail_max,
                        cfg.thresholds.ratio_bound,
                        &file,
                    ));
                }
                Err(e) => report.notes.push(format!("{label}: rate not estimated ({e})")),
            }
        }
        table.push(vec![
            json!(seed),
            json!(trace.iterations()),
            json!(trace.converged),
            json!(trace.final_residual()),
            json!(final_error),
            json!(rate),
            json!(tail),
            json!(file),
        ]);
    }
    report.tables.push(table);
    Ok(())
}

fn perturbation_spec(cfg: &ExperimentConfig, magnitude: f64, seed: u64) -> PerturbationSpec {
    let p = &cfg.perturbation;
    let mut spec = match &p.fixed_direction {
        Some(d) => PerturbationSpec::fixed(p.mode, magnitude, DVector::from_column_slice(d)),
        None => PerturbationSpec::uniform(p.mode, magnitude, seed),
    };
    spec.guard = p.guard;
    spec
}

fn perturbed_run(
    cfg: &ExperimentConfig,
    game: &GameProblem,
    z_star: &DVector<f64>,
    magnitude: f64,
    seed: u64,
) -> HarnessResult<IterateTrace> {
    let label = format!("delta{magnitude:e}/seed{seed}");
    let z0 = start_point(cfg, game, z_star, seed)?;
    let spec = perturbation_spec(cfg, magnitude, seed);
    if cfg.solver.is_kkt() {
        let n = game.dim();
        perturbed_semismooth_newton(
            game,
            &PrimalDualPoint::from_stacked(&z0, n),
            &cfg.newton,
            &spec,
            Some(&PrimalDualPoint::from_stacked(z_star, n)),
        )
        .map(|t| t.trace)
        .in_run(&label)
    } else {
        perturbed_josephy_newton(game, &z0, &cfg.newton, &spec, Some(z_star)).in_run(&label)
    }
}

/// Seeds in the first half fit the envelope; the rest validate it.
fn split_seeds(seeds: &[u64]) -> (&[u64], &[u64]) {
    seeds.split_at(seeds.len().div_ceil(2))
}

fn iss_campaign(cfg: &ExperimentConfig, inst: &GameInstance, report: &mut Report) -> HarnessResult<()> {
    check_solver(cfg, &inst.game)?;
    if cfg.perturbation.mode == PerturbationMode::None {
        report.notes.push("perturbation mode is none; the campaign measures the unperturbed solver".into());
    }
    let z_star = reference(cfg, inst)?;
    let (fit_seeds, val_seeds) = split_seeds(&cfg.seeds);
    let jobs: Vec<(f64, u64)> = cfg
        .perturbation
        .magnitudes
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let results: Vec<((f64, u64), HarnessResult<IterateTrace>)> = jobs
        .par_iter()
        .map(|&(m, s)| ((m, s), perturbed_run(cfg, &inst.game, &z_star, m, s)))
        .collect();

    let mut fit_traces = vec![];
    let mut val_traces = vec![];
    let mut per_delta: Vec<(f64, f64)> = vec![];
    let mut runs = Table::new("runs", &["delta", "seed", "role", "ultimate_error", "trace_file"]);
    for ((m, s), trace) in results {
        let label = format!("delta{m:e}/seed{s}");
        let trace = match trace {
            Ok(t) => t,
            Err(e) => {
                report.fail(&label, e);
                continue;
            }
        };
        let file = write_file(&cfg.output, &format!("trace_delta{m:e}_seed{s}.csv"), &trace.to_csv())?;
        let ult = ultimate_error(&trace, cfg.thresholds.ultimate_from).unwrap_or(f64::NAN);
        match per_delta.iter_mut().find(|(d, _)| *d == m) {
            Some(entry) => entry.1 = entry.1.max(ult),
            None => per_delta.push((m, ult)),
        }
        let role = if fit_seeds.contains(&s) { "fit" } else { "validate" };
        runs.push(vec![json!(m), json!(s), json!(role), json!(ult), json!(file)]);
        if fit_seeds.contains(&s) {
            fit_traces.push(trace);
        } else if val_seeds.contains(&s) {
            val_traces.push(trace);
        }
    }
    report.tables.push(runs);

    let fit_triples = iss_triples(&fit_traces);
    let val_triples = iss_triples(&val_traces);
    match estimate_iss_from_triples(&fit_triples, cfg.thresholds.slack) {
        Ok(est) => {
            let (lin, quad) = est.violations(&val_triples, cfg.thresholds.slack);
            let (envelope, violations, name) = if cfg.solver.is_kkt() {
                (est.quadratic.envelope(), quad, "quadratic")
            } else {
                (est.linear.envelope(), lin, "linear")
            };
            let mut t = Table::new("iss_fit", &["template", "l_a", "l_v", "fit_triples", "validation_triples", "violations"]);
            for (tmpl, env, v) in [("linear", est.linear.envelope(), lin), ("quadratic", est.quadratic.envelope(), quad)] {
                t.push(vec![
                    json!(tmpl),
                    json!(env[0]),
                    json!(env[1]),
                    json!(fit_triples.len()),
                    json!(val_triples.len()),
                    json!(v),
                ]);
            }
            report.tables.push(t);
            report.notes.push(format!(
                "{name} envelope L_a = {:e}, L_v = {:e} at slack {}",
                envelope[0], envelope[1], cfg.thresholds.slack
            ));
            report.verdicts.push(Verdict::at_most(
                format!("{name} ISS envelope violations"),
                violations as f64,
                0.0,
                "iss_fit",
            ));
        }
        Err(e) => report.fail("iss fit", e),
    }

    // Ultimate error should scale linearly with the disturbance size.
    per_delta.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut lin = Table::new("ultimate_error", &["delta", "ultimate_error", "ratio"]);
    let mut ratios = vec![];
    for &(d, u) in &per_delta {
        let r = if d > 0.0 { u / d } else { f64::NAN };
        if r.is_finite() && r > 0.0 {
            ratios.push(r);
        }
        lin.push(vec![json!(d), json!(u), json!(r)]);
    }
    report.tables.push(lin);
    if ratios.len() >= 2 {
        let spread = ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
        report.verdicts.push(Verdict::at_most(
            "ultimate error linear in delta",
            spread,
            cfg.thresholds.linearity_factor,
            "ultimate_error",
        ));
    } else {
        report.notes.push("fewer than two positive magnitudes; linearity not judged".into());
    }
    Ok(())
}

fn distributed_compare(cfg: &ExperimentConfig, inst: &GameInstance, report: &mut Report) -> HarnessResult<()> {
    check_solver(cfg, &inst.game)?;
    let z_star = reference(cfg, inst)?;
    let central = cfg.solver.centralized();
    let runs: Vec<(u64, HarnessResult<(IterateTrace, IterateTrace)>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let label = format!("seed{seed}");
            let out = start_point(cfg, &inst.game, &z_star, seed).and_then(|z0| {
                let d = solve(cfg.solver, &inst.game, &z0, &cfg.newton).in_run(&label)?;
                let c = solve(central, &inst.game, &z0, &cfg.newton).in_run(&format!("{label}/{central}"))?;
                Ok((d, c))
            });
            (seed, out)
        })
        .collect();
    let mut table = Table::new(
        "runs",
        &["seed", "iterations", "central_iterations", "difference", "trace_file", "central_trace_file"],
    );
    for (seed, out) in runs {
        let label = format!("seed{seed}");
        let (d, c) = match out {
            Ok(p) => p,
            Err(e) => {
                report.fail(&label, e);
                continue;
            }
        };
        let fd = write_file(&cfg.output, &format!("trace_{label}.csv"), &d.to_csv())?;
        let fc = write_file(&cfg.output, &format!("trace_{label}_central.csv"), &c.to_csv())?;
        let diff = (d.last() - c.last()).amax();
        report.verdicts.push(Verdict::holds(format!("{label} converged"), d.converged, &fd));
        report.verdicts.push(Verdict::at_most(
            format!("{label} matches {central}"),
            diff,
            cfg.thresholds.distributed_tol,
            &fd,
        ));
        table.push(vec![
            json!(seed),
            json!(d.iterations()),
            json!(c.iterations()),
            json!(diff),
            json!(fd),
            json!(fc),
        ]);
    }
    report.tables.push(table);
    Ok(())
}

fn quasireg_scan(cfg: &ExperimentConfig, inst: &GameInstance, report: &mut Report) -> HarnessResult<()> {
    let game = &inst.game;
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    if is_gne(game) {
        let kkt_cfg = ExperimentConfig {
            solver: SolverKind::SemismoothNewton,
            ..cfg.clone()
        };
        let z = PrimalDualPoint::from_stacked(&reference(&kkt_cfg, inst)?, game.dim());
        let residual = phi_norm(game, &z).in_run("scan")?;
        let q = check_quasi_regularity(game, &z).in_run("scan")?;
        let min_sigma = match &q.verdict {
            QuasiRegularityVerdict::AllNonsingular { min_sigma } => *min_sigma,
            QuasiRegularityVerdict::FoundSingular { sigma, witness } => {
                report.notes.push(format!("singular element on branches {witness:?}"));
                *sigma
            }
        };
        let mut t = Table::new("quasi_regularity", &["residual", "ties", "elements_checked", "partial", "min_sigma"]);
        t.push(vec![
            json!(residual),
            json!(q.ties.len()),
            json!(q.elements_checked),
            json!(q.partial),
            json!(min_sigma),
        ]);
        report.tables.push(t);
        report.notes.extend(q.warnings.iter().cloned());
        report.verdicts.push(Verdict::holds("all limiting-Jacobian elements nonsingular", q.all_nonsingular(), "quasi_regularity"));
    } else {
        let ne_cfg = ExperimentConfig {
            solver: SolverKind::JosephyNewton,
            ..cfg.clone()
        };
        let a = reference(&ne_cfg, inst)?;
        let h = game_hessian(game, &a).in_run("scan")?.assembled;
        let mono = check_monotonicity(&h).in_run("scan")?;
        let orthant = |c: CoordCone| {
            CriticalCone::new(game.layout().dims().iter().map(|&d| AgentCone::coordinates(vec![c; d])).collect())
        };
        let cone = match cfg.scan.cone {
            ScanCone::Critical => critical_cone(game, &a).in_run("scan")?,
            ScanCone::Orthant => orthant(CoordCone::Nonnegative),
            ScanCone::OpenOrthant => orthant(CoordCone::Positive),
        };
        let verdict = check_strict_semicopositivity(&h, &cone, cfg.scan.samples, seed).in_run("scan")?;
        let (sampled, enumerated, min_value) = match &verdict {
            SemicopositivityVerdict::NoViolationFound {
                sampled,
                enumerated,
                min_value,
            } => (*sampled, *enumerated, *min_value),
            SemicopositivityVerdict::CertifiedViolated { witness, value } => {
                report.notes.push(format!("violating direction {:?}", witness.as_slice()));
                (0, 0, *value)
            }
        };
        let mut t = Table::new(
            "conditions",
            &["cone", "monotonicity", "min_eigenvalue", "sampled", "enumerated", "min_block_value"],
        );
        t.push(vec![
            json!(cfg.scan.cone.name()),
            json!(format!("{:?}", mono.class)),
            json!(mono.min_eigenvalue),
            json!(sampled),
            json!(enumerated),
            json!(min_value),
        ]);
        report.tables.push(t);
        if mono.class == MonotonicityClass::Indefinite {
            report.notes.push("game Hessian is not monotone; local guarantees rest on semicopositivity".into());
        }
        report.verdicts.push(Verdict::holds(
            format!("strictly semicopositive on the {} cone", cfg.scan.cone.name()),
            !verdict.is_violated(),
            "conditions",
        ));
    }
    Ok(())
}

fn tdo_solver(s: SolverKind) -> TdoSolver {
    match s {
        SolverKind::JosephyNewton => TdoSolver::JosephyNewton,
        SolverKind::SemismoothNewton => TdoSolver::SemismoothNewton,
        SolverKind::DistributedSsn => TdoSolver::DistributedSsn,
        _ => TdoSolver::DistributedJn,
    }
}

fn scenario_for(cfg: &ExperimentConfig, s: &MpcScenario, k: usize) -> MpcScenario {
    let mut s = s.clone();
    s.k_budget = k;
    if let Some(t) = cfg.mpc.t_end {
        s.t_end = t;
    }
    if let Some(e) = cfg.mpc.e0 {
        s.e0 = e;
    }
    s
}

fn closed_loops(
    cfg: &ExperimentConfig,
    s: &MpcScenario,
    k: usize,
    solver: &MpcSolverConfig,
    report: &mut Report,
) -> HarnessResult<Vec<(u64, ClosedLoopLog)>> {
    let s = scenario_for(cfg, s, k);
    let logs: Vec<(u64, nash_newton::Result<ClosedLoopLog>)> =
        cfg.seeds.par_iter().map(|&seed| (seed, run_closed_loop(&s, solver, seed))).collect();
    let mut out = vec![];
    for (seed, log) in logs {
        let label = format!("k{k}/seed{seed}");
        match log {
            Ok(log) => {
                write_file(&cfg.output, &format!("mpc_k{k}_seed{seed}.csv"), &log.to_csv())?;
                if let Some(e) = &log.aborted {
                    report.fail(&label, e);
                } else {
                    out.push((seed, log));
                }
            }
            Err(e) => report.fail(&label, e),
        }
    }
    Ok(out)
}

fn mpc_sweep(cfg: &ExperimentConfig, s: &MpcScenario, report: &mut Report) -> HarnessResult<()> {
    let solver = MpcSolverConfig {
        solver: tdo_solver(cfg.solver),
        newton: cfg.newton,
        ..MpcSolverConfig::default()
    };
    let (fit_seeds, _) = split_seeds(&cfg.seeds);
    let mut campaign = vec![];
    for &k in &cfg.mpc.k_values {
        let logs = closed_loops(cfg, s, k, &solver, report)?;
        let (fit, validation): (Vec<_>, Vec<_>) = logs.into_iter().partition(|(seed, _)| fit_seeds.contains(seed));
        campaign.push(BudgetLogs {
            k,
            fit: fit.into_iter().map(|(_, l)| l).collect(),
            validation: validation.into_iter().map(|(_, l)| l).collect(),
        });
    }
    match estimate_contraction(&campaign, cfg.thresholds.slack, ContractionFit::Lipschitz) {
        Ok(table) => {
            let file = write_file(&cfg.output, "mpc_summary.csv", &table.to_csv())?;
            let mut t = Table::new("contraction", &["k", "sup_e", "alpha", "theta", "lipschitz", "violations", "validation_samples"]);
            for r in &table.rows {
                t.push(vec![
                    json!(r.k),
                    json!(r.sup_e),
                    json!(r.alpha),
                    json!(r.theta),
                    json!(r.lipschitz),
                    json!(r.violations),
                    json!(r.n_validation),
                ]);
            }
            report.tables.push(t);
            report.verdicts.push(Verdict::holds("sup e nonincreasing in K", table.sup_e_nonincreasing, &file));
            report.verdicts.push(Verdict::holds("alpha nonincreasing in K", table.alpha_nonincreasing, &file));
            report.verdicts.push(Verdict::at_most(
                "contraction envelope violations",
                table.total_violations() as f64,
                0.0,
                &file,
            ));
        }
        Err(e) => report.fail("contraction fit", e),
    }
    if let Some(k) = cfg.mpc.tracking_k {
        let logs = closed_loops(cfg, s, k, &solver, report)?;
        let worst = logs.iter().map(|(_, l)| l.sup_e()).fold(0.0, f64::max);
        report.verdicts.push(Verdict::at_most(
            format!("K = {k} tracks the exact solution"),
            worst,
            cfg.thresholds.tracking_tol,
            format!("mpc_k{k}_seed*.csv"),
        ));
    }
    Ok(())
}
