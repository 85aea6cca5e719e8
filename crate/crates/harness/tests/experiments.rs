use std::path::Path;

use nash_newton_harness::{parse_config, parse_config_str, run_experiment, HarnessError, Report};

fn run(text: &str) -> (Report, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(text, dir.path()).unwrap();
    let report = run_experiment(&cfg).unwrap();
    (report, dir)
}

#[test]
fn shipped_configs_parse() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&configs).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            parse_config(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn convergence_on_affine_file_game_is_one_step() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("g.toml"),
        "dims = [1, 1]\nhessian = [[2.0, 1.0], [1.0, 2.0]]\nlinear = [-1.0, -1.0]\n\
         [[sets]]\nkind = \"box\"\nlower = [0.0]\nupper = [1.0]\n\
         [[sets]]\nkind = \"box\"\nlower = [0.0]\nupper = [1.0]\n",
    )
    .unwrap();
    let cfg = parse_config_str(
        "kind = \"converge\"\nproblem = \"g.toml\"\nseeds = [0, 1]\n[thresholds]\nmax_iterations = 1\n",
        dir.path(),
    )
    .unwrap();
    let r = run_experiment(&cfg).unwrap();
    assert!(r.passed(), "{}", r.summary());
    assert!(r.notes.iter().any(|n| n.contains("one step")));
}

#[test]
fn quartic_convergence_is_quadratic() {
    let (r, dir) = run("kind = \"converge\"\nproblem = \"builtin:quartic\"\nsolver = \"mechanism1\"\nseeds = [0, 1, 2]\n");
    assert!(r.passed(), "{}", r.summary());
    assert_eq!(r.verdicts.iter().filter(|v| v.name.contains("quadratic rate")).count(), 3);
    assert!(dir.path().join("out/trace_seed2.csv").exists());
}

#[test]
fn jacobi_best_responses_match_centralized() {
    let (r, _d) = run(
        "kind = \"distributed\"\nproblem = \"builtin:quartic\"\nsolver = \"mechanism2-jacobi\"\nseeds = [0, 1]\n\
         [newton]\ntol_outer = 1e-12\nmax_outer = 300\n",
    );
    assert!(r.passed(), "{}", r.summary());
}

#[test]
fn iss_without_disturbance_reports_degenerate_fit() {
    let (r, _d) = run(
        "kind = \"iss\"\nproblem = \"builtin:quartic\"\nseeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23]\n\
         [perturbation]\nmode = \"none\"\nmagnitudes = [0.0]\n",
    );
    assert!(!r.passed());
    assert!(r.failures.iter().any(|f| f.error.contains("zero")), "{:?}", r.failures);
}

#[test]
fn quasireg_scan_on_closed_orthant_finds_boundary_direction() {
    let (r, _d) = run("kind = \"quasireg\"\nproblem = \"builtin:indefinite-orthant\"\n[scan]\ncone = \"orthant\"\n");
    assert!(!r.passed());
    assert!(r.notes.iter().any(|n| n.contains("violating direction")));
}

#[test]
fn gne_quasireg_scan_passes_for_regular_family_member() {
    let (r, _d) = run("kind = \"quasireg\"\nproblem = \"builtin:shared-gne\"\n");
    assert!(r.passed(), "{}", r.summary());
}

#[test]
fn solver_and_problem_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(
        "kind = \"converge\"\nproblem = \"builtin:shared-gne\"\nsolver = \"josephy-newton\"\nseeds = [0]\n",
        dir.path(),
    )
    .unwrap();
    assert!(matches!(run_experiment(&cfg), Err(HarnessError::Problem { .. })));
    let cfg = parse_config_str("kind = \"converge\"\nproblem = \"builtin:pursuit\"\nseeds = [0]\n", dir.path()).unwrap();
    assert!(matches!(run_experiment(&cfg), Err(HarnessError::Problem { .. })));
}

#[test]
fn mpc_sweep_writes_summary_and_per_run_logs() {
    let (r, dir) = run(
        "kind = \"mpc-sweep\"\nproblem = \"builtin:pursuit\"\nseeds = [0, 1, 2, 3]\n\
         [mpc]\nk_values = [1, 3]\ntracking_k = 40\nt_end = 30\n",
    );
    assert!(r.passed(), "{}", r.summary());
    let summary = std::fs::read_to_string(dir.path().join("out/mpc_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(dir.path().join("out/mpc_k40_seed3.csv").exists());
}
