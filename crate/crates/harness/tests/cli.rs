use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nash-newton"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const CONVERGE: &str = "kind = \"converge\"\nproblem = \"builtin:quartic\"\nseeds = [0, 1]\n";

#[test]
fn passing_run_exits_zero_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONVERGE);
    let out = dir.path().join("out");
    let st = bin().args(["converge", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(out.join("report.json").exists());
    assert!(out.join("trace_seed0.csv").exists());
}

#[test]
fn threshold_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // The quartic game needs several iterations; a limit of one must fail.
    let text = format!("{CONVERGE}[thresholds]\nmax_iterations = 1\n");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let st = bin().args(["converge", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stdout).contains("FAIL"));
}

#[test]
fn invalid_config_and_kind_mismatch_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "kind = \"converge\"\nproblem = \"builtin:quartic\"\nseeds = [0]\n[newton]\ntol_outer = -1.0\n");
    let st = bin().args(["converge", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("newton.tol_outer"));

    let cfg = write_config(dir.path(), "c.toml", CONVERGE);
    let st = bin().args(["iss", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    let missing = write_config(dir.path(), "m.toml", "kind = \"converge\"\nproblem = \"nope.toml\"\nseeds = [0]\n");
    let st = bin().args(["converge", "--config"]).arg(&missing).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONVERGE);
    let read = |name: &str| {
        let out = dir.path().join(name);
        let st = bin().args(["converge", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
        assert!(st.status.success());
        std::fs::read(out.join("report.json")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn seed_override_changes_the_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONVERGE);
    let out = dir.path().join("out");
    let st = bin()
        .args(["converge", "--seed-override", "40", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seeds"], serde_json::json!([40, 41]));
}

#[test]
fn oracle_self_tests_pass() {
    let st = bin().arg("oracles").output().unwrap();
    assert!(st.status.success());
    assert_eq!(String::from_utf8_lossy(&st.stdout).lines().filter(|l| l.starts_with("PASS")).count(), 4);
}
