//! Experiment configuration files (TOML).

use std::fmt;
use std::path::{Path, PathBuf};

use nash_newton::newton::{NewtonConfig, PerturbationMode};
use nash_newton::vi::ViConfig;
use serde::Deserialize;

use crate::error::{ConfigError, ConfigIssue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Convergence,
    IssCampaign,
    DistributedCompare,
    QuasiRegularityScan,
    MpcSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Convergence,
        ExperimentKind::IssCampaign,
        ExperimentKind::DistributedCompare,
        ExperimentKind::QuasiRegularityScan,
        ExperimentKind::MpcSweep,
    ];

    /// Name used in config files and as CLI subcommand.
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "converge",
            ExperimentKind::IssCampaign => "iss",
            ExperimentKind::DistributedCompare => "distributed",
            ExperimentKind::QuasiRegularityScan => "quasireg",
            ExperimentKind::MpcSweep => "mpc-sweep",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn is_stochastic(self) -> bool {
        !matches!(self, ExperimentKind::QuasiRegularityScan)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    JosephyNewton,
    Mechanism1,
    Mechanism2Jacobi,
    Mechanism2GaussSeidel,
    SemismoothNewton,
    DistributedSsn,
}

impl SolverKind {
    pub const ALL: [SolverKind; 6] = [
        SolverKind::JosephyNewton,
        SolverKind::Mechanism1,
        SolverKind::Mechanism2Jacobi,
        SolverKind::Mechanism2GaussSeidel,
        SolverKind::SemismoothNewton,
        SolverKind::DistributedSsn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::JosephyNewton => "josephy-newton",
            SolverKind::Mechanism1 => "mechanism1",
            SolverKind::Mechanism2Jacobi => "mechanism2-jacobi",
            SolverKind::Mechanism2GaussSeidel => "mechanism2-gauss-seidel",
            SolverKind::SemismoothNewton => "semismooth-newton",
            SolverKind::DistributedSsn => "distributed-ssn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Solvers working on the primal-dual KKT system.
    pub fn is_kkt(self) -> bool {
        matches!(self, SolverKind::SemismoothNewton | SolverKind::DistributedSsn)
    }

    pub fn is_distributed(self) -> bool {
        !matches!(self, SolverKind::JosephyNewton | SolverKind::SemismoothNewton)
    }

    /// Centralized counterpart used by distributed comparisons.
    pub fn centralized(self) -> SolverKind {
        if self.is_kkt() {
            SolverKind::SemismoothNewton
        } else {
            SolverKind::JosephyNewton
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `builtin:<name>` or a path (relative to the config file) to a game or
/// scenario definition.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemRef {
    Builtin(String),
    File(PathBuf),
}

impl fmt::Display for ProblemRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemRef::Builtin(n) => write!(f, "builtin:{n}"),
            ProblemRef::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// Where runs start.
#[derive(Debug, Clone, PartialEq)]
pub enum StartSpec {
    /// A fixed initial point (primal part for KKT solvers).
    Point(Vec<f64>),
    /// `a* + radius·d` with `d` a seeded random unit direction.
    Offset(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSettings {
    pub mode: PerturbationMode,
    pub magnitudes: Vec<f64>,
    /// Fixed direction instead of uniform-ball draws.
    pub fixed_direction: Option<Vec<f64>>,
    pub guard: f64,
}

/// Acceptance thresholds a report is judged against.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub slack: f64,
    pub ratio_bound: f64,
    pub max_iterations: Option<usize>,
    pub linearity_factor: f64,
    pub distributed_tol: f64,
    /// Ultimate error is measured from this iteration on.
    pub ultimate_from: usize,
    /// Largest `e(t)` accepted for `MpcSettings::tracking_k`.
    pub tracking_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            slack: 1.1,
            ratio_bound: 1e3,
            max_iterations: None,
            linearity_factor: 3.0,
            distributed_tol: 1e-8,
            ultimate_from: 10,
            tracking_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSettings {
    pub k_values: Vec<usize>,
    /// Extra budget whose loop must track the exact solution.
    pub tracking_k: Option<usize>,
    pub t_end: Option<usize>,
    pub e0: Option<f64>,
}

/// Cone a regularity scan checks semicopositivity on (fixed-set games).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanCone {
    /// Critical cone of the game at its solution.
    Critical,
    /// Closed nonnegative orthant.
    Orthant,
    /// Open positive orthant.
    OpenOrthant,
}

impl ScanCone {
    pub fn name(self) -> &'static str {
        match self {
            ScanCone::Critical => "critical",
            ScanCone::Orthant => "orthant",
            ScanCone::OpenOrthant => "open-orthant",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [ScanCone::Critical, ScanCone::Orthant, ScanCone::OpenOrthant]
            .into_iter()
            .find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSettings {
    pub cone: ScanCone,
    /// Random cone directions drawn after the deterministic candidates.
    pub samples: usize,
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings {
            cone: ScanCone::Critical,
            samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub problem: ProblemRef,
    pub solver: SolverKind,
    pub newton: NewtonConfig,
    pub perturbation: PerturbationSettings,
    pub seeds: Vec<u64>,
    pub start: StartSpec,
    pub thresholds: Thresholds,
    pub mpc: MpcSettings,
    pub scan: ScanSettings,
    pub output: PathBuf,
}

/// One scheduled unit of work.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub label: String,
    pub seeds: Vec<u64>,
    pub magnitude: Option<f64>,
    pub k: Option<usize>,
}

impl ExperimentConfig {
    /// Runs in execution order: one per seed (convergence, distributed), per
    /// disturbance magnitude (ISS), per budget `K` (MPC sweep), or a single
    /// scan.
    pub fn runs(&self) -> Vec<RunSpec> {
        let run = |label: String, seeds: Vec<u64>| RunSpec {
            label,
            seeds,
            magnitude: None,
            k: None,
        };
        match self.kind {
            ExperimentKind::Convergence | ExperimentKind::DistributedCompare => {
                self.seeds.iter().map(|&s| run(format!("seed{s}"), vec![s])).collect()
            }
            ExperimentKind::IssCampaign => self
                .perturbation
                .magnitudes
                .iter()
                .map(|&m| RunSpec {
                    magnitude: Some(m),
                    ..run(format!("delta{m:e}"), self.seeds.clone())
                })
                .collect(),
            ExperimentKind::QuasiRegularityScan => vec![run("scan".into(), self.seeds.clone())],
            ExperimentKind::MpcSweep => self
                .mpc
                .k_values
                .iter()
                .chain(self.mpc.tracking_k.iter())
                .map(|&k| RunSpec {
                    k: Some(k),
                    ..run(format!("k{k}"), self.seeds.clone())
                })
                .collect(),
        }
    }

    /// Replaces the seed list by `base, base+1, …` of the same length.
    pub fn override_seeds(&mut self, base: u64) {
        let n = self.seeds.len().max(1) as u64;
        self.seeds = (0..n).map(|i| base.wrapping_add(i)).collect();
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: String,
    problem: String,
    solver: Option<String>,
    seeds: Option<Vec<u64>>,
    output: Option<String>,
    #[serde(default)]
    newton: RawNewton,
    perturbation: Option<RawPerturbation>,
    start: Option<RawStart>,
    #[serde(default)]
    thresholds: RawThresholds,
    mpc: Option<RawMpc>,
    scan: Option<RawScan>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    cone: Option<String>,
    samples: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNewton {
    tol_outer: Option<f64>,
    max_outer: Option<i64>,
    damping: Option<f64>,
    inner_tol: Option<f64>,
    inner_max_iter: Option<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPerturbation {
    mode: String,
    magnitudes: Vec<f64>,
    direction: Option<Vec<f64>>,
    guard: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStart {
    point: Option<Vec<f64>>,
    offset: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThresholds {
    slack: Option<f64>,
    ratio_bound: Option<f64>,
    max_iterations: Option<i64>,
    linearity_factor: Option<f64>,
    distributed_tol: Option<f64>,
    ultimate_from: Option<i64>,
    tracking_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMpc {
    k_values: Vec<i64>,
    tracking_k: Option<i64>,
    t_end: Option<i64>,
    e0: Option<f64>,
}

fn parse_mode(s: &str) -> Option<PerturbationMode> {
    Some(match s {
        "none" => PerturbationMode::None,
        "additive-gradient" => PerturbationMode::AdditiveGradient,
        "additive-hessian" => PerturbationMode::AdditiveHessian,
        "residual-injection" => PerturbationMode::ResidualInjection,
        _ => return None,
    })
}

/// Collects every validation problem instead of stopping at the first.
#[derive(Default)]
struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(ConfigIssue {
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn positive(&mut self, field: &str, v: Option<f64>, default: f64) -> f64 {
        match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                self.push(field, format!("must be positive and finite, got {x}"));
                default
            }
            Some(x) => x,
            None => default,
        }
    }

    fn count(&mut self, field: &str, v: Option<i64>, min: i64) -> Option<usize> {
        match v {
            Some(x) if x < min => {
                self.push(field, format!("must be at least {min}, got {x}"));
                None
            }
            Some(x) => Some(x as usize),
            None => None,
        }
    }
}

/// Reads and validates a config file. Relative problem and output paths are
/// resolved against the file's directory.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base).map_err(|e| e.with_path(path))
}

/// [`parse_config`] on in-memory text, resolving paths against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_col(text, s.start))
            .unwrap_or((0, 0));
        ConfigError::Parse {
            path: None,
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let mut issues = Issues::default();

    let kind = ExperimentKind::parse(&raw.kind);
    if kind.is_none() {
        issues.push(
            "kind",
            format!(
                "unknown experiment kind {:?}; expected one of {}",
                raw.kind,
                ExperimentKind::ALL.map(|k| k.name()).join(", ")
            ),
        );
    }
    let kind = kind.unwrap_or(ExperimentKind::Convergence);

    let problem = match raw.problem.strip_prefix("builtin:") {
        Some(name) => ProblemRef::Builtin(name.to_string()),
        None => ProblemRef::File(base.join(&raw.problem)),
    };

    let default_solver = match kind {
        ExperimentKind::DistributedCompare => SolverKind::Mechanism1,
        ExperimentKind::QuasiRegularityScan => SolverKind::SemismoothNewton,
        ExperimentKind::MpcSweep => SolverKind::Mechanism1,
        _ => SolverKind::JosephyNewton,
    };
    let solver = match &raw.solver {
        None => default_solver,
        Some(s) => SolverKind::parse(s).unwrap_or_else(|| {
            issues.push(
                "solver",
                format!(
                    "unknown solver {s:?}; expected one of {}",
                    SolverKind::ALL.map(|k| k.name()).join(", ")
                ),
            );
            default_solver
        }),
    };
    if kind == ExperimentKind::DistributedCompare && !solver.is_distributed() {
        issues.push("solver", format!("distributed comparison needs a distributed solver, got {solver}"));
    }
    if kind == ExperimentKind::IssCampaign && !matches!(solver, SolverKind::JosephyNewton | SolverKind::SemismoothNewton) {
        issues.push("solver", format!("ISS campaigns run josephy-newton or semismooth-newton, got {solver}"));
    }
    if kind == ExperimentKind::MpcSweep && !matches!(solver, SolverKind::Mechanism1 | SolverKind::JosephyNewton | SolverKind::SemismoothNewton | SolverKind::DistributedSsn) {
        issues.push("solver", format!("{solver} cannot run inside the closed loop"));
    }

    let d = NewtonConfig::default();
    let newton = NewtonConfig {
        tol_outer: issues.positive("newton.tol_outer", raw.newton.tol_outer, d.tol_outer),
        max_outer: issues.count("newton.max_outer", raw.newton.max_outer, 1).unwrap_or(d.max_outer),
        damping: match raw.newton.damping {
            Some(x) if !(x > 0.0 && x <= 1.0) => {
                issues.push("newton.damping", format!("must lie in (0, 1], got {x}"));
                d.damping
            }
            Some(x) => x,
            None => d.damping,
        },
        inner: ViConfig {
            tol: issues.positive("newton.inner_tol", raw.newton.inner_tol, d.inner.tol),
            max_iter: issues
                .count("newton.inner_max_iter", raw.newton.inner_max_iter, 1)
                .unwrap_or(d.inner.max_iter),
        },
    };

    let perturbation = match raw.perturbation {
        None => {
            if kind == ExperimentKind::IssCampaign {
                issues.push("perturbation", "an ISS campaign needs a [perturbation] table");
            }
            PerturbationSettings {
                mode: PerturbationMode::None,
                magnitudes: vec![],
                fixed_direction: None,
                guard: 1.0,
            }
        }
        Some(p) => {
            let mode = parse_mode(&p.mode).unwrap_or_else(|| {
                issues.push("perturbation.mode", format!("unknown mode {:?}", p.mode));
                PerturbationMode::None
            });
            let guard = issues.positive("perturbation.guard", p.guard, 1.0);
            if p.magnitudes.is_empty() {
                issues.push("perturbation.magnitudes", "must not be empty");
            }
            for (i, m) in p.magnitudes.iter().enumerate() {
                if !(m.is_finite() && *m >= 0.0) {
                    issues.push(&format!("perturbation.magnitudes[{i}]"), format!("must be nonnegative, got {m}"));
                } else if *m > guard {
                    issues.push(&format!("perturbation.magnitudes[{i}]"), format!("{m} exceeds the guard {guard}"));
                }
            }
            if let Some(dir) = &p.direction {
                if !dir.iter().any(|x| *x != 0.0) || !dir.iter().all(|x| x.is_finite()) {
                    issues.push("perturbation.direction", "must be finite and nonzero");
                }
            }
            if solver.is_kkt() && !matches!(mode, PerturbationMode::ResidualInjection | PerturbationMode::None) {
                issues.push("perturbation.mode", "semismooth solvers accept residual-injection only");
            }
            PerturbationSettings {
                mode,
                magnitudes: p.magnitudes,
                fixed_direction: p.direction,
                guard,
            }
        }
    };

    let seeds = raw.seeds.unwrap_or_default();
    if kind.is_stochastic() && seeds.is_empty() && !matches!(raw.start, Some(RawStart { point: Some(_), .. })) {
        issues.push("seeds", "must not be empty for this experiment kind");
    }
    let seeds = if seeds.is_empty() { vec![0] } else { seeds };

    let start = match raw.start {
        None => StartSpec::Offset(0.1),
        Some(RawStart { point: Some(_), offset: Some(_) }) => {
            issues.push("start", "give either point or offset, not both");
            StartSpec::Offset(0.1)
        }
        Some(RawStart { point: Some(p), .. }) => {
            if !p.iter().all(|x| x.is_finite()) {
                issues.push("start.point", "must be finite");
            }
            StartSpec::Point(p)
        }
        Some(RawStart { offset, .. }) => match offset {
            Some(r) if !(r.is_finite() && r >= 0.0) => {
                issues.push("start.offset", format!("must be nonnegative, got {r}"));
                StartSpec::Offset(0.1)
            }
            Some(r) => StartSpec::Offset(r),
            None => StartSpec::Offset(0.1),
        },
    };

    let dt = Thresholds::default();
    let t = &raw.thresholds;
    let thresholds = Thresholds {
        slack: match t.slack {
            Some(s) if !(s >= 1.0 && s.is_finite()) => {
                issues.push("thresholds.slack", format!("must be at least 1, got {s}"));
                dt.slack
            }
            Some(s) => s,
            None => dt.slack,
        },
        ratio_bound: issues.positive("thresholds.ratio_bound", t.ratio_bound, dt.ratio_bound),
        max_iterations: issues.count("thresholds.max_iterations", t.max_iterations, 1),
        linearity_factor: issues.positive("thresholds.linearity_factor", t.linearity_factor, dt.linearity_factor),
        distributed_tol: issues.positive("thresholds.distributed_tol", t.distributed_tol, dt.distributed_tol),
        ultimate_from: issues
            .count("thresholds.ultimate_from", t.ultimate_from, 0)
            .unwrap_or(dt.ultimate_from),
        tracking_tol: issues.positive("thresholds.tracking_tol", t.tracking_tol, dt.tracking_tol),
    };

    let mpc = match raw.mpc {
        None => {
            if kind == ExperimentKind::MpcSweep {
                issues.push("mpc", "an MPC sweep needs an [mpc] table with k_values");
            }
            MpcSettings {
                k_values: vec![],
                tracking_k: None,
                t_end: None,
                e0: None,
            }
        }
        Some(m) => {
            if m.k_values.is_empty() {
                issues.push("mpc.k_values", "must not be empty");
            }
            let k_values = m
                .k_values
                .iter()
                .enumerate()
                .filter_map(|(i, &k)| issues.count(&format!("mpc.k_values[{i}]"), Some(k), 0))
                .collect();
            let e0 = match m.e0 {
                Some(e) if !(e.is_finite() && e >= 0.0) => {
                    issues.push("mpc.e0", format!("must be nonnegative, got {e}"));
                    None
                }
                e => e,
            };
            MpcSettings {
                k_values,
                tracking_k: issues.count("mpc.tracking_k", m.tracking_k, 0),
                t_end: issues.count("mpc.t_end", m.t_end, 1),
                e0,
            }
        }
    };

    let ds = ScanSettings::default();
    let scan = match raw.scan {
        None => ds,
        Some(r) => ScanSettings {
            cone: match r.cone.as_deref() {
                None => ds.cone,
                Some(c) => ScanCone::parse(c).unwrap_or_else(|| {
                    issues.push("scan.cone", format!("unknown cone {c:?}; expected critical, orthant or open-orthant"));
                    ds.cone
                }),
            },
            samples: issues.count("scan.samples", r.samples, 0).unwrap_or(ds.samples),
        },
    };

    if !issues.0.is_empty() {
        return Err(ConfigError::Invalid { path: None, issues: issues.0 });
    }
    Ok(ExperimentConfig {
        kind,
        problem,
        solver,
        newton,
        perturbation,
        seeds,
        start,
        thresholds,
        mpc,
        scan,
        output: base.join(raw.output.unwrap_or_else(|| "out".into())),
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}
