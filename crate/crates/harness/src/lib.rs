//! Experiment harness for `nash-newton`: TOML experiment configs, game and
//! scenario files, brute-force oracles, and deterministic JSON reports.

pub mod config;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod problem;
pub mod report;

pub use config::{
    parse_config, parse_config_str, ExperimentConfig, ExperimentKind, MpcSettings, PerturbationSettings, ProblemRef,
    RunSpec, ScanCone, ScanSettings, SolverKind, StartSpec, Thresholds,
};
pub use error::{ConfigError, ConfigIssue, HarnessError, HarnessResult};
pub use experiment::{run_experiment, unit_direction};
pub use oracle::{oracle_registry, problem_hash, OracleId, OracleRegistry, SelfTest};
pub use problem::{builtin, load_problem, parse_problem, GameInstance, Problem, BUILTIN_GAMES, BUILTIN_SCENARIOS};
pub use report::{Comparison, Report, RunFailure, Table, Verdict};
