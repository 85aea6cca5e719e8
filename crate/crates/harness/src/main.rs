use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nash_newton_harness::{oracle_registry, parse_config, run_experiment, ExperimentKind, HarnessError};

#[derive(Parser)]
#[command(name = "nash-newton", version, about = "Run Newton-type equilibrium experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the seed list by `N, N+1, …` of the same length.
    #[arg(long, value_name = "N")]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence and Q-rate of a solver from seeded starts.
    Converge(RunArgs),
    /// Perturbed runs and ISS envelope fits.
    Iss(RunArgs),
    /// Distributed solver against its centralized counterpart.
    Distributed(RunArgs),
    /// Regularity conditions at the solution.
    Quasireg(RunArgs),
    /// Closed-loop MPC over iteration budgets.
    MpcSweep(RunArgs),
    /// List the brute-force oracles and run their self-tests.
    Oracles,
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<bool, HarnessError> {
    let mut cfg = parse_config(&args.config)?;
    if cfg.kind != kind {
        return Err(HarnessError::Problem {
            problem: args.config.display().to_string(),
            message: format!("config is a {} experiment, not {kind}", cfg.kind),
        });
    }
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    if let Some(s) = args.seed_override {
        cfg.override_seeds(s);
    }
    let report = run_experiment(&cfg)?;
    println!("{}", report.summary());
    println!("report: {}", cfg.output.join("report.json").display());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Converge(a) => (ExperimentKind::Convergence, a),
        Command::Iss(a) => (ExperimentKind::IssCampaign, a),
        Command::Distributed(a) => (ExperimentKind::DistributedCompare, a),
        Command::Quasireg(a) => (ExperimentKind::QuasiRegularityScan, a),
        Command::MpcSweep(a) => (ExperimentKind::MpcSweep, a),
        Command::Oracles => {
            let tests = oracle_registry().self_test();
            for t in &tests {
                println!(
                    "{} {}: {} ({})",
                    if t.passed { "PASS" } else { "FAIL" },
                    t.oracle.name(),
                    t.oracle.description(),
                    t.detail
                );
            }
            return if tests.iter().all(|t| t.passed) { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
