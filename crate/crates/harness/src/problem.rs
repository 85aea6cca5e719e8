//! Game and scenario definition files, and the built-in catalog.

use std::sync::Arc;

use nash_newton::game::{
    analytic_shared_gne, bilinear_pennies_game, quartic_game, quartic_test_game, random_monotone_quadratic_game,
    indefinite_orthant_game, ConstraintFunction, CostOracle, FeasibleSet, GameProblem, QuadraticConstraints, QuadraticGame,
    QuarticGame, RandomGameSpec, QUARTIC_TEST_EQUILIBRIUM,
};
use nash_newton::mpc::{pursuit_scenario, LinearPlant, MpcAgent, MpcMode, MpcScenario, Plant, PursuitSpec};
use nash_newton::{DMatrix, DVector};
use serde::Deserialize;

use crate::config::ProblemRef;
use crate::error::{ConfigIssue, HarnessError, HarnessResult};

/// A game with optional known solution.
#[derive(Debug, Clone)]
pub struct GameInstance {
    pub name: String,
    pub game: GameProblem,
    /// Known primal solution.
    pub a_star: Option<DVector<f64>>,
    /// Known multipliers (GNE form).
    pub lambda_star: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub enum Problem {
    Game(GameInstance),
    Scenario(MpcScenario),
}

pub const BUILTIN_GAMES: [&str; 7] = [
    "indefinite-orthant",
    "quartic",
    "quartic-coupled",
    "shared-gne",
    "shared-gne-degenerate",
    "pennies",
    "random-quadratic",
];

pub const BUILTIN_SCENARIOS: [&str; 3] = ["pursuit", "pursuit-planar", "pursuit-gne"];

fn instance(name: &str, game: GameProblem) -> GameInstance {
    GameInstance {
        name: name.to_string(),
        game,
        a_star: None,
        lambda_star: None,
    }
}

/// Built-in games and scenarios by name.
pub fn builtin(name: &str) -> Option<Problem> {
    let half = || DVector::from_element(2, 0.5);
    let game = match name {
        "indefinite-orthant" => GameInstance {
            a_star: Some(DVector::zeros(2)),
            ..instance(name, indefinite_orthant_game())
        },
        "quartic" => GameInstance {
            a_star: Some(DVector::from_row_slice(&QUARTIC_TEST_EQUILIBRIUM)),
            ..instance(name, quartic_test_game())
        },
        "quartic-coupled" => GameInstance {
            a_star: Some(DVector::from_row_slice(&QUARTIC_TEST_EQUILIBRIUM)),
            ..instance(name, quartic_game(0.3))
        },
        "shared-gne" => GameInstance {
            a_star: Some(half()),
            lambda_star: Some(half()),
            ..instance(name, analytic_shared_gne(0.5))
        },
        "shared-gne-degenerate" => GameInstance {
            a_star: Some(half()),
            lambda_star: Some(half()),
            ..instance(name, analytic_shared_gne(1.0))
        },
        "pennies" => GameInstance {
            a_star: Some(DVector::zeros(2)),
            ..instance(name, bilinear_pennies_game())
        },
        "random-quadratic" => instance(name, random_monotone_quadratic_game(&RandomGameSpec::default(), 0).0),
        "pursuit" => return pursuit_scenario(&PursuitSpec::default()).ok().map(Problem::Scenario),
        "pursuit-planar" => {
            return pursuit_scenario(&PursuitSpec {
                planar: true,
                ..PursuitSpec::default()
            })
            .ok()
            .map(Problem::Scenario)
        }
        "pursuit-gne" => {
            let mut s = pursuit_scenario(&PursuitSpec::default()).ok()?;
            s.mode = MpcMode::Gne;
            return Some(Problem::Scenario(s));
        }
        _ => return None,
    };
    Some(Problem::Game(game))
}

/// Loads the referenced problem. Files containing an `[[agents]]` table are
/// scenarios; everything else is read as a game definition.
pub fn load_problem(r: &ProblemRef) -> HarnessResult<Problem> {
    match r {
        ProblemRef::Builtin(name) => builtin(name).ok_or_else(|| HarnessError::Problem {
            problem: r.to_string(),
            message: format!(
                "unknown built-in; games: {}; scenarios: {}",
                BUILTIN_GAMES.join(", "),
                BUILTIN_SCENARIOS.join(", ")
            ),
        }),
        ProblemRef::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Problem {
                problem: path.display().to_string(),
                message: e.to_string(),
            })?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("game");
            parse_problem(&text, stem).map_err(|message| HarnessError::Problem {
                problem: path.display().to_string(),
                message,
            })
        }
    }
}

/// Parses game or scenario text; errors list every problem found.
pub fn parse_problem(text: &str, name: &str) -> Result<Problem, String> {
    let value: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
    if value.contains_key("agents") {
        let raw: RawScenario = toml::from_str(text).map_err(|e| e.to_string())?;
        build_scenario(raw).map(Problem::Scenario).map_err(join_issues)
    } else {
        let raw: RawGame = toml::from_str(text).map_err(|e| e.to_string())?;
        build_game(raw, name).map(Problem::Game).map_err(join_issues)
    }
}

fn join_issues(issues: Vec<ConfigIssue>) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGame {
    dims: Vec<usize>,
    /// Assembled game Hessian of the quadratic part, row by row.
    hessian: Vec<Vec<f64>>,
    linear: Vec<f64>,
    quartic: Option<RawQuartic>,
    reference: Option<Vec<f64>>,
    reference_multipliers: Option<Vec<f64>>,
    sets: Option<Vec<RawSet>>,
    constraints: Option<Vec<RawConstraint>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuartic {
    beta: f64,
    gamma: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Polyhedron { a: Vec<Vec<f64>>, b: Vec<f64> },
    Unbounded { dim: usize },
    Nonnegative { dim: usize },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    /// Rows over the joint decision vector.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

fn matrix(rows: &[Vec<f64>], ncols: usize, field: &str, issues: &mut Vec<ConfigIssue>) -> Option<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        issues.push(ConfigIssue {
            field: field.into(),
            message: format!("every row needs {ncols} entries"),
        });
        return None;
    }
    Some(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn issue(issues: &mut Vec<ConfigIssue>, field: &str, message: impl Into<String>) {
    issues.push(ConfigIssue {
        field: field.into(),
        message: message.into(),
    });
}

fn build_game(raw: RawGame, name: &str) -> Result<GameInstance, Vec<ConfigIssue>> {
    let mut issues = Vec::new();
    let n: usize = raw.dims.iter().sum();
    if raw.dims.is_empty() || raw.dims.contains(&0) {
        issue(&mut issues, "dims", "needs at least one agent, all dimensions positive");
    }
    if raw.hessian.len() != n {
        issue(&mut issues, "hessian", format!("needs {n} rows"));
    }
    let h = matrix(&raw.hessian, n, "hessian", &mut issues);
    if raw.linear.len() != n {
        issue(&mut issues, "linear", format!("needs {n} entries"));
    }
    for (field, v) in [("reference", &raw.reference)] {
        if v.as_ref().is_some_and(|v| v.len() != n) {
            issue(&mut issues, field, format!("needs {n} entries"));
        }
    }
    let mut sets = Vec::new();
    let mut constraints: Vec<Arc<dyn ConstraintFunction>> = Vec::new();
    match (&raw.sets, &raw.constraints) {
        (Some(_), Some(_)) => issue(&mut issues, "sets", "give either per-agent sets or constraints, not both"),
        (None, None) => issue(&mut issues, "sets", "give per-agent sets or constraints"),
        (Some(list), None) => {
            if list.len() != raw.dims.len() {
                issue(&mut issues, "sets", format!("needs one set per agent ({})", raw.dims.len()));
            }
            for (i, (s, &d)) in list.iter().zip(&raw.dims).enumerate() {
                let field = format!("sets[{i}]");
                let built = match s {
                    RawSet::Box { lower, upper } if lower.len() == d && upper.len() == d => FeasibleSet::boxed(
                        DVector::from_column_slice(lower),
                        DVector::from_column_slice(upper),
                    )
                    .map_err(|e| e.to_string()),
                    RawSet::Box { .. } => Err(format!("bounds need {d} entries")),
                    RawSet::Polyhedron { a, b } => match matrix(a, d, &field, &mut issues) {
                        Some(m) if b.len() == m.nrows() => {
                            FeasibleSet::polyhedron(m, DVector::from_column_slice(b)).map_err(|e| e.to_string())
                        }
                        Some(_) => Err("b needs one entry per row of a".into()),
                        None => continue,
                    },
                    RawSet::Unbounded { dim } if *dim == d => Ok(FeasibleSet::unbounded(d)),
                    RawSet::Nonnegative { dim } if *dim == d => Ok(FeasibleSet::nonnegative(d)),
                    RawSet::Unbounded { .. } | RawSet::Nonnegative { .. } => Err(format!("dim must be {d}")),
                };
                match built {
                    Ok(s) => sets.push(s),
                    Err(m) => issue(&mut issues, &field, m),
                }
            }
        }
        (None, Some(list)) => {
            if list.len() != raw.dims.len() {
                issue(&mut issues, "constraints", format!("needs one entry per agent ({})", raw.dims.len()));
            }
            for (i, c) in list.iter().enumerate() {
                let field = format!("constraints[{i}]");
                let Some(m) = matrix(&c.a, n, &field, &mut issues) else { continue };
                if c.b.len() != m.nrows() {
                    issue(&mut issues, &field, "b needs one entry per row of a");
                    continue;
                }
                match QuadraticConstraints::linear(m, DVector::from_column_slice(&c.b)) {
                    Ok(g) => constraints.push(Arc::new(g)),
                    Err(e) => issue(&mut issues, &field, e.to_string()),
                }
            }
        }
    }
    if !issues.is_empty() {
        return Err(issues);
    }
    let h = h.expect("checked above");
    let q = QuadraticGame::from_assembled(raw.dims.clone(), &h, &DVector::from_column_slice(&raw.linear))
        .map_err(|e| vec![ConfigIssue { field: "hessian".into(), message: e.to_string() }])?;
    let costs: Arc<dyn CostOracle> = match raw.quartic {
        Some(RawQuartic { beta, gamma }) => Arc::new(
            QuarticGame::new(q, beta, gamma)
                .map_err(|e| vec![ConfigIssue { field: "quartic".into(), message: e.to_string() }])?,
        ),
        None => Arc::new(q),
    };
    let game = if raw.constraints.is_some() {
        GameProblem::with_constraints(costs, constraints)
    } else {
        GameProblem::with_agent_sets(costs, sets)
    }
    .map_err(|e| vec![ConfigIssue { field: "sets".into(), message: e.to_string() }])?;
    Ok(GameInstance {
        name: name.to_string(),
        game,
        a_star: raw.reference.map(|v| DVector::from_vec(v)),
        lambda_star: raw.reference_multipliers.map(DVector::from_vec),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    mode: Option<String>,
    horizon: usize,
    t_end: usize,
    e0: Option<f64>,
    k_budget: Option<usize>,
    x0: Vec<f64>,
    input_budget: Option<f64>,
    agents: Vec<RawAgent>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
    u_lower: Option<Vec<f64>>,
    u_upper: Option<Vec<f64>>,
}

fn square(rows: &[Vec<f64>], field: &str, issues: &mut Vec<ConfigIssue>) -> Option<DMatrix<f64>> {
    matrix(rows, rows.len(), field, issues)
}

fn build_scenario(raw: RawScenario) -> Result<MpcScenario, Vec<ConfigIssue>> {
    let mut issues = Vec::new();
    let mode = match raw.mode.as_deref() {
        None | Some("ne") => MpcMode::Ne,
        Some("gne") => MpcMode::Gne,
        Some(other) => {
            issue(&mut issues, "mode", format!("expected \"ne\" or \"gne\", got {other:?}"));
            MpcMode::Ne
        }
    };
    let mut agents = Vec::new();
    for (i, ag) in raw.agents.iter().enumerate() {
        let f = |s: &str| format!("agents[{i}].{s}");
        let a = square(&ag.a, &f("a"), &mut issues);
        let nu = ag.b.first().map_or(0, |r| r.len());
        let b = matrix(&ag.b, nu, &f("b"), &mut issues);
        let q = square(&ag.q, &f("q"), &mut issues);
        let r = square(&ag.r, &f("r"), &mut issues);
        let p = square(&ag.p, &f("p"), &mut issues);
        let bounds = match (&ag.u_lower, &ag.u_upper) {
            (Some(lo), Some(hi)) => Some((DVector::from_column_slice(lo), DVector::from_column_slice(hi))),
            (None, None) => None,
            _ => {
                issue(&mut issues, &f("u_lower"), "give both input bounds or neither");
                None
            }
        };
        let (Some(a), Some(b), Some(q), Some(r), Some(p)) = (a, b, q, r, p) else { continue };
        match LinearPlant::new(a, b) {
            Ok(plant) => {
                let plant: Arc<dyn Plant> = Arc::new(plant);
                agents.push(MpcAgent {
                    plant,
                    q,
                    r,
                    p,
                    input_bounds: bounds,
                })
            }
            Err(e) => issue(&mut issues, &f("a"), e.to_string()),
        }
    }
    if !issues.is_empty() {
        return Err(issues);
    }
    let s = MpcScenario {
        agents,
        horizon: raw.horizon,
        mode,
        input_budget: raw.input_budget,
        x0: DVector::from_vec(raw.x0),
        k_budget: raw.k_budget.unwrap_or(1),
        t_end: raw.t_end,
        e0: raw.e0.unwrap_or(0.0),
    };
    s.validate()
        .map_err(|e| vec![ConfigIssue { field: "scenario".into(), message: e.to_string() }])?;
    Ok(s)
}
