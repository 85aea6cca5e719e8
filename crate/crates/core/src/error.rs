use nalgebra::DVector;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing oracle: {0}")]
    MissingOracle(String),

    #[error("point is infeasible beyond tolerance: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("inner affine VI solve failed at outer iteration {iteration}{}", agent_suffix(*.agent))]
    InnerSolveFailed {
        iteration: usize,
        agent: Option<usize>,
    },

    #[error("iteration diverged at {iteration}: residual {residual:e}")]
    Diverged { iteration: usize, residual: f64 },

    #[error("singular Jacobian at iteration {iteration}{}", agent_suffix(*.agent))]
    SingularJacobian {
        iteration: usize,
        agent: Option<usize>,
    },

    #[error("own Hessian block of agent {agent} is singular (smallest singular value {sigma:e})")]
    SingularBlock { agent: usize, sigma: f64 },

    #[error("best-response outer loop revisited an earlier iterate at round {round}")]
    OuterCycleDetected { round: usize },

    #[error("too few usable points: need {needed}, have {have}")]
    TooFewPoints { needed: usize, have: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("active-set enumeration found no solution")]
    NoSolution,

    #[error("active-set enumeration found {} distinct solutions", .0.len())]
    MultipleSolutions(Vec<DVector<f64>>),

    #[error("agent constraints are not common: max deviation {max_deviation:e}")]
    ConstraintsNotCommon { max_deviation: f64 },

    #[error("reference solve did not converge: residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },

    #[error("solution is not isolated: {} distinct restart solutions", .witnesses.len())]
    NonIsolated { witnesses: Vec<DVector<f64>> },

    #[error("plant state became non-finite at t = {t}")]
    NonFiniteState { t: usize },

    #[error("at step {step}: {source}")]
    AtStep { step: usize, source: Box<Error> },
}

fn agent_suffix(agent: Option<usize>) -> String {
    match agent {
        Some(i) => format!(" (agent {i})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
