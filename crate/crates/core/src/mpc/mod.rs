//! Receding-horizon games and time-distributed closed loops.

mod build;
mod closed_loop;
mod contraction;
mod scenario;

pub use build::{build_parameterized_game, rollout_cost, HorizonCosts, ParameterizedGame};
pub use closed_loop::{
    horizon_residual, plant_step, reference_closed_loop, reference_solution, run_closed_loop, tdo_step,
    ClosedLoopLog, MpcSolverConfig, ReferenceConfig, ReferenceSolve, TdoOutcome, TdoSolver, CLOSED_LOOP_CSV_HEADER,
};
pub use contraction::{
    estimate_contraction, BudgetLogs, ContractionFit, ContractionRow, ContractionSamples, ContractionTable, CONTRACTION_CSV_HEADER,
    CONTRACTION_FLOOR, MIN_CONTRACTION_POINTS,
};
pub use scenario::{pursuit_scenario, LinearPlant, MpcAgent, MpcMode, MpcScenario, Plant, PursuitSpec};
