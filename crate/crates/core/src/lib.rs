//! Newton-type solvers for Nash (NE) and generalized Nash (GNE) equilibrium problems.
//!
//! The crate is organised bottom-up:
//!
//! * [`game`] defines games through per-agent cost oracles, evaluates the
//!   pseudogradient and game Hessian, and checks the matrix/cone conditions
//!   (strict semicopositivity on the critical cone, monotonicity) under which
//!   the Newton iterations are locally well behaved.
//! * [`vi`] solves the affine variational inequalities produced by each outer
//!   Newton step, plus brute-force oracles used to cross-check it.
//! * [`newton`] implements the Josephy-Newton iteration for NE problems:
//!   centralized, perturbed, and the two agent-distributed mechanisms, along
//!   with empirical convergence-rate and input-to-state-stability estimators.
//! * [`kkt`] handles GNE problems through the concatenated KKT system, the
//!   `min` complementarity reformulation and semismooth Newton.
//! * [`mpc`] builds state-parameterized games from multi-agent linear MPC
//!   scenarios and runs the time-distributed closed loop with a fixed
//!   per-step iteration budget.
//!
//! All dense linear algebra uses [`nalgebra`]; randomness always flows from
//! explicit seeds.

pub mod error;
pub mod fit;
pub mod game;
pub mod kkt;
pub mod linalg;
pub mod mpc;
pub mod newton;
pub mod vi;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
