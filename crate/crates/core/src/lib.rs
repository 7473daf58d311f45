//! Discretized sparse optimal control of a viscous Cahn–Hilliard tumor growth
//! model with logarithmic potential: state, sensitivity and adjoint solves,
//! a proximal-gradient optimizer, and first/second-order optimality checks.

pub mod control;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod optimality;
pub mod optimizer;
pub mod problem;
pub mod runner;
pub mod sampling;
pub mod scheme;
pub mod sensitivity;
pub mod state;

pub use control::Control;
pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarField, SpaceTimeField, TimeGrid};
pub use model::{Bounds, CostParams, ModelParams, Proliferation};
pub use problem::{GuessMode, InitialData, Problem, SolverOptions};
pub use state::{solve_state, Forcing, StateTrajectory};
