use thiserror::Error;

/// Errors raised by the solvers, the optimizer and the runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("Newton iteration failed at time step {step}: residual {residual:.3e} after {iterations} iterations")]
    NewtonDivergence {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("separation breach: {clamps} safeguard clamps exceed the budget of {budget}")]
    SeparationBreach { clamps: usize, budget: usize },

    #[error("linear solver breakdown: {0}")]
    LinearSolver(String),

    #[error("step length collapsed to {step:.3e} (< {min_step:.3e}) at iteration {iteration}")]
    StepCollapse {
        iteration: usize,
        step: f64,
        min_step: f64,
    },

    #[error("critical cone is {{0}}: every cell is forced to zero")]
    ConeDegenerate,

    #[error("config error: {0}")]
    Config(String),

    #[error("field file error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
