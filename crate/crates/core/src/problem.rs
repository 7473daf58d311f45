//! The discretized control problem: grid, time partition, constants and initial data.

use crate::error::{Error, Result};
use crate::grid::{inner_cells, GridSpec, SpaceTimeField, TimeGrid};
use crate::linalg::LinearSolverKind;
use crate::model::{Bounds, CostParams, ModelParams};

/// Initial values of `(mu, phi, sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub mu0: Vec<f64>,
    pub phi0: Vec<f64>,
    pub sigma0: Vec<f64>,
}

impl InitialData {
    pub fn zeros(nodes: usize) -> Self {
        Self {
            mu0: vec![0.0; nodes],
            phi0: vec![0.0; nodes],
            sigma0: vec![0.0; nodes],
        }
    }

    pub fn validate(&self, nodes: usize) -> Result<()> {
        for (name, f) in [("mu0", &self.mu0), ("phi0", &self.phi0), ("sigma0", &self.sigma0)] {
            if f.len() != nodes {
                return Err(Error::ShapeMismatch(format!(
                    "init.{name} has {} values, grid has {nodes} nodes",
                    f.len()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("init.{name} has non-finite values")));
            }
        }
        let max_abs = self.phi0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_abs >= 1.0 {
            return Err(Error::InvalidInput(format!(
                "initial phase field must satisfy max|phi0| < 1, got {max_abs}"
            )));
        }
        Ok(())
    }
}

/// Initial guess used by Newton at each time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GuessMode {
    #[default]
    Previous,
    /// Linear extrapolation from the two previous steps.
    Extrapolated,
}

/// Tolerances and budgets of the forward solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Max-norm of the dt-scaled step residual at acceptance.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Safeguard activations tolerated before the solve is abandoned.
    pub clamp_budget: usize,
    pub linear: LinearSolverKind,
    pub guess: GuessMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_newton_iters: 50,
            clamp_budget: 1000,
            linear: LinearSolverKind::Auto,
            guess: GuessMode::Previous,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: GridSpec,
    pub time: TimeGrid,
    pub model: ModelParams,
    pub cost: CostParams,
    pub init: InitialData,
    pub solver: SolverOptions,
}

impl Problem {
    pub fn new(
        grid: GridSpec,
        time: TimeGrid,
        model: ModelParams,
        cost: CostParams,
        init: InitialData,
    ) -> Result<Self> {
        let p = Self {
            grid,
            time,
            model,
            cost,
            init,
            solver: SolverOptions::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.cost.validate()?;
        self.init.validate(self.grid.len())?;
        let nodes = self.grid.len();
        let nt = self.time.steps();
        let c = &self.cost;
        if c.target_q.nodes() != nodes || c.target_q.slices() != nt + 1 {
            return Err(Error::ShapeMismatch(format!(
                "cost.target_q must have {} slices of {nodes} nodes",
                nt + 1
            )));
        }
        if c.target_omega.len() != nodes {
            return Err(Error::ShapeMismatch("cost.target_omega length".into()));
        }
        if c.h_field.nodes() != nodes || c.h_field.slices() != nt {
            return Err(Error::ShapeMismatch(format!(
                "cost.h must have {nt} cell slices of {nodes} nodes"
            )));
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn steps(&self) -> usize {
        self.time.steps()
    }

    pub fn dt(&self) -> f64 {
        self.time.dt()
    }

    pub fn bounds(&self) -> Bounds {
        self.cost.bounds
    }

    /// Exact `∬_Q a b` for cell-wise constant fields.
    pub fn cell_inner(&self, a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
        inner_cells(&self.grid, a, b, self.dt())
    }

    /// Measure of the space-time cylinder, `|Ω| T`.
    pub fn q_measure(&self) -> f64 {
        self.grid.volume() * self.time.t_final()
    }
}
