//! Distributed controls `u = (u1, u2)`, piecewise constant on the space-time cells.

use crate::error::{Error, Result};
use crate::grid::SpaceTimeField;
use crate::model::Bounds;
use crate::problem::Problem;

/// A control pair. Slice `n` of each component acts on the time cell `(t_n, t_{n+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub u1: SpaceTimeField,
    pub u2: SpaceTimeField,
    pub bounds: Bounds,
}

impl Control {
    pub fn zeros(problem: &Problem) -> Self {
        Self {
            u1: SpaceTimeField::zeros(problem.nodes(), problem.steps()),
            u2: SpaceTimeField::zeros(problem.nodes(), problem.steps()),
            bounds: problem.bounds(),
        }
    }

    pub fn new(u1: SpaceTimeField, u2: SpaceTimeField, bounds: Bounds) -> Result<Self> {
        if !u1.same_shape(&u2) {
            return Err(Error::ShapeMismatch("control components differ in shape".into()));
        }
        if u1.as_slice().iter().chain(u2.as_slice()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("control has non-finite entries".into()));
        }
        Ok(Self { u1, u2, bounds })
    }

    pub fn check_shape(&self, problem: &Problem) -> Result<()> {
        for u in [&self.u1, &self.u2] {
            if u.nodes() != problem.nodes() || u.slices() != problem.steps() {
                return Err(Error::ShapeMismatch(format!(
                    "control must have {} cell slices of {} nodes, got {}x{}",
                    problem.steps(),
                    problem.nodes(),
                    u.slices(),
                    u.nodes()
                )));
            }
        }
        Ok(())
    }

    pub fn component(&self, i: usize) -> &SpaceTimeField {
        if i == 0 {
            &self.u1
        } else {
            &self.u2
        }
    }

    pub fn component_mut(&mut self, i: usize) -> &mut SpaceTimeField {
        if i == 0 {
            &mut self.u1
        } else {
            &mut self.u2
        }
    }

    /// Number of entries violating the box.
    pub fn bound_violations(&self) -> usize {
        (0..2)
            .map(|i| {
                let (lo, hi) = self.bounds.component(i);
                self.component(i)
                    .as_slice()
                    .iter()
                    .filter(|&&v| v < lo || v > hi)
                    .count()
            })
            .sum()
    }

    pub fn is_feasible(&self) -> bool {
        self.bound_violations() == 0
    }

    /// Pointwise projection onto the box.
    pub fn project(&self) -> Self {
        let b = self.bounds;
        Self {
            u1: self.u1.map(|v| v.clamp(b.lo1, b.hi1)),
            u2: self.u2.map(|v| v.clamp(b.lo2, b.hi2)),
            bounds: b,
        }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        Self {
            u1: self.u1.axpy(c, &other.u1),
            u2: self.u2.axpy(c, &other.u2),
            bounds: self.bounds,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            u1: self.u1.scale(c),
            u2: self.u2.scale(c),
            bounds: self.bounds,
        }
    }

    /// `∬_Q (u1 v1 + u2 v2)`.
    pub fn inner(&self, other: &Self, problem: &Problem) -> f64 {
        problem.cell_inner(&self.u1, &other.u1) + problem.cell_inner(&self.u2, &other.u2)
    }

    /// `L²(Q)²` norm.
    pub fn norm(&self, problem: &Problem) -> f64 {
        self.inner(self, problem).max(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.u1.max_abs().max(self.u2.max_abs())
    }
}
