//! Proximal-gradient minimization of `J1 + kappa g` over the control box.

use log::{debug, info, warn};

use crate::control::Control;
use crate::error::{Error, Result};
use crate::grid::SpaceTimeField;
use crate::objective::{evaluate, evaluate_with_state, eval_total, Evaluation, GradientPair};
use crate::problem::Problem;
use crate::state::solve_state;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Initial step length; `None` means `1 / b3`.
    pub step_init: Option<f64>,
    pub backtrack_factor: f64,
    pub max_outer_iters: usize,
    pub stat_tol: f64,
    pub min_step: f64,
    /// Sufficient-decrease constant of the backtracking test.
    pub armijo: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step_init: None,
            backtrack_factor: 0.5,
            max_outer_iters: 500,
            stat_tol: 1e-8,
            min_step: 1e-12,
            armijo: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.step_init {
            if !(s > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "optimizer.step_init must be > 0, got {s}"
                )));
            }
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidInput(format!(
                "optimizer.backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            )));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidInput("optimizer.max_outer_iters must be > 0".into()));
        }
        for (name, v) in [
            ("stat_tol", self.stat_tol),
            ("min_step", self.min_step),
            ("armijo", self.armijo),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidInput(format!("optimizer.{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn step(&self, problem: &Problem) -> f64 {
        self.step_init.unwrap_or(1.0 / problem.cost.b3)
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateRecord {
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
    /// Step length that produced this iterate (0 for the start point).
    pub step: f64,
    /// Share of exactly-zero cells per component.
    pub zero_fraction: [f64; 2],
    /// Cells outside the box; zero for every iterate the prox produces.
    pub bound_violations: usize,
}

/// Elements of the subdifferential of `g` paired with a control.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierPair {
    pub lam1: SpaceTimeField,
    pub lam2: SpaceTimeField,
}

impl MultiplierPair {
    pub fn component(&self, i: usize) -> &SpaceTimeField {
        if i == 0 {
            &self.lam1
        } else {
            &self.lam2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerStatus {
    Converged,
    BudgetExhausted,
}

#[derive(Debug)]
pub struct OptimizeResult {
    pub status: OptimizerStatus,
    /// Final point with its state, adjoint and gradient.
    pub eval: Evaluation,
    pub multipliers: MultiplierPair,
    pub history: Vec<IterateRecord>,
    pub residual: f64,
}

impl OptimizeResult {
    pub fn control(&self) -> &Control {
        &self.eval.control
    }
}

/// `clamp(soft_threshold(w, threshold), lo, hi)` pointwise. Ties `|w| = threshold`
/// map to zero.
pub fn prox_box_l1(w: &SpaceTimeField, threshold: f64, lo: f64, hi: f64) -> Result<SpaceTimeField> {
    if !(lo < hi) {
        return Err(Error::InvalidInput(format!("prox bounds need lo < hi, got [{lo}, {hi}]")));
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "prox threshold must be >= 0, got {threshold}"
        )));
    }
    Ok(w.map(|v| prox_scalar(v, threshold, lo, hi)))
}

#[inline]
pub(crate) fn prox_scalar(w: f64, t: f64, lo: f64, hi: f64) -> f64 {
    let s = if w.abs() <= t { 0.0 } else { w.signum() * (w.abs() - t) };
    s.clamp(lo, hi)
}

/// `u - tau d` followed by the prox, both components.
fn prox_step(problem: &Problem, u: &Control, grad: &GradientPair, tau: f64) -> Control {
    let b = u.bounds;
    let t = tau * problem.cost.kappa;
    let map = |uc: &SpaceTimeField, dc: &SpaceTimeField, lo: f64, hi: f64| {
        let mut out = uc.axpy(-tau, dc);
        out.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = prox_scalar(*v, t, lo, hi));
        out
    };
    Control {
        u1: map(&u.u1, &grad.d1, b.lo1, b.hi1),
        u2: map(&u.u2, &grad.d2, b.lo2, b.hi2),
        bounds: b,
    }
}

/// `‖u - prox(u - tau d)‖ / tau` in `L²(Q)²`.
pub fn stationarity_residual(problem: &Problem, u: &Control, grad: &GradientPair, tau: f64) -> f64 {
    let next = prox_step(problem, u, grad, tau);
    u.axpy(-1.0, &next).norm(problem) / tau
}

/// Multipliers from the subdifferential cases: `sign(u)` off the zero set,
/// `clamp(-d / kappa)` on it.
pub fn recover_multipliers(problem: &Problem, u: &Control, grad: &GradientPair) -> MultiplierPair {
    let kappa = problem.cost.kappa;
    let pick = |uc: &SpaceTimeField, dc: &SpaceTimeField| {
        let data = uc
            .as_slice()
            .iter()
            .zip(dc.as_slice())
            .map(|(&u, &d)| {
                if u != 0.0 {
                    u.signum()
                } else {
                    (-d / kappa).clamp(-1.0, 1.0)
                }
            })
            .collect();
        SpaceTimeField::from_vec(uc.nodes(), data).expect("same shape as the control")
    };
    MultiplierPair {
        lam1: pick(&u.u1, &grad.d1),
        lam2: pick(&u.u2, &grad.d2),
    }
}

pub(crate) fn zero_fraction(u: &SpaceTimeField) -> f64 {
    let zeros = u.as_slice().iter().filter(|&&v| v == 0.0).count();
    zeros as f64 / u.as_slice().len().max(1) as f64
}

/// Runs proximal gradient from `u_start` (projected onto the box first).
pub fn solve(problem: &Problem, config: &OptimizerConfig, u_start: &Control) -> Result<OptimizeResult> {
    config.validate()?;
    u_start.check_shape(problem)?;
    let kappa = problem.cost.kappa;
    let tau0 = config.step(problem);
    let mut eval = evaluate(problem, &u_start.project())?;
    let mut objective = eval.total(kappa);
    let mut residual = stationarity_residual(problem, &eval.control, &eval.gradient, tau0);
    let mut history = vec![IterateRecord {
        iteration: 0,
        objective,
        residual,
        step: 0.0,
        zero_fraction: [zero_fraction(&eval.control.u1), zero_fraction(&eval.control.u2)],
        bound_violations: eval.control.bound_violations(),
    }];
    let mut tau = tau0;
    let mut status = OptimizerStatus::BudgetExhausted;
    for iter in 1..=config.max_outer_iters {
        if residual <= config.stat_tol {
            status = OptimizerStatus::Converged;
            break;
        }
        let (next, state, value, step) = loop {
            let trial = prox_step(problem, &eval.control, &eval.gradient, tau);
            let diff = trial.axpy(-1.0, &eval.control).norm(problem);
            let outcome = solve_state(problem, &trial, None);
            if let Ok(state) = outcome {
                let value = eval_total(problem, &state, &trial)?;
                let decrease = objective - value;
                // below this the comparison is dominated by rounding
                let noise = 1e-14 * objective.abs().max(1.0);
                let sufficient = decrease >= config.armijo / tau * diff * diff;
                if sufficient || (decrease >= 0.0 && config.armijo / tau * diff * diff <= noise) {
                    break (trial, state, value, tau);
                }
            }
            tau *= config.backtrack_factor;
            if tau < config.min_step {
                return Err(Error::StepCollapse {
                    iteration: iter,
                    step: tau,
                    min_step: config.min_step,
                });
            }
        };
        eval = evaluate_with_state(problem, &next, state)?;
        objective = value;
        residual = stationarity_residual(problem, &eval.control, &eval.gradient, tau0);
        history.push(IterateRecord {
            iteration: iter,
            objective,
            residual,
            step,
            zero_fraction: [zero_fraction(&eval.control.u1), zero_fraction(&eval.control.u2)],
            bound_violations: eval.control.bound_violations(),
        });
        debug!("iter {iter}: J = {objective:.12e}, residual = {residual:.3e}, tau = {step:.3e}");
        // let the step recover after backtracking
        tau = (tau / config.backtrack_factor).min(tau0);
    }
    if status != OptimizerStatus::Converged && residual <= config.stat_tol {
        status = OptimizerStatus::Converged;
    }
    match status {
        OptimizerStatus::Converged => info!(
            "converged in {} iterations, residual {residual:.3e}",
            history.len() - 1
        ),
        OptimizerStatus::BudgetExhausted => warn!(
            "iteration budget exhausted with residual {residual:.3e} > {:.1e}",
            config.stat_tol
        ),
    }
    let multipliers = recover_multipliers(problem, &eval.control, &eval.gradient);
    Ok(OptimizeResult {
        status,
        eval,
        multipliers,
        history,
        residual,
    })
}

/// Pointwise KKT check: multipliers lie in the subdifferential of `g` at `u`.
pub fn multipliers_in_subdifferential(u: &Control, lam: &MultiplierPair) -> bool {
    (0..2).all(|i| {
        u.component(i)
            .as_slice()
            .iter()
            .zip(lam.component(i).as_slice())
            .all(|(&u, &l)| {
                if u > 0.0 {
                    l == 1.0
                } else if u < 0.0 {
                    l == -1.0
                } else {
                    (-1.0..=1.0).contains(&l)
                }
            })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(v: &[f64]) -> SpaceTimeField {
        SpaceTimeField::from_vec(v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn prox_examples() {
        assert_eq!(prox_box_l1(&field(&[0.3]), 0.5, -1.0, 1.0).unwrap().as_slice(), &[0.0]);
        assert_eq!(prox_box_l1(&field(&[1.5]), 0.5, -0.7, 0.7).unwrap().as_slice(), &[0.7]);
        assert_eq!(prox_box_l1(&field(&[-2.0]), 0.5, -1.0, 1.0).unwrap().as_slice(), &[-1.0]);
        // closed threshold
        assert_eq!(prox_box_l1(&field(&[0.5, -0.5]), 0.5, -1.0, 1.0).unwrap().as_slice(), &[0.0, 0.0]);
        assert!(prox_box_l1(&field(&[0.0]), 0.5, 1.0, -1.0).is_err());
        assert!(prox_box_l1(&field(&[0.0]), -0.1, -1.0, 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig {
            backtrack_factor: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn prox_is_nonexpansive(
            a in proptest::collection::vec(-5.0f64..5.0, 16),
            b in proptest::collection::vec(-5.0f64..5.0, 16),
            t in 0.0f64..2.0,
        ) {
            let pa = prox_box_l1(&field(&a), t, -1.5, 0.8).unwrap();
            let pb = prox_box_l1(&field(&b), t, -1.5, 0.8).unwrap();
            let d_out: f64 = pa.as_slice().iter().zip(pb.as_slice()).map(|(x, y)| (x - y).powi(2)).sum();
            let d_in: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
            prop_assert!(d_out.sqrt() <= d_in.sqrt() + 1e-12);
        }

        #[test]
        fn prox_is_feasible_and_sparse(w in proptest::collection::vec(-5.0f64..5.0, 16), t in 0.0f64..2.0) {
            let p = prox_box_l1(&field(&w), t, -1.5, 0.8).unwrap();
            for (&x, &y) in w.iter().zip(p.as_slice()) {
                prop_assert!((-1.5..=0.8).contains(&y));
                if x.abs() <= t {
                    prop_assert_eq!(y, 0.0);
                }
            }
        }
    }
}
