//! Cost functional, sparsity term, reduced gradient and the second-order
//! quadratic form of the smooth part of the reduced cost.

use crate::control::Control;
use crate::error::{Error, Result};
use crate::grid::{inner_l2_q, SpaceTimeField};
use crate::problem::Problem;
use crate::sensitivity::{
    solve_adjoint, solve_bilinearized_from, solve_linearized, AdjointTrajectory, FrozenState,
    LinTrajectory,
};
use crate::state::{solve_state, StateTrajectory};

/// Cells where `|u| <= U_ZERO_TOL` count as zero in directional derivatives.
pub const U_ZERO_TOL: f64 = 1e-12;

/// Smooth part of the reduced gradient: `d1 = -h p + b3 u1`, `d2 = r + b3 u2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub d1: SpaceTimeField,
    pub d2: SpaceTimeField,
}

impl GradientPair {
    pub fn component(&self, i: usize) -> &SpaceTimeField {
        if i == 0 {
            &self.d1
        } else {
            &self.d2
        }
    }

    /// `∬_Q (d1 h1 + d2 h2)`.
    pub fn pair(&self, h: &Control, problem: &Problem) -> f64 {
        problem.cell_inner(&self.d1, &h.u1) + problem.cell_inner(&self.d2, &h.u2)
    }
}

fn phi_misfit(problem: &Problem, traj: &StateTrajectory) -> SpaceTimeField {
    traj.phi.axpy(-1.0, &problem.cost.target_q)
}

fn terminal_misfit(problem: &Problem, traj: &StateTrajectory) -> Vec<f64> {
    let n = problem.steps();
    traj.phi
        .slice(n)
        .iter()
        .zip(&problem.cost.target_omega)
        .map(|(a, b)| a - b)
        .collect()
}

/// Tracking part `J1` of the cost.
pub fn eval_tracking(problem: &Problem, traj: &StateTrajectory, control: &Control) -> Result<f64> {
    control.check_shape(problem)?;
    let c = &problem.cost;
    let e = phi_misfit(problem, traj);
    let eq = inner_l2_q(&problem.grid, &e, &e, problem.dt())?;
    let et = terminal_misfit(problem, traj);
    let eo = problem.grid.inner(&et, &et);
    let uu = control.inner(control, problem);
    Ok(0.5 * c.b1 * eq + 0.5 * c.b2 * eo + 0.5 * c.b3 * uu)
}

/// `g(u) = ∬_Q (|u1| + |u2|)`.
pub fn eval_sparsity(problem: &Problem, control: &Control) -> f64 {
    let dt = problem.dt();
    [&control.u1, &control.u2]
        .iter()
        .map(|u| {
            (0..u.slices())
                .map(|n| {
                    let abs: Vec<f64> = u.slice(n).iter().map(|v| v.abs()).collect();
                    dt * problem.grid.integrate(&abs)
                })
                .sum::<f64>()
        })
        .sum()
}

/// `J1 + kappa g`.
pub fn eval_total(problem: &Problem, traj: &StateTrajectory, control: &Control) -> Result<f64> {
    Ok(eval_tracking(problem, traj, control)? + problem.cost.kappa * eval_sparsity(problem, control))
}

pub fn smooth_gradient(
    problem: &Problem,
    adj: &AdjointTrajectory,
    control: &Control,
) -> Result<GradientPair> {
    control.check_shape(problem)?;
    if adj.p.slices() != problem.steps() + 1 || adj.p.nodes() != problem.nodes() {
        return Err(Error::ShapeMismatch("adjoint does not match the problem".into()));
    }
    let b3 = problem.cost.b3;
    let h = &problem.cost.h_field;
    let d1 = SpaceTimeField::from_fn(problem.nodes(), problem.steps(), |n, k| {
        -h.slice(n)[k] * adj.p.slice(n)[k] + b3 * control.u1.slice(n)[k]
    });
    let d2 = SpaceTimeField::from_fn(problem.nodes(), problem.steps(), |n, k| {
        adj.r.slice(n)[k] + b3 * control.u2.slice(n)[k]
    });
    Ok(GradientPair { d1, d2 })
}

/// `J1'(u)[h]` evaluated through the linearized system.
pub fn gateaux_j1(
    problem: &Problem,
    frozen: &FrozenState,
    control: &Control,
    h: &Control,
) -> Result<f64> {
    let lin = solve_linearized(problem, frozen, h)?;
    gateaux_from(problem, &frozen.state, control, h, &lin)
}

fn gateaux_from(
    problem: &Problem,
    traj: &StateTrajectory,
    control: &Control,
    h: &Control,
    lin: &LinTrajectory,
) -> Result<f64> {
    let c = &problem.cost;
    let e = phi_misfit(problem, traj);
    let tq = inner_l2_q(&problem.grid, &lin.xi, &e, problem.dt())?;
    let to = problem
        .grid
        .inner(lin.xi.slice(problem.steps()), &terminal_misfit(problem, traj));
    Ok(c.b1 * tq + c.b2 * to + c.b3 * control.inner(h, problem))
}

/// Directional derivative `g'(u; v)`.
pub fn g_directional(problem: &Problem, u: &Control, v: &Control) -> f64 {
    let dt = problem.dt();
    let mut total = 0.0;
    for i in 0..2 {
        let (uc, vc) = (u.component(i), v.component(i));
        for n in 0..uc.slices() {
            let vals: Vec<f64> = uc
                .slice(n)
                .iter()
                .zip(vc.slice(n))
                .map(|(&a, &b)| if a.abs() <= U_ZERO_TOL { b.abs() } else { a.signum() * b })
                .collect();
            total += dt * problem.grid.integrate(&vals);
        }
    }
    total
}

fn second_order_terms(problem: &Problem, lh: &LinTrajectory, lk: &LinTrajectory, h: &Control, k: &Control) -> Result<f64> {
    let c = &problem.cost;
    let n = problem.steps();
    let tq = inner_l2_q(&problem.grid, &lh.xi, &lk.xi, problem.dt())?;
    let to = problem.grid.inner(lh.xi.slice(n), lk.xi.slice(n));
    Ok(c.b1 * tq + c.b2 * to + c.b3 * h.inner(k, problem))
}

/// `J1''(u)[h, k]` through the adjoint-weighted formula (two linearized solves).
pub fn hessian_form(
    problem: &Problem,
    frozen: &FrozenState,
    adj: &AdjointTrajectory,
    h: &Control,
    k: &Control,
) -> Result<f64> {
    let lh = solve_linearized(problem, frozen, h)?;
    let lk = if h == k {
        lh.clone()
    } else {
        solve_linearized(problem, frozen, k)?
    };
    hessian_form_from(problem, frozen, adj, &lh, &lk, h, k)
}

/// [`hessian_form`] with precomputed linearized solutions.
pub fn hessian_form_from(
    problem: &Problem,
    frozen: &FrozenState,
    adj: &AdjointTrajectory,
    lh: &LinTrajectory,
    lk: &LinTrajectory,
    h: &Control,
    k: &Control,
) -> Result<f64> {
    Ok(second_order_terms(problem, lh, lk, h, k)? + adjoint_curvature(problem, frozen, adj, lh, lk))
}

/// The state-curvature part of `J1''` in adjoint form: the second-order
/// nonlinearity sources paired with the adjoint.
pub fn adjoint_curvature(
    problem: &Problem,
    frozen: &FrozenState,
    adj: &AdjointTrajectory,
    lh: &LinTrajectory,
    lk: &LinTrajectory,
) -> f64 {
    let chi = problem.model.chi;
    let dt = problem.dt();
    let mut coupling = 0.0;
    for s in 0..problem.steps() {
        // multiplier slice s pairs with the implicit node s + 1
        let node = s + 1;
        let (eh, xh, th) = (lh.eta.slice(node), lh.xi.slice(node), lh.theta.slice(node));
        let (ek, xk, tk) = (lk.eta.slice(node), lk.xi.slice(node), lk.theta.slice(node));
        let (dp, ddp_m, f3) = (&frozen.dp[node], &frozen.ddp_m[node], &frozen.f3rd[node]);
        let (p, q, r) = (adj.p.slice(s), adj.q.slice(s), adj.r.slice(s));
        let vals: Vec<f64> = (0..problem.nodes())
            .map(|j| {
                let mixed = xk[j] * (th[j] - chi * xh[j] - eh[j])
                    + xh[j] * (tk[j] - chi * xk[j] - ek[j]);
                let f1 = dp[j] * mixed + ddp_m[j] * xh[j] * xk[j];
                (p[j] - r[j]) * f1 - f3[j] * xh[j] * xk[j] * q[j]
            })
            .collect();
        coupling += dt * problem.grid.integrate(&vals);
    }
    coupling
}

/// The same curvature part through `S''[h, k]`: the tracking misfits paired
/// with the bilinearized phase field.
pub fn bilinear_curvature(
    problem: &Problem,
    frozen: &FrozenState,
    lh: &LinTrajectory,
    lk: &LinTrajectory,
) -> Result<f64> {
    let bil = solve_bilinearized_from(problem, frozen, lh, lk)?;
    let c = &problem.cost;
    let traj = &frozen.state;
    let tq = inner_l2_q(&problem.grid, &phi_misfit(problem, traj), &bil.xi, problem.dt())?;
    let to = problem
        .grid
        .inner(&terminal_misfit(problem, traj), bil.xi.slice(problem.steps()));
    Ok(c.b1 * tq + c.b2 * to)
}

/// `J1''(u)[h, k]` through the bilinearized state; an independent route to
/// [`hessian_form`].
pub fn hessian_form_bilinear(
    problem: &Problem,
    frozen: &FrozenState,
    h: &Control,
    k: &Control,
) -> Result<f64> {
    let lh = solve_linearized(problem, frozen, h)?;
    let lk = solve_linearized(problem, frozen, k)?;
    Ok(second_order_terms(problem, &lh, &lk, h, k)? + bilinear_curvature(problem, frozen, &lh, &lk)?)
}

/// Everything known at one control: state, frozen coefficients, adjoint,
/// cost values and the smooth gradient.
#[derive(Debug)]
pub struct Evaluation {
    pub control: Control,
    pub frozen: FrozenState,
    pub adjoint: AdjointTrajectory,
    pub tracking: f64,
    pub sparsity: f64,
    pub gradient: GradientPair,
}

impl Evaluation {
    pub fn state(&self) -> &StateTrajectory {
        &self.frozen.state
    }

    pub fn total(&self, kappa: f64) -> f64 {
        self.tracking + kappa * self.sparsity
    }
}

/// Forward solve, adjoint solve and gradient at `control`.
pub fn evaluate(problem: &Problem, control: &Control) -> Result<Evaluation> {
    let state = solve_state(problem, control, None)?;
    evaluate_with_state(problem, control, state)
}

pub fn evaluate_with_state(
    problem: &Problem,
    control: &Control,
    state: StateTrajectory,
) -> Result<Evaluation> {
    let tracking = eval_tracking(problem, &state, control)?;
    let sparsity = eval_sparsity(problem, control);
    let frozen = FrozenState::new(problem, state)?;
    let adjoint = solve_adjoint(problem, &frozen)?;
    let gradient = smooth_gradient(problem, &adjoint, control)?;
    Ok(Evaluation {
        control: control.clone(),
        frozen,
        adjoint,
        tracking,
        sparsity,
        gradient,
    })
}

/// `J1(S(u), u)` by one forward solve.
pub fn reduced_tracking(problem: &Problem, control: &Control) -> Result<f64> {
    let state = solve_state(problem, control, None)?;
    eval_tracking(problem, &state, control)
}

/// `J1(S(u), u) + kappa g(u)` by one forward solve.
pub fn reduced_total(problem: &Problem, control: &Control) -> Result<f64> {
    let state = solve_state(problem, control, None)?;
    eval_total(problem, &state, control)
}
