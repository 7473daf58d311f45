//! Linear solves around a frozen state: the generalized linear system with
//! gating flags, the linearized and bilinearized wrappers, and the backward
//! adjoint sweep.
//!
//! All solves reuse the implicit Euler step operator of the state solver, so
//! the adjoint is the exact discrete transpose of the linearized scheme.

use std::fmt;

use crate::control::Control;
use crate::error::{Error, Result};
use crate::grid::{SpaceTimeField, TimeGrid};
use crate::linalg::PreparedSolver;
use crate::problem::Problem;
use crate::scheme::{source_balance, split, step_operator, StepCoefficients};
use crate::state::{Forcing, StateTrajectory};

/// Gates of the generalized system: `lambda1` the frozen couplings,
/// `lambda2` the control sources, `lambda3` the free sources, `lambda4` the
/// initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlagSet {
    pub lambda1: bool,
    pub lambda2: bool,
    pub lambda3: bool,
    pub lambda4: bool,
}

impl FlagSet {
    pub const LINEARIZED: Self = Self {
        lambda1: true,
        lambda2: true,
        lambda3: false,
        lambda4: false,
    };
    pub const BILINEARIZED: Self = Self {
        lambda1: true,
        lambda2: false,
        lambda3: true,
        lambda4: false,
    };

    /// Builds a flag set from 0/1 integers.
    pub fn from_ints(flags: [u8; 4]) -> Result<Self> {
        if flags.iter().any(|&f| f > 1) {
            return Err(Error::InvalidInput(format!(
                "flags must be 0 or 1, got {flags:?}"
            )));
        }
        Ok(Self {
            lambda1: flags[0] == 1,
            lambda2: flags[1] == 1,
            lambda3: flags[2] == 1,
            lambda4: flags[3] == 1,
        })
    }
}

/// Pointwise coefficients of the state trajectory, one entry per time node,
/// together with the factored forward step operators.
pub struct FrozenState {
    pub state: StateTrajectory,
    pub coeff: Vec<StepCoefficients>,
    /// `P'(phi)`.
    pub dp: Vec<Vec<f64>>,
    /// `P''(phi) (sigma + chi (1 - phi) - mu)`.
    pub ddp_m: Vec<Vec<f64>>,
    /// `F'''(phi)`.
    pub f3rd: Vec<Vec<f64>>,
    // step_ops[n] advances node n to n + 1
    step_ops: Vec<PreparedSolver>,
}

impl fmt::Debug for FrozenState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrozenState")
            .field("nodes", &self.state.mu.nodes())
            .field("slices", &self.coeff.len())
            .finish_non_exhaustive()
    }
}

impl FrozenState {
    pub fn new(problem: &Problem, state: StateTrajectory) -> Result<Self> {
        let nt = problem.steps();
        if state.slices() != nt + 1 || state.mu.nodes() != problem.nodes() {
            return Err(Error::ShapeMismatch(
                "frozen trajectory does not match the problem".into(),
            ));
        }
        let m = &problem.model;
        let mut coeff = Vec::with_capacity(nt + 1);
        let mut dp = Vec::with_capacity(nt + 1);
        let mut ddp_m = Vec::with_capacity(nt + 1);
        let mut f3rd = Vec::with_capacity(nt + 1);
        for n in 0..=nt {
            let (mu, phi, sigma) = (state.mu.slice(n), state.phi.slice(n), state.sigma.slice(n));
            coeff.push(crate::state::coefficients_at(problem, mu, phi, sigma));
            dp.push(phi.iter().map(|&r| m.p(r, 1)).collect());
            ddp_m.push(
                (0..mu.len())
                    .map(|k| m.p(phi[k], 2) * source_balance(m.chi, mu[k], phi[k], sigma[k]))
                    .collect(),
            );
            f3rd.push(phi.iter().map(|&r| m.f_third(r).value).collect());
        }
        let mut step_ops = Vec::with_capacity(nt);
        for c in &coeff[1..] {
            let a = step_operator(&problem.grid, m, problem.dt(), c, true).assemble(&problem.grid);
            step_ops.push(PreparedSolver::new(problem.solver.linear, &problem.grid, a)?);
        }
        Ok(Self {
            state,
            coeff,
            dp,
            ddp_m,
            f3rd,
            step_ops,
        })
    }

    pub fn time(&self) -> TimeGrid {
        self.state.time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinRole {
    Generalized,
    Linearized,
    Bilinearized,
}

/// Solution triple of a linear solve; fields are named after the
/// linearized system: `eta` (chemical potential), `xi` (phase), `theta`
/// (nutrient).
#[derive(Debug, Clone, PartialEq)]
pub struct LinTrajectory {
    pub time: TimeGrid,
    pub eta: SpaceTimeField,
    pub xi: SpaceTimeField,
    pub theta: SpaceTimeField,
    pub role: LinRole,
}

impl LinTrajectory {
    pub fn max_abs(&self) -> f64 {
        self.eta.max_abs().max(self.xi.max_abs()).max(self.theta.max_abs())
    }
}

/// Solves the generalized linear system. `h` feeds the control sources
/// (cell slices), `f` the free sources (node slices, slice `n + 1` acting on
/// the step into `t_{n+1}`).
pub fn solve_generalized(
    problem: &Problem,
    frozen: &FrozenState,
    flags: FlagSet,
    h: Option<&Control>,
    f: Option<&Forcing>,
) -> Result<LinTrajectory> {
    let n = problem.nodes();
    let nt = problem.steps();
    let dt = problem.dt();
    if let Some(h) = h {
        h.check_shape(problem)?;
    }
    if let Some(f) = f {
        for g in [&f.f1, &f.f2, &f.f3] {
            if g.nodes() != n || g.slices() != nt + 1 {
                return Err(Error::ShapeMismatch("linear sources must have Nt+1 slices".into()));
            }
        }
    }
    let mut eta = SpaceTimeField::zeros(n, nt + 1);
    let mut xi = SpaceTimeField::zeros(n, nt + 1);
    let mut theta = SpaceTimeField::zeros(n, nt + 1);
    if flags.lambda4 {
        eta.slice_mut(0).copy_from_slice(&problem.init.mu0);
        xi.slice_mut(0).copy_from_slice(&problem.init.phi0);
        theta.slice_mut(0).copy_from_slice(&problem.init.sigma0);
    }
    let m = &problem.model;
    let inv_dt = 1.0 / dt;
    for step in 0..nt {
        let (e0, x0, t0) = (eta.slice(step), xi.slice(step), theta.slice(step));
        let mut rhs = vec![0.0; 3 * n];
        for k in 0..n {
            rhs[3 * k] = (m.alpha * e0[k] + x0[k]) * inv_dt;
            rhs[3 * k + 1] = m.beta * x0[k] * inv_dt;
            rhs[3 * k + 2] = t0[k] * inv_dt;
        }
        if flags.lambda2 {
            if let Some(h) = h {
                let hf = problem.cost.h_field.slice(step);
                let (h1, h2) = (h.u1.slice(step), h.u2.slice(step));
                for k in 0..n {
                    rhs[3 * k] -= hf[k] * h1[k];
                    rhs[3 * k + 2] += h2[k];
                }
            }
        }
        if flags.lambda3 {
            if let Some(f) = f {
                let (a, b, c) = (f.f1.slice(step + 1), f.f2.slice(step + 1), f.f3.slice(step + 1));
                for k in 0..n {
                    rhs[3 * k] += a[k];
                    rhs[3 * k + 1] += b[k];
                    rhs[3 * k + 2] += c[k];
                }
            }
        }
        let z = if flags.lambda1 {
            frozen.step_ops[step].solve(&rhs)?
        } else {
            let a = step_operator(&problem.grid, m, dt, &frozen.coeff[step + 1], false)
                .assemble(&problem.grid);
            crate::linalg::solve(problem.solver.linear, &problem.grid, &a, &rhs)?
        };
        split(
            &z,
            eta.slice_mut(step + 1),
            xi.slice_mut(step + 1),
            theta.slice_mut(step + 1),
        );
    }
    Ok(LinTrajectory {
        time: problem.time,
        eta,
        xi,
        theta,
        role: LinRole::Generalized,
    })
}

/// `S'(u*)[h]`.
pub fn solve_linearized(problem: &Problem, frozen: &FrozenState, h: &Control) -> Result<LinTrajectory> {
    let mut out = solve_generalized(problem, frozen, FlagSet::LINEARIZED, Some(h), None)?;
    out.role = LinRole::Linearized;
    Ok(out)
}

/// Sources `(f1, f2, -f1)` of the bilinearized system built from two
/// linearized solutions.
pub fn bilinear_sources(
    problem: &Problem,
    frozen: &FrozenState,
    lh: &LinTrajectory,
    lk: &LinTrajectory,
) -> Forcing {
    let n = problem.nodes();
    let slices = problem.steps() + 1;
    let chi = problem.model.chi;
    let mut f = Forcing::zeros(n, slices);
    for s in 0..slices {
        let (eh, xh, th) = (lh.eta.slice(s), lh.xi.slice(s), lh.theta.slice(s));
        let (ek, xk, tk) = (lk.eta.slice(s), lk.xi.slice(s), lk.theta.slice(s));
        let (dp, ddp_m, f3) = (&frozen.dp[s], &frozen.ddp_m[s], &frozen.f3rd[s]);
        for k in 0..n {
            let mixed = xk[k] * (th[k] - chi * xh[k] - eh[k]) + xh[k] * (tk[k] - chi * xk[k] - ek[k]);
            let v1 = dp[k] * mixed + ddp_m[k] * xh[k] * xk[k];
            f.f1.slice_mut(s)[k] = v1;
            f.f2.slice_mut(s)[k] = -f3[k] * xh[k] * xk[k];
            f.f3.slice_mut(s)[k] = -v1;
        }
    }
    f
}

/// `S''(u*)[h, k]`, returned as `(nu, psi, rho)` in the `eta, xi, theta` slots.
pub fn solve_bilinearized(
    problem: &Problem,
    frozen: &FrozenState,
    h: &Control,
    k: &Control,
) -> Result<LinTrajectory> {
    let lh = solve_linearized(problem, frozen, h)?;
    let lk = solve_linearized(problem, frozen, k)?;
    solve_bilinearized_from(problem, frozen, &lh, &lk)
}

pub fn solve_bilinearized_from(
    problem: &Problem,
    frozen: &FrozenState,
    lh: &LinTrajectory,
    lk: &LinTrajectory,
) -> Result<LinTrajectory> {
    let f = bilinear_sources(problem, frozen, lh, lk);
    let mut out = solve_generalized(problem, frozen, FlagSet::BILINEARIZED, None, Some(&f))?;
    out.role = LinRole::Bilinearized;
    Ok(out)
}

/// Adjoint triple `(p, q, r)`. Slice `n < Nt` is the multiplier of the step
/// into `t_{n+1}` and pairs with cell `n` of the controls; slice `Nt` holds the
/// terminal data `p = 0`, `q = b2 (phi(T) - target) / beta`, `r = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub time: TimeGrid,
    pub p: SpaceTimeField,
    pub q: SpaceTimeField,
    pub r: SpaceTimeField,
}

impl AdjointTrajectory {
    pub fn max_abs(&self) -> f64 {
        self.p.max_abs().max(self.q.max_abs()).max(self.r.max_abs())
    }
}

/// Backward sweep of the discrete adjoint system.
pub fn solve_adjoint(problem: &Problem, frozen: &FrozenState) -> Result<AdjointTrajectory> {
    let n = problem.nodes();
    let nt = problem.steps();
    let dt = problem.dt();
    let inv_dt = 1.0 / dt;
    let m = &problem.model;
    let c = &problem.cost;
    let state = &frozen.state;
    let mut p = SpaceTimeField::zeros(n, nt + 1);
    let mut q = SpaceTimeField::zeros(n, nt + 1);
    let mut r = SpaceTimeField::zeros(n, nt + 1);
    {
        let phi_t = state.phi.slice(nt);
        let qt = q.slice_mut(nt);
        for k in 0..n {
            qt[k] = c.b2 * (phi_t[k] - c.target_omega[k]) / m.beta;
        }
    }
    for node in (1..=nt).rev() {
        let weight = if node == nt { 0.5 } else { 1.0 };
        let (pn, qn, rn) = (p.slice(node), q.slice(node), r.slice(node));
        let (phi, target) = (state.phi.slice(node), c.target_q.slice(node));
        let mut rhs = vec![0.0; 3 * n];
        for k in 0..n {
            // M^T (p, q, r) = (alpha p, p + beta q, r)
            rhs[3 * k] = m.alpha * pn[k] * inv_dt;
            rhs[3 * k + 1] = (pn[k] + m.beta * qn[k]) * inv_dt + weight * c.b1 * (phi[k] - target[k]);
            rhs[3 * k + 2] = rn[k] * inv_dt;
        }
        let a = step_operator(&problem.grid, m, dt, &frozen.coeff[node], true)
            .transpose()
            .assemble(&problem.grid);
        let z = crate::linalg::solve(problem.solver.linear, &problem.grid, &a, &rhs)?;
        split(
            &z,
            p.slice_mut(node - 1),
            q.slice_mut(node - 1),
            r.slice_mut(node - 1),
        );
    }
    Ok(AdjointTrajectory {
        time: problem.time,
        p,
        q,
        r,
    })
}
