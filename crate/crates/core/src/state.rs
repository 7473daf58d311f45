//! Nonlinear forward solve of the state system by implicit Euler with a
//! monolithic three-field Newton iteration.

use log::debug;

use crate::control::Control;
use crate::error::{Error, Result};
use crate::grid::{inner_l2_q, SpaceTimeField, TimeGrid};
use crate::linalg;
use crate::problem::{GuessMode, InitialData, Problem};
use crate::scheme::{interleave, source_balance, split, step_operator, StepCoefficients};

/// Additive sources `(f1, f2, f3)` on the three equations, one slice per time node.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub f1: SpaceTimeField,
    pub f2: SpaceTimeField,
    pub f3: SpaceTimeField,
}

impl Forcing {
    pub fn zeros(nodes: usize, slices: usize) -> Self {
        Self {
            f1: SpaceTimeField::zeros(nodes, slices),
            f2: SpaceTimeField::zeros(nodes, slices),
            f3: SpaceTimeField::zeros(nodes, slices),
        }
    }

    fn check(&self, problem: &Problem) -> Result<()> {
        for f in [&self.f1, &self.f2, &self.f3] {
            if f.nodes() != problem.nodes() || f.slices() != problem.steps() + 1 {
                return Err(Error::ShapeMismatch(format!(
                    "forcing must have {} node slices of {} nodes",
                    problem.steps() + 1,
                    problem.nodes()
                )));
            }
        }
        Ok(())
    }
}

/// Time series of `(mu, phi, sigma)`, index 0 holding the initial data.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub time: TimeGrid,
    pub mu: SpaceTimeField,
    pub phi: SpaceTimeField,
    pub sigma: SpaceTimeField,
    /// Safeguard activations of `F1'` during the solve.
    pub clamp_count: usize,
    /// Newton iterations per step.
    pub newton_iterations: Vec<usize>,
    /// Largest accepted step residual.
    pub max_residual: f64,
}

impl StateTrajectory {
    pub fn slices(&self) -> usize {
        self.time.steps() + 1
    }
}

/// Extrema of `phi` over the space-time grid and the safeguard count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationReport {
    pub phi_min: f64,
    pub phi_max: f64,
    pub clamp_count: usize,
}

impl SeparationReport {
    pub fn strictly_interior(&self) -> bool {
        self.phi_min > -1.0 && self.phi_max < 1.0 && self.clamp_count == 0
    }
}

pub fn check_separation(traj: &StateTrajectory) -> SeparationReport {
    let (phi_min, phi_max) = traj
        .phi
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    SeparationReport {
        phi_min,
        phi_max,
        clamp_count: traj.clamp_count,
    }
}

struct StepData<'a> {
    mu_old: &'a [f64],
    phi_old: &'a [f64],
    sigma_old: &'a [f64],
    /// `h * u1` on the current cell.
    hu1: Vec<f64>,
    u2: &'a [f64],
    f: Option<[&'a [f64]; 3]>,
}

/// Solves the state system for `control`, optionally with manufactured sources.
pub fn solve_state(
    problem: &Problem,
    control: &Control,
    forcing: Option<&Forcing>,
) -> Result<StateTrajectory> {
    control.check_shape(problem)?;
    problem.init.validate(problem.nodes())?;
    if let Some(f) = forcing {
        f.check(problem)?;
    }
    let violations = control.bound_violations();
    if violations > 0 {
        debug!("control violates its box bounds at {violations} entries");
    }
    let n = problem.nodes();
    let nt = problem.steps();
    let opts = problem.solver;
    let InitialData { mu0, phi0, sigma0 } = &problem.init;
    let mut mu = SpaceTimeField::zeros(n, nt + 1);
    let mut phi = SpaceTimeField::zeros(n, nt + 1);
    let mut sigma = SpaceTimeField::zeros(n, nt + 1);
    mu.slice_mut(0).copy_from_slice(mu0);
    phi.slice_mut(0).copy_from_slice(phi0);
    sigma.slice_mut(0).copy_from_slice(sigma0);

    let mut clamps = 0usize;
    let mut iters = Vec::with_capacity(nt);
    let mut max_residual = 0.0f64;
    for step in 0..nt {
        let hu1: Vec<f64> = problem
            .cost
            .h_field
            .slice(step)
            .iter()
            .zip(control.u1.slice(step))
            .map(|(h, u)| h * u)
            .collect();
        let data = StepData {
            mu_old: mu.slice(step),
            phi_old: phi.slice(step),
            sigma_old: sigma.slice(step),
            hu1,
            u2: control.u2.slice(step),
            f: forcing.map(|f| [f.f1.slice(step + 1), f.f2.slice(step + 1), f.f3.slice(step + 1)]),
        };
        let mut guess = interleave(data.mu_old, data.phi_old, data.sigma_old);
        if opts.guess == GuessMode::Extrapolated && step > 0 {
            let prev = interleave(mu.slice(step - 1), phi.slice(step - 1), sigma.slice(step - 1));
            let extrapolated: Vec<f64> =
                guess.iter().zip(&prev).map(|(a, b)| 2.0 * a - b).collect();
            if (0..n).all(|k| extrapolated[3 * k + 1].abs() < 1.0) {
                guess = extrapolated;
            }
        }
        let outcome = newton_step(problem, &data, guess, step, &mut clamps)?;
        if clamps > opts.clamp_budget {
            return Err(Error::SeparationBreach {
                clamps,
                budget: opts.clamp_budget,
            });
        }
        iters.push(outcome.iterations);
        max_residual = max_residual.max(outcome.residual);
        split(
            &outcome.z,
            mu.slice_mut(step + 1),
            phi.slice_mut(step + 1),
            sigma.slice_mut(step + 1),
        );
    }
    debug!(
        "state solve: {} steps, {} Newton iterations, {} clamps",
        nt,
        iters.iter().sum::<usize>(),
        clamps
    );
    Ok(StateTrajectory {
        time: problem.time,
        mu,
        phi,
        sigma,
        clamp_count: clamps,
        newton_iterations: iters,
        max_residual,
    })
}

struct NewtonOutcome {
    z: Vec<f64>,
    iterations: usize,
    residual: f64,
}

/// dt-scaled residual of one implicit Euler step; returns its max-norm.
fn step_residual(
    problem: &Problem,
    data: &StepData<'_>,
    z: &[f64],
    out: &mut [f64],
    clamps: &mut usize,
) -> f64 {
    let grid = &problem.grid;
    let m = &problem.model;
    let dt = problem.dt();
    let n = grid.len();
    let mut mu = vec![0.0; n];
    let mut phi = vec![0.0; n];
    let mut sigma = vec![0.0; n];
    split(z, &mut mu, &mut phi, &mut sigma);
    let mut lmu = vec![0.0; n];
    let mut lphi = vec![0.0; n];
    let mut lsig = vec![0.0; n];
    grid.apply_laplacian(&mu, &mut lmu);
    grid.apply_laplacian(&phi, &mut lphi);
    grid.apply_laplacian(&sigma, &mut lsig);
    let mut norm = 0.0f64;
    for k in 0..n {
        let p = m.p(phi[k], 0);
        let reaction = p * source_balance(m.chi, mu[k], phi[k], sigma[k]);
        let fp = m.f_prime(phi[k]);
        if fp.clamped {
            *clamps += 1;
        }
        let (f1, f2, f3) = match data.f {
            Some([a, b, c]) => (a[k], b[k], c[k]),
            None => (0.0, 0.0, 0.0),
        };
        let r1 = m.alpha * (mu[k] - data.mu_old[k]) + (phi[k] - data.phi_old[k])
            - dt * (lmu[k] + reaction - data.hu1[k] + f1);
        let r2 = m.beta * (phi[k] - data.phi_old[k])
            - dt * (lphi[k] - fp.value + mu[k] + m.chi * sigma[k] + f2);
        let r3 = (sigma[k] - data.sigma_old[k])
            - dt * (lsig[k] - m.chi * lphi[k] - reaction + data.u2[k] + f3);
        out[3 * k] = r1;
        out[3 * k + 1] = r2;
        out[3 * k + 2] = r3;
        norm = norm.max(r1.abs()).max(r2.abs()).max(r3.abs());
    }
    if norm.is_nan() {
        f64::INFINITY
    } else {
        norm
    }
}

/// Pointwise linearization coefficients at a state.
pub(crate) fn coefficients_at(
    problem: &Problem,
    mu: &[f64],
    phi: &[f64],
    sigma: &[f64],
) -> StepCoefficients {
    let m = &problem.model;
    let n = mu.len();
    let mut c = StepCoefficients {
        p: Vec::with_capacity(n),
        dp_m: Vec::with_capacity(n),
        f2nd: Vec::with_capacity(n),
    };
    for k in 0..n {
        c.p.push(m.p(phi[k], 0));
        c.dp_m
            .push(m.p(phi[k], 1) * source_balance(m.chi, mu[k], phi[k], sigma[k]));
        c.f2nd.push(m.f_second(phi[k]).value);
    }
    c
}

fn newton_step(
    problem: &Problem,
    data: &StepData<'_>,
    mut z: Vec<f64>,
    step: usize,
    clamps: &mut usize,
) -> Result<NewtonOutcome> {
    let opts = problem.solver;
    let n = problem.nodes();
    let dt = problem.dt();
    let mut res = vec![0.0; 3 * n];
    let mut trial_res = vec![0.0; 3 * n];
    let mut norm = step_residual(problem, data, &z, &mut res, clamps);
    let mut it = 0;
    while norm > opts.newton_tol {
        if it >= opts.max_newton_iters {
            return Err(Error::NewtonDivergence {
                step,
                residual: norm,
                iterations: it,
            });
        }
        let mut mu = vec![0.0; n];
        let mut phi = vec![0.0; n];
        let mut sigma = vec![0.0; n];
        split(&z, &mut mu, &mut phi, &mut sigma);
        let coeff = coefficients_at(problem, &mu, &phi, &sigma);
        let jac = step_operator(&problem.grid, &problem.model, dt, &coeff, true)
            .assemble(&problem.grid);
        // the residual is dt-scaled, the operator is not
        let rhs: Vec<f64> = res.iter().map(|r| -r / dt).collect();
        let dz = linalg::solve(opts.linear, &problem.grid, &jac, &rhs)?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = z.iter().zip(&dz).map(|(a, d)| a + lambda * d).collect();
            if (0..n).all(|k| trial[3 * k + 1].abs() < 1.0) {
                let t_norm = step_residual(problem, data, &trial, &mut trial_res, clamps);
                if t_norm < norm {
                    accepted = Some((trial, t_norm));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let (trial, t_norm) = match accepted {
            Some(a) => a,
            None => {
                return Err(Error::NewtonDivergence {
                    step,
                    residual: norm,
                    iterations: it + 1,
                })
            }
        };
        z = trial;
        norm = t_norm;
        std::mem::swap(&mut res, &mut trial_res);
        it += 1;
    }
    Ok(NewtonOutcome {
        z,
        iterations: it,
        residual: norm,
    })
}

/// Sum of the discrete `L²(Q)` norms of the three state differences.
pub fn state_distance(problem: &Problem, a: &StateTrajectory, b: &StateTrajectory) -> f64 {
    [(&a.mu, &b.mu), (&a.phi, &b.phi), (&a.sigma, &b.sigma)]
        .iter()
        .map(|(x, y)| {
            let d = x.axpy(-1.0, y);
            inner_l2_q(&problem.grid, &d, &d, problem.dt())
                .expect("trajectories share the problem's shape")
                .max(0.0)
                .sqrt()
        })
        .sum()
}

/// `‖S(uA) - S(uB)‖ / ‖uA - uB‖`, a Lipschitz-constant probe.
pub fn stability_ratio(problem: &Problem, ua: &Control, ub: &Control) -> Result<f64> {
    let du = ua.axpy(-1.0, ub).norm(problem);
    if !(du > 0.0) {
        return Err(Error::InvalidInput(
            "stability ratio needs two distinct controls".into(),
        ));
    }
    let sa = solve_state(problem, ua, None)?;
    let sb = solve_state(problem, ub, None)?;
    Ok(state_distance(problem, &sa, &sb) / du)
}
