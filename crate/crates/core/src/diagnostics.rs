//! Numerical verification: derivative checks against finite differences,
//! continuity under vanishing perturbations, and manufactured-solution
//! convergence orders of the forward solver.

use std::f64::consts::PI;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::control::Control;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, SpaceTimeField, TimeGrid};
use crate::model::{Bounds, CostParams, ModelParams};
use crate::objective::{
    adjoint_curvature, bilinear_curvature, evaluate, gateaux_j1, hessian_form, hessian_form_from, reduced_tracking,
};
use crate::problem::{InitialData, Problem};
use crate::sampling::{gaussian_direction, rng, uniform_field};
use crate::sensitivity::{solve_linearized, AdjointTrajectory};
use crate::state::{solve_state, state_distance, Forcing, StateTrajectory};

/// One measured quantity and the bound it must meet.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub label: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Measurement {
    pub fn new(label: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            label: label.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    /// SHA-256 over the check's inputs (seed, control, constants).
    pub digest: String,
    pub measurements: Vec<Measurement>,
    /// Values reported for information only.
    pub details: Vec<(String, f64)>,
    pub pass: bool,
    /// Wall time in seconds; excluded from serialized reports so that they
    /// stay reproducible.
    #[serde(skip)]
    pub runtime: f64,
}

impl CheckReport {
    fn finish(name: &str, digest: String, measurements: Vec<Measurement>, details: Vec<(String, f64)>, start: Instant) -> Self {
        let pass = measurements.iter().all(|m| m.pass);
        Self {
            name: name.into(),
            digest,
            measurements,
            details,
            pass,
            runtime: start.elapsed().as_secs_f64(),
        }
    }

    pub fn measurement(&self, label: &str) -> Option<&Measurement> {
        self.measurements.iter().find(|m| m.label == label)
    }
}

fn digest(name: &str, seed: u64, problem: &Problem, u: Option<&Control>, extra: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    h.update(seed.to_le_bytes());
    h.update(format!("{:?}", problem.model).as_bytes());
    let c = &problem.cost;
    for v in [c.b1, c.b2, c.b3, c.kappa, problem.time.t_final()] {
        h.update(v.to_le_bytes());
    }
    h.update((problem.nodes() as u64).to_le_bytes());
    h.update((problem.steps() as u64).to_le_bytes());
    if let Some(u) = u {
        for v in u.u1.as_slice().iter().chain(u.u2.as_slice()) {
            h.update(v.to_le_bytes());
        }
    }
    for v in extra {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Relative mismatch between `<grad J1, h>` and central differences of
/// `J1 o S` along random unit directions, per `eps`. The pass criterion uses
/// the step closest to `1e-4` in log scale; the adjoint/linearized duality gap
/// is measured at the same directions.
pub fn gradient_check(
    problem: &Problem,
    u: &Control,
    n_dirs: usize,
    eps_list: &[f64],
    tol: f64,
    seed: u64,
) -> Result<CheckReport> {
    let start = Instant::now();
    if n_dirs == 0 || eps_list.is_empty() {
        return Err(Error::InvalidInput("gradient check needs directions and steps".into()));
    }
    let ev = evaluate(problem, u)?;
    let mut rng = rng(seed);
    let mut max_err = vec![0.0f64; eps_list.len()];
    let mut max_dual = 0.0f64;
    for _ in 0..n_dirs {
        let h = gaussian_direction(&mut rng, problem);
        let adj = ev.gradient.pair(&h, problem);
        let gat = gateaux_j1(problem, &ev.frozen, u, &h)?;
        max_dual = max_dual.max((gat - adj).abs() / (1.0 + gat.abs()));
        for (e, &eps) in max_err.iter_mut().zip(eps_list) {
            let jp = reduced_tracking(problem, &u.axpy(eps, &h))?;
            let jm = reduced_tracking(problem, &u.axpy(-eps, &h))?;
            *e = e.max(rel_err((jp - jm) / (2.0 * eps), adj));
        }
    }
    let ref_idx = eps_list
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.log10() + 4.0).abs().total_cmp(&(b.1.log10() + 4.0).abs()))
        .map(|(i, _)| i)
        .expect("nonempty");
    let details = eps_list
        .iter()
        .zip(&max_err)
        .map(|(eps, e)| (format!("fd_rel_error@{eps:e}"), *e))
        .collect();
    let measurements = vec![
        Measurement::new(format!("fd_rel_error@{:e}", eps_list[ref_idx]), max_err[ref_idx], tol),
        Measurement::new("duality_gap", max_dual, 1e-6),
    ];
    let d = digest("gradient", seed, problem, Some(u), eps_list);
    Ok(CheckReport::finish("gradient", d, measurements, details, start))
}

/// Symmetry, cross-route agreement and second-difference agreement of the
/// quadratic form.
pub fn hessian_check(
    problem: &Problem,
    u: &Control,
    n_dirs: usize,
    eps: f64,
    seed: u64,
) -> Result<CheckReport> {
    let start = Instant::now();
    if n_dirs == 0 || !(eps > 0.0) {
        return Err(Error::InvalidInput("hessian check needs directions and eps > 0".into()));
    }
    let ev = evaluate(problem, u)?;
    let j0 = ev.tracking;
    let mut rng = rng(seed);
    let (mut sym, mut cross, mut fd, mut curvature) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n_dirs {
        let h = gaussian_direction(&mut rng, problem);
        let k = gaussian_direction(&mut rng, problem);
        let lh = solve_linearized(problem, &ev.frozen, &h)?;
        let lk = solve_linearized(problem, &ev.frozen, &k)?;
        let qhk = hessian_form_from(problem, &ev.frozen, &ev.adjoint, &lh, &lk, &h, &k)?;
        let qkh = hessian_form_from(problem, &ev.frozen, &ev.adjoint, &lk, &lh, &k, &h)?;
        sym = sym.max((qhk - qkh).abs());
        // the b3 and tracking terms are shared by both routes and usually
        // dominate, so the routes are compared on the curvature part alone
        let via_adjoint = adjoint_curvature(problem, &ev.frozen, &ev.adjoint, &lh, &lk);
        let via_bilinear = bilinear_curvature(problem, &ev.frozen, &lh, &lk)?;
        cross = cross.max(rel_err(via_adjoint, via_bilinear));
        curvature = curvature.max(via_adjoint.abs() / qhk.abs().max(f64::MIN_POSITIVE));
        let qhh = hessian_form(problem, &ev.frozen, &ev.adjoint, &h, &h)?;
        let jp = reduced_tracking(problem, &u.axpy(eps, &h))?;
        let jm = reduced_tracking(problem, &u.axpy(-eps, &h))?;
        fd = fd.max(rel_err((jp - 2.0 * j0 + jm) / (eps * eps), qhh));
    }
    let measurements = vec![
        Measurement::new("symmetry", sym, 1e-10),
        Measurement::new("cross_route_rel", cross, 1e-4),
        Measurement::new(format!("fd_rel_error@{eps:e}"), fd, 1e-2),
    ];
    let details = vec![("max_curvature_share".to_string(), curvature)];
    let d = digest("hessian", seed, problem, Some(u), &[eps]);
    Ok(CheckReport::finish("hessian", d, measurements, details, start))
}

fn adjoint_distance(problem: &Problem, a: &AdjointTrajectory, b: &AdjointTrajectory) -> f64 {
    let to_state = |x: &AdjointTrajectory| StateTrajectory {
        time: x.time,
        mu: x.p.clone(),
        phi: x.q.clone(),
        sigma: x.r.clone(),
        clamp_count: 0,
        newton_iterations: Vec::new(),
        max_residual: 0.0,
    };
    state_distance(problem, &to_state(a), &to_state(b))
}

/// Perturbs `u` by `delta * w` for a fixed random bounded `w` and monitors
/// the state, the adjoint and the directional derivative along a fixed `v`
/// as `delta` shrinks.
pub fn continuity_check(problem: &Problem, u: &Control, deltas: &[f64], seed: u64) -> Result<CheckReport> {
    let start = Instant::now();
    if deltas.is_empty() || deltas.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidInput("continuity check needs positive deltas".into()));
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut rng = rng(seed);
    let (n, s) = (problem.nodes(), problem.steps());
    let w = Control {
        u1: uniform_field(&mut rng, n, s, -1.0, 1.0),
        u2: uniform_field(&mut rng, n, s, -1.0, 1.0),
        bounds: u.bounds,
    };
    let v = gaussian_direction(&mut rng, problem);
    let base = evaluate(problem, u)?;
    let base_dir = base.gradient.pair(&v, problem);
    let zero = evaluate(problem, &u.axpy(0.0, &w))?;
    let zero_err = state_distance(problem, base.state(), zero.state())
        + adjoint_distance(problem, &base.adjoint, &zero.adjoint)
        + (zero.gradient.pair(&v, problem) - base_dir).abs();
    let mut state_d = Vec::new();
    let mut adj_d = Vec::new();
    let mut deriv_d = Vec::new();
    for &delta in &sorted {
        let ev = evaluate(problem, &u.axpy(delta, &w))?;
        state_d.push(state_distance(problem, base.state(), ev.state()));
        adj_d.push(adjoint_distance(problem, &base.adjoint, &ev.adjoint));
        deriv_d.push((ev.gradient.pair(&v, problem) - base_dir).abs());
    }
    // successive ratios must shrink by at least the noise factor 1.5
    let worst_ratio = |seq: &[f64]| {
        seq.windows(2)
            .map(|p| if p[0] == 0.0 { f64::INFINITY } else { p[1] / p[0] })
            .fold(0.0f64, f64::max)
    };
    let lip: Vec<f64> = state_d.iter().zip(&sorted).map(|(d, delta)| d / delta).collect();
    let lip_spread = lip.iter().copied().fold(0.0f64, f64::max)
        / lip.iter().copied().fold(f64::INFINITY, f64::min);
    let mut details = Vec::new();
    for (i, delta) in sorted.iter().enumerate() {
        details.push((format!("state_diff@{delta:e}"), state_d[i]));
        details.push((format!("adjoint_diff@{delta:e}"), adj_d[i]));
        details.push((format!("derivative_diff@{delta:e}"), deriv_d[i]));
    }
    let mut measurements = vec![Measurement::new("zero_perturbation", zero_err, 0.0)];
    if sorted.len() >= 2 {
        measurements.push(Measurement::new("state_decrease_ratio", worst_ratio(&state_d), 1.0 / 1.5));
        measurements.push(Measurement::new("adjoint_decrease_ratio", worst_ratio(&adj_d), 1.0 / 1.5));
        measurements.push(Measurement::new("derivative_decrease_ratio", worst_ratio(&deriv_d), 1.0 / 1.5));
        measurements.push(Measurement::new("lipschitz_spread", lip_spread, 2.0));
    }
    let d = digest("continuity", seed, problem, Some(u), &sorted);
    Ok(CheckReport::finish("continuity", d, measurements, details, start))
}

/// Which discretization parameter a manufactured-solution study refines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Refinement {
    Time,
    Space,
}

/// A manufactured problem with solution `mu = sigma = 0`, `phi = a(t) cos(pi x)`
/// on `[0, 1]`, its forcing, and the exact nodal trajectory.
pub struct Manufactured {
    pub problem: Problem,
    pub forcing: Forcing,
    pub exact: StateTrajectory,
}

/// Builds the manufactured problem. For [`Refinement::Time`] the forcing uses
/// the discrete Laplacian of the sampled solution, so only the time error
/// remains; for [`Refinement::Space`] `a` is affine in time, which implicit
/// Euler integrates exactly, so only the spatial error remains.
pub fn manufactured(counts: usize, steps: usize, study: Refinement) -> Result<Manufactured> {
    let grid = GridSpec::new(1, &[1.0], &[counts])?;
    let time = TimeGrid::new(1.0, steps)?;
    let model = ModelParams::default();
    let (a, da): (fn(f64) -> f64, fn(f64) -> f64) = match study {
        Refinement::Time => (|t| 0.3 + 0.3 * (2.0 * t).sin(), |t| 0.6 * (2.0 * t).cos()),
        Refinement::Space => (|t| 0.2 + 0.4 * t, |_| 0.4),
    };
    let n = grid.len();
    let shape = grid.sample(|x, _| (PI * x).cos());
    let mut lap_shape = vec![0.0; n];
    match study {
        Refinement::Time => grid.apply_laplacian(&shape, &mut lap_shape),
        Refinement::Space => lap_shape.iter_mut().zip(&shape).for_each(|(l, c)| *l = -PI * PI * c),
    }
    let slices = steps + 1;
    let phi = SpaceTimeField::from_fn(n, slices, |s, k| a(time.time(s)) * shape[k]);
    let mut forcing = Forcing::zeros(n, slices);
    let chi = model.chi;
    for s in 0..slices {
        let t = time.time(s);
        for k in 0..n {
            let ph = a(t) * shape[k];
            let dph = da(t) * shape[k];
            let lap = a(t) * lap_shape[k];
            let react = model.p(ph, 0) * chi * (1.0 - ph);
            forcing.f1.slice_mut(s)[k] = dph - react;
            forcing.f2.slice_mut(s)[k] = model.beta * dph - lap + model.f_prime(ph).value;
            forcing.f3.slice_mut(s)[k] = chi * lap + react;
        }
    }
    let init = InitialData {
        mu0: vec![0.0; n],
        phi0: phi.slice(0).to_vec(),
        sigma0: vec![0.0; n],
    };
    let cost = CostParams {
        b1: 0.0,
        b2: 0.0,
        b3: 1.0,
        kappa: 1.0,
        target_q: SpaceTimeField::zeros(n, slices),
        target_omega: vec![0.0; n],
        bounds: Bounds::symmetric(1.0),
        h_field: SpaceTimeField::constant(n, steps, 1.0),
    };
    let problem = Problem::new(grid, time, model, cost, init)?;
    let exact = StateTrajectory {
        time,
        mu: SpaceTimeField::zeros(n, slices),
        phi,
        sigma: SpaceTimeField::zeros(n, slices),
        clamp_count: 0,
        newton_iterations: Vec::new(),
        max_residual: 0.0,
    };
    Ok(Manufactured {
        problem,
        forcing,
        exact,
    })
}

/// Max-norm error of the discrete solution over all fields, nodes and steps.
pub fn mms_error(m: &Manufactured) -> Result<f64> {
    let traj = solve_state(&m.problem, &Control::zeros(&m.problem), Some(&m.forcing))?;
    let err = |a: &SpaceTimeField, b: &SpaceTimeField| a.axpy(-1.0, b).max_abs();
    Ok(err(&traj.mu, &m.exact.mu)
        .max(err(&traj.phi, &m.exact.phi))
        .max(err(&traj.sigma, &m.exact.sigma)))
}

/// Least-squares slope of `log err` against `log h`.
pub fn fitted_order(h: &[f64], err: &[f64]) -> f64 {
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Errors and fitted order of one refinement study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderStudy {
    pub study: Refinement,
    pub sizes: Vec<f64>,
    pub errors: Vec<f64>,
    pub order: f64,
}

pub fn order_study(study: Refinement, levels: usize) -> Result<OrderStudy> {
    let mut sizes = Vec::with_capacity(levels);
    let mut errors = Vec::with_capacity(levels);
    for l in 0..levels {
        let (counts, steps) = match study {
            Refinement::Time => (33, 16 << l),
            Refinement::Space => ((8 << l) + 1, 4),
        };
        let m = manufactured(counts, steps, study)?;
        sizes.push(match study {
            Refinement::Time => m.problem.dt(),
            Refinement::Space => m.problem.grid.spacing()[0],
        });
        errors.push(mms_error(&m)?);
    }
    let order = fitted_order(&sizes, &errors);
    Ok(OrderStudy {
        study,
        sizes,
        errors,
        order,
    })
}

/// Temporal and spatial convergence orders over `levels` refinements.
pub fn mms_convergence(levels: usize) -> Result<(CheckReport, [OrderStudy; 2])> {
    let start = Instant::now();
    if levels < 3 {
        return Err(Error::InvalidInput("order fits need at least three levels".into()));
    }
    let time = order_study(Refinement::Time, levels)?;
    let space = order_study(Refinement::Space, levels)?;
    let finest_smallest = |s: &OrderStudy| {
        let last = *s.errors.last().expect("levels >= 3");
        if s.errors[..s.errors.len() - 1].iter().all(|&e| last < e) {
            0.0
        } else {
            1.0
        }
    };
    let mut details = Vec::new();
    for s in [&time, &space] {
        for (h, e) in s.sizes.iter().zip(&s.errors) {
            details.push((format!("{:?}_error@{h:e}", s.study).to_lowercase(), *e));
        }
    }
    let measurements = vec![
        Measurement::new("temporal_order_deviation", (time.order - 1.0).abs(), 0.2),
        Measurement::new("spatial_order_deviation", (space.order - 2.0).abs(), 0.3),
        Measurement::new("temporal_finest_not_smallest", finest_smallest(&time), 0.0),
        Measurement::new("spatial_finest_not_smallest", finest_smallest(&space), 0.0),
    ];
    details.push(("temporal_order".into(), time.order));
    details.push(("spatial_order".into(), space.order));
    let problem = manufactured(9, 4, Refinement::Space)?.problem;
    let d = digest("mms", 0, &problem, None, &[levels as f64]);
    Ok((
        CheckReport::finish("mms", d, measurements, details, start),
        [time, space],
    ))
}
