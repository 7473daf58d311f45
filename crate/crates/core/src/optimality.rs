//! Certificates at a computed optimum: sparsity bands, projection formulas,
//! critical-cone classification and sampling, coercivity of the second
//! derivative on the cone, and an empirical quadratic-growth probe.

use log::warn;
use serde::Serialize;

use crate::control::Control;
use crate::error::{Error, Result};
use crate::grid::SpaceTimeField;
use crate::objective::{hessian_form, reduced_total, GradientPair};
use crate::optimizer::MultiplierPair;
use crate::problem::Problem;
use crate::sampling::{gaussian_field, rng, uniform_field};
use crate::sensitivity::{AdjointTrajectory, FrozenState};

/// Default activity tolerance `1e-6 (kappa + b3 max|bound|)`.
pub fn default_act_tol(problem: &Problem) -> f64 {
    let c = &problem.cost;
    1e-6 * (c.kappa + c.b3 * c.bounds.max_magnitude())
}

/// The adjoint quantity that decides sparsity of component `i`:
/// `-h p` for the first, `r` for the second.
fn switching_field(problem: &Problem, adj: &AdjointTrajectory, i: usize) -> SpaceTimeField {
    let h = &problem.cost.h_field;
    SpaceTimeField::from_fn(problem.nodes(), problem.steps(), |n, k| {
        if i == 0 {
            -h.slice(n)[k] * adj.p.slice(n)[k]
        } else {
            adj.r.slice(n)[k]
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSparsity {
    pub zero_fraction: f64,
    /// Share of decidable cells on which `u = 0` iff `|s| <= kappa`.
    pub band_agreement: f64,
    pub decided_cells: usize,
    /// Flat indices `n * nodes + k` of cells inside the dead-band.
    pub dead_band: Vec<usize>,
    pub violations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityReport {
    pub components: [ComponentSparsity; 2],
    pub band_tol: f64,
}

impl SparsityReport {
    pub fn agrees(&self) -> bool {
        self.components.iter().all(|c| c.violations.is_empty())
    }
}

/// Checks `u1 = 0 <=> |h p| <= kappa` and `u2 = 0 <=> |r| <= kappa` cell by
/// cell, skipping cells within `band_tol * kappa` of the threshold.
pub fn sparsity_bands(
    problem: &Problem,
    u: &Control,
    adj: &AdjointTrajectory,
    band_tol: f64,
) -> SparsityReport {
    let kappa = problem.cost.kappa;
    let comp = |i: usize| {
        let s = switching_field(problem, adj, i);
        let uc = u.component(i).as_slice();
        let mut dead_band = Vec::new();
        let mut violations = Vec::new();
        let mut decided = 0usize;
        for (idx, (&sv, &uv)) in s.as_slice().iter().zip(uc).enumerate() {
            if (sv.abs() - kappa).abs() <= band_tol * kappa {
                dead_band.push(idx);
                continue;
            }
            decided += 1;
            if (uv == 0.0) != (sv.abs() <= kappa) {
                violations.push(idx);
            }
        }
        let zeros = uc.iter().filter(|&&v| v == 0.0).count();
        ComponentSparsity {
            zero_fraction: zeros as f64 / uc.len().max(1) as f64,
            band_agreement: if decided == 0 {
                1.0
            } else {
                (decided - violations.len()) as f64 / decided as f64
            },
            decided_cells: decided,
            dead_band,
            violations,
        }
    };
    SparsityReport {
        components: [comp(0), comp(1)],
        band_tol,
    }
}

/// `L²(Q)` norms of `u_i - clamp(-(s_i' + kappa lam_i) / b3)` with
/// `s_1' = -h p`, `s_2' = r`.
pub fn projection_residual(
    problem: &Problem,
    u: &Control,
    adj: &AdjointTrajectory,
    lam: &MultiplierPair,
) -> (f64, f64) {
    let c = &problem.cost;
    let res = |i: usize| {
        let s = switching_field(problem, adj, i);
        let (lo, hi) = u.bounds.component(i);
        let l = lam.component(i);
        let uc = u.component(i);
        let diff = SpaceTimeField::from_fn(problem.nodes(), problem.steps(), |n, k| {
            let proj = (-(s.slice(n)[k] + c.kappa * l.slice(n)[k]) / c.b3).clamp(lo, hi);
            uc.slice(n)[k] - proj
        });
        problem.cell_inner(&diff, &diff).max(0.0).sqrt()
    };
    (res(0), res(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConeClass {
    ForcedZero,
    Nonneg,
    Nonpos,
    Free,
}

/// Per-cell sign restrictions of critical directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeClassification {
    pub nodes: usize,
    pub slices: usize,
    pub classes: [Vec<ConeClass>; 2],
    pub act_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConeCounts {
    pub forced_zero: usize,
    pub nonneg: usize,
    pub nonpos: usize,
    pub free: usize,
}

impl ConeClassification {
    pub fn counts(&self, i: usize) -> ConeCounts {
        let mut c = ConeCounts {
            forced_zero: 0,
            nonneg: 0,
            nonpos: 0,
            free: 0,
        };
        for cls in &self.classes[i] {
            match cls {
                ConeClass::ForcedZero => c.forced_zero += 1,
                ConeClass::Nonneg => c.nonneg += 1,
                ConeClass::Nonpos => c.nonpos += 1,
                ConeClass::Free => c.free += 1,
            }
        }
        c
    }

    pub fn is_degenerate(&self) -> bool {
        self.classes
            .iter()
            .all(|c| c.iter().all(|&k| k == ConeClass::ForcedZero))
    }

    /// Whether `v` obeys every sign restriction exactly.
    pub fn admits(&self, v: &Control) -> bool {
        (0..2).all(|i| {
            self.classes[i]
                .iter()
                .zip(v.component(i).as_slice())
                .all(|(cls, &x)| match cls {
                    ConeClass::ForcedZero => x == 0.0,
                    ConeClass::Nonneg => x >= 0.0,
                    ConeClass::Nonpos => x <= 0.0,
                    ConeClass::Free => true,
                })
        })
    }
}

/// Classifies each cell by the pointwise critical-cone conditions. With
/// `kappa = 0` the sign rules on the zero set are dropped, leaving the
/// classical smooth-case cone.
pub fn classify_cone(
    problem: &Problem,
    u: &Control,
    adj: &AdjointTrajectory,
    act_tol: f64,
) -> ConeClassification {
    let c = &problem.cost;
    let kappa = c.kappa;
    let classify = |i: usize| {
        let s = switching_field(problem, adj, i);
        let (lo, hi) = u.bounds.component(i);
        s.as_slice()
            .iter()
            .zip(u.component(i).as_slice())
            .map(|(&sv, &uv)| {
                let d = sv + c.b3 * uv;
                if (d.abs() - kappa).abs() > act_tol {
                    ConeClass::ForcedZero
                } else if uv == lo || (kappa > 0.0 && uv == 0.0 && (sv + kappa).abs() <= act_tol) {
                    ConeClass::Nonneg
                } else if uv == hi || (kappa > 0.0 && uv == 0.0 && (sv - kappa).abs() <= act_tol) {
                    ConeClass::Nonpos
                } else {
                    ConeClass::Free
                }
            })
            .collect::<Vec<_>>()
    };
    ConeClassification {
        nodes: problem.nodes(),
        slices: problem.steps(),
        classes: [classify(0), classify(1)],
        act_tol,
    }
}

/// Random unit directions in the critical cone.
pub fn sample_critical_directions(
    problem: &Problem,
    cls: &ConeClassification,
    n: usize,
    seed: u64,
) -> Result<Vec<Control>> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one direction".into()));
    }
    if cls.is_degenerate() {
        return Err(Error::ConeDegenerate);
    }
    let mut rng = rng(seed);
    let mut out = Vec::with_capacity(n);
    let mut retries = 0;
    while out.len() < n {
        let mut v = Control {
            u1: gaussian_field(&mut rng, cls.nodes, cls.slices),
            u2: gaussian_field(&mut rng, cls.nodes, cls.slices),
            bounds: problem.bounds(),
        };
        for i in 0..2 {
            for (x, k) in v.component_mut(i).as_mut_slice().iter_mut().zip(&cls.classes[i]) {
                *x = match k {
                    ConeClass::ForcedZero => 0.0,
                    ConeClass::Nonneg => x.abs(),
                    ConeClass::Nonpos => -x.abs(),
                    ConeClass::Free => *x,
                };
            }
        }
        let norm = v.norm(problem);
        if norm > 0.0 {
            out.push(v.scale(1.0 / norm));
        } else {
            retries += 1;
            if retries > 100 {
                return Err(Error::ConeDegenerate);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityReport {
    pub samples: usize,
    pub min_quotient: f64,
    pub median_quotient: f64,
    pub quotients: Vec<f64>,
    /// Index into the sampled directions of the minimizing one.
    pub witness_index: usize,
    #[serde(skip)]
    pub witness: Option<Control>,
}

/// Rayleigh quotients `J1''(u)[v, v] / ‖v‖²` over the given directions.
pub fn coercivity_scan(
    problem: &Problem,
    frozen: &FrozenState,
    adj: &AdjointTrajectory,
    dirs: &[Control],
) -> Result<CoercivityReport> {
    if dirs.is_empty() {
        return Err(Error::InvalidInput("coercivity scan needs directions".into()));
    }
    let mut quotients = Vec::with_capacity(dirs.len());
    for v in dirs {
        let nv = v.inner(v, problem);
        if !(nv > 0.0) {
            return Err(Error::InvalidInput("zero direction in coercivity scan".into()));
        }
        quotients.push(hessian_form(problem, frozen, adj, v, v)? / nv);
    }
    let (witness_index, &min_quotient) = quotients
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let mut sorted = quotients.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median_quotient = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    Ok(CoercivityReport {
        samples: m,
        min_quotient,
        median_quotient,
        quotients,
        witness_index,
        witness: Some(dirs[witness_index].clone()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthProbeReport {
    pub probes: usize,
    pub radius: f64,
    /// Minimum of `(J(u) - J(u*)) / ‖u - u*‖²` over successful probes.
    pub min_gap: f64,
    pub negative_gaps: usize,
    /// Probes whose forward solve failed.
    pub failures: usize,
    pub gaps: Vec<f64>,
}

/// Evaluates the full reduced cost at `n` random feasible points within
/// `eps` of `u_star`. A report without negative gaps is evidence of local
/// quadratic growth, not a proof.
pub fn growth_probe(
    problem: &Problem,
    u_star: &Control,
    eps: f64,
    n: usize,
    seed: u64,
) -> Result<GrowthProbeReport> {
    if !(eps > 0.0) || n == 0 {
        return Err(Error::InvalidInput("growth probe needs eps > 0 and n >= 1".into()));
    }
    let j_star = reduced_total(problem, u_star)?;
    let mut rng = rng(seed);
    let mut gaps = Vec::with_capacity(n);
    let mut failures = 0;
    let (nodes, slices) = (problem.nodes(), problem.steps());
    while gaps.len() + failures < n {
        let dir = Control {
            u1: gaussian_field(&mut rng, nodes, slices),
            u2: gaussian_field(&mut rng, nodes, slices),
            bounds: u_star.bounds,
        };
        let radius = eps * rand::Rng::random_range(&mut rng, 0.1..=1.0);
        let dir = dir.scale(radius / dir.norm(problem));
        // projection is nonexpansive, so the distance stays below eps
        let u = u_star.axpy(1.0, &dir).project();
        let dist2 = u.axpy(-1.0, u_star).inner(&u.axpy(-1.0, u_star), problem);
        if dist2 == 0.0 {
            continue;
        }
        match reduced_total(problem, &u) {
            Ok(j) => gaps.push((j - j_star) / dist2),
            Err(e) => {
                warn!("growth probe {} failed: {e}", gaps.len() + failures);
                failures += 1;
            }
        }
    }
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(GrowthProbeReport {
        probes: n,
        radius: eps,
        min_gap,
        negative_gaps: gaps.iter().filter(|&&g| g < 0.0).count(),
        failures,
        gaps,
    })
}

/// Smallest normalized value of `∬ (d + kappa lam) (v - u)` over `n` random
/// feasible competitors `v`; the variational inequality asks for `>= 0`.
pub fn variational_inequality_slack(
    problem: &Problem,
    u: &Control,
    grad: &GradientPair,
    lam: &MultiplierPair,
    n: usize,
    seed: u64,
) -> f64 {
    let kappa = problem.cost.kappa;
    let w = Control {
        u1: grad.d1.axpy(kappa, &lam.lam1),
        u2: grad.d2.axpy(kappa, &lam.lam2),
        bounds: u.bounds,
    };
    let mut rng = rng(seed);
    let b = u.bounds;
    let (nodes, slices) = (problem.nodes(), problem.steps());
    let mut worst = f64::INFINITY;
    for _ in 0..n {
        let v = Control {
            u1: uniform_field(&mut rng, nodes, slices, b.lo1, b.hi1),
            u2: uniform_field(&mut rng, nodes, slices, b.lo2, b.hi2),
            bounds: b,
        };
        let dv = v.axpy(-1.0, u);
        let norm = dv.norm(problem);
        if norm > 0.0 {
            worst = worst.min(w.inner(&dv, problem) / norm);
        }
    }
    worst
}
