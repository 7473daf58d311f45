//! The implicit Euler step operator shared by the nonlinear state solve, the
//! linearized/bilinearized solves and (transposed) the adjoint sweep.
//!
//! One step `t_n -> t_{n+1}` of the three-field system reads
//! `(M / dt + A_{n+1}) y^{n+1} = M y^n / dt + s^{n+1}` with the mass pattern
//! `M = [[alpha, 1, 0], [0, beta, 0], [0, 0, 1]]` and `A` holding the Laplacians
//! and the frozen pointwise couplings.

use crate::grid::GridSpec;
use crate::linalg::BlockOperator;
use crate::model::ModelParams;

/// Pointwise coefficients of the linearized system at one time node.
#[derive(Debug, Clone, Default)]
pub struct StepCoefficients {
    /// `P(phi)`.
    pub p: Vec<f64>,
    /// `P'(phi) (sigma + chi (1 - phi) - mu)`.
    pub dp_m: Vec<f64>,
    /// `F''(phi)`.
    pub f2nd: Vec<f64>,
}

/// `sigma + chi (1 - phi) - mu`.
#[inline]
pub fn source_balance(chi: f64, mu: f64, phi: f64, sigma: f64) -> f64 {
    sigma + chi * (1.0 - phi) - mu
}

pub(crate) fn step_operator(
    grid: &GridSpec,
    model: &ModelParams,
    dt: f64,
    coeff: &StepCoefficients,
    coupled: bool,
) -> BlockOperator {
    let n = grid.len();
    let chi = model.chi;
    let inv_dt = 1.0 / dt;
    let mut op = BlockOperator::zero();
    op.add_const(0, 0, model.alpha * inv_dt, n);
    op.add_const(0, 1, inv_dt, n);
    op.add_const(1, 1, model.beta * inv_dt, n);
    op.add_const(2, 2, inv_dt, n);
    op.add_const(1, 0, -1.0, n);
    op.lap[0][0] = -1.0;
    op.lap[1][1] = -1.0;
    op.lap[2][2] = -1.0;
    op.lap[2][1] = chi;
    if coupled {
        op.add_diag(0, 0, coeff.p.clone());
        op.add_diag(
            0,
            1,
            coeff
                .p
                .iter()
                .zip(&coeff.dp_m)
                .map(|(p, d)| chi * p - d)
                .collect(),
        );
        op.add_diag(0, 2, coeff.p.iter().map(|p| -p).collect());
        op.add_diag(1, 1, coeff.f2nd.clone());
        op.add_const(1, 2, -chi, n);
        op.add_diag(2, 0, coeff.p.iter().map(|p| -p).collect());
        op.add_diag(
            2,
            1,
            coeff
                .p
                .iter()
                .zip(&coeff.dp_m)
                .map(|(p, d)| d - chi * p)
                .collect(),
        );
        op.add_diag(2, 2, coeff.p.clone());
    }
    op
}

/// Interleaves three per-node fields into one unknown vector.
pub(crate) fn interleave(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(3 * a.len());
    for k in 0..a.len() {
        z.push(a[k]);
        z.push(b[k]);
        z.push(c[k]);
    }
    z
}

pub(crate) fn split(z: &[f64], a: &mut [f64], b: &mut [f64], c: &mut [f64]) {
    for k in 0..a.len() {
        a[k] = z[3 * k];
        b[k] = z[3 * k + 1];
        c[k] = z[3 * k + 2];
    }
}
