//! Sparse assembly and the two inner solvers: banded LU with partial pivoting
//! (1D) and restarted, right-preconditioned GMRES with node-block Jacobi (2D).
//!
//! Three-field unknowns are interleaved per node: index `3 * k + c` with
//! `c = 0, 1, 2` for the first, second and third field.

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Which inner solver handles the per-step linear systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolverKind {
    /// Banded LU in 1D, GMRES in 2D.
    #[default]
    Auto,
    Banded,
    Gmres,
}

/// A 3x3 block operator whose blocks are `diag(c_rc) + l_rc * L`.
#[derive(Debug, Clone)]
pub(crate) struct BlockOperator {
    pub diag: [[Option<Vec<f64>>; 3]; 3],
    pub lap: [[f64; 3]; 3],
}

impl BlockOperator {
    pub fn zero() -> Self {
        Self {
            diag: Default::default(),
            lap: [[0.0; 3]; 3],
        }
    }

    pub fn add_diag(&mut self, r: usize, c: usize, values: Vec<f64>) {
        match &mut self.diag[r][c] {
            Some(v) => v.iter_mut().zip(values).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(values),
        }
    }

    pub fn add_const(&mut self, r: usize, c: usize, value: f64, nodes: usize) {
        self.add_diag(r, c, vec![value; nodes]);
    }

    /// Adjoint with respect to the trapezoid-weighted pairing. The weighted
    /// Neumann Laplacian is symmetric, so only the block pattern transposes.
    pub fn transpose(&self) -> Self {
        let mut out = Self::zero();
        for r in 0..3 {
            for c in 0..3 {
                out.diag[r][c] = self.diag[c][r].clone();
                out.lap[r][c] = self.lap[c][r];
            }
        }
        out
    }

    pub fn assemble(&self, grid: &GridSpec) -> CsrMatrix {
        let n = grid.len();
        let mut trip = Vec::with_capacity(n * 9 + n * 5 * 9);
        for r in 0..3 {
            for c in 0..3 {
                if let Some(d) = &self.diag[r][c] {
                    for (k, &v) in d.iter().enumerate() {
                        if v != 0.0 {
                            trip.push((3 * k + r, 3 * k + c, v));
                        }
                    }
                }
                let l = self.lap[r][c];
                if l != 0.0 {
                    grid.laplacian_entries(|i, j, v| trip.push((3 * i + r, 3 * j + c, l * v)));
                }
            }
        }
        CsrMatrix::from_triplets(3 * n, trip)
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub(crate) struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *vals.last_mut().expect("duplicate follows an entry") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[p] * x[self.cols[p]];
            }
            y[i] = s;
        }
    }

    fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[p];
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.cols[p], self.vals[p]))
    }
}

fn use_banded(kind: LinearSolverKind, grid: &GridSpec) -> bool {
    match kind {
        LinearSolverKind::Auto => grid.dim() == 1,
        LinearSolverKind::Banded => true,
        LinearSolverKind::Gmres => false,
    }
}

/// Solves `A x = b` with the requested solver.
pub(crate) fn solve(
    kind: LinearSolverKind,
    grid: &GridSpec,
    a: &CsrMatrix,
    b: &[f64],
) -> Result<Vec<f64>> {
    if use_banded(kind, grid) {
        BandedLu::factor(a)?.solve(b)
    } else {
        gmres(a, b, GMRES_TOL, GMRES_RESTART, GMRES_MAX_ITERS)
    }
}

const GMRES_TOL: f64 = 1e-12;
const GMRES_RESTART: usize = 80;
const GMRES_MAX_ITERS: usize = 4000;

/// A matrix prepared for repeated solves: factored when banded, kept for
/// Krylov iterations otherwise.
pub(crate) enum PreparedSolver {
    Direct(BandedLu),
    Krylov(CsrMatrix),
}

impl PreparedSolver {
    pub fn new(kind: LinearSolverKind, grid: &GridSpec, a: CsrMatrix) -> Result<Self> {
        if use_banded(kind, grid) {
            Ok(Self::Direct(BandedLu::factor(&a)?))
        } else {
            Ok(Self::Krylov(a))
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Direct(lu) => lu.solve(b),
            Self::Krylov(a) => gmres(a, b, GMRES_TOL, GMRES_RESTART, GMRES_MAX_ITERS),
        }
    }
}

/// LU factors of a banded matrix with row pivoting.
pub(crate) struct BandedLu {
    n: usize,
    kl: usize,
    width: usize,
    // row i stores absolute columns [i - kl, i + ku + kl]
    data: Vec<f64>,
    piv: Vec<usize>,
    ku_fill: usize,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let (kl, ku) = a.bandwidths();
        let ku_fill = ku + kl;
        let width = kl + ku_fill + 1;
        let mut lu = Self {
            n,
            kl,
            width,
            data: vec![0.0; n * width],
            piv: vec![0; n],
            ku_fill,
        };
        for i in 0..n {
            for (j, v) in a.row(i) {
                *lu.at_mut(i, j) = v;
            }
        }
        let scale = lu.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let last_col = (i + ku_fill).min(n - 1);
            let mut p = i;
            let mut best = lu.at(i, i).abs();
            for r in i + 1..=last_row {
                let v = lu.at(r, i).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > scale * 1e-300) || !best.is_finite() {
                return Err(Error::LinearSolver(format!("singular pivot in column {i}")));
            }
            lu.piv[i] = p;
            if p != i {
                for j in i..=last_col {
                    let t = lu.at(i, j);
                    *lu.at_mut(i, j) = lu.at(p, j);
                    *lu.at_mut(p, j) = t;
                }
            }
            let d = lu.at(i, i);
            for r in i + 1..=last_row {
                let m = lu.at(r, i) / d;
                if m != 0.0 {
                    for j in i + 1..=last_col {
                        let u = lu.at(i, j);
                        if u != 0.0 {
                            *lu.at_mut(r, j) -= m * u;
                        }
                    }
                }
                *lu.at_mut(r, i) = m;
            }
        }
        Ok(lu)
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku_fill);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.offset(i, j)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let o = self.offset(i, j);
        &mut self.data[o]
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let p = self.piv[i];
            if p != i {
                x.swap(i, p);
            }
            let xi = x[i];
            if xi != 0.0 {
                for r in i + 1..=(i + self.kl).min(n - 1) {
                    x[r] -= self.at(r, i) * xi;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..=(i + self.ku_fill).min(n - 1) {
                s -= self.at(i, j) * x[j];
            }
            x[i] = s / self.at(i, i);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolver("non-finite solution".into()));
        }
        Ok(x)
    }
}

/// Inverse of the 3x3 diagonal block of every node.
struct BlockJacobi {
    inv: Vec<[[f64; 3]; 3]>,
}

impl BlockJacobi {
    fn new(a: &CsrMatrix) -> Result<Self> {
        let nodes = a.n() / 3;
        let mut inv = Vec::with_capacity(nodes);
        for k in 0..nodes {
            let mut m = [[0.0; 3]; 3];
            for r in 0..3 {
                for (j, v) in a.row(3 * k + r) {
                    if j / 3 == k {
                        m[r][j % 3] = v;
                    }
                }
            }
            inv.push(invert3(m).ok_or_else(|| {
                Error::LinearSolver(format!("singular diagonal block at node {k}"))
            })?);
        }
        Ok(Self { inv })
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (k, m) in self.inv.iter().enumerate() {
            for r in 0..3 {
                y[3 * k + r] =
                    m[r][0] * x[3 * k] + m[r][1] * x[3 * k + 1] + m[r][2] * x[3 * k + 2];
            }
        }
    }
}

fn invert3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    if det.abs() <= 1e-14 * scale.powi(3) || !det.is_finite() {
        return None;
    }
    let d = 1.0 / det;
    Some([
        [
            c00 * d,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * d,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * d,
        ],
        [
            c01 * d,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * d,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * d,
        ],
        [
            c02 * d,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * d,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * d,
        ],
    ])
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Restarted GMRES(m), right preconditioned, relative residual tolerance `tol`.
pub(crate) fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iters: usize,
) -> Result<Vec<f64>> {
    let n = a.n();
    let prec = BlockJacobi::new(a)?;
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let target = tol * bnorm;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut total = 0;
    loop {
        a.matvec(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm(&r);
        if beta <= target {
            return Ok(x);
        }
        if total >= max_iters {
            return Err(Error::LinearSolver(format!(
                "GMRES stalled: relative residual {:.3e} after {total} iterations",
                beta / bnorm
            )));
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            prec.apply(&basis[k], &mut z);
            a.matvec(&z, &mut w);
            for (i, v) in basis.iter().enumerate() {
                h[i][k] = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= h[i][k] * vi);
            }
            // second Gram-Schmidt pass for orthogonality at tight tolerances
            for (i, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                h[i][k] += c;
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let den = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if den == 0.0 {
                return Err(Error::LinearSolver("GMRES breakdown".into()));
            }
            cs[k] = h[k][k] / den;
            sn[k] = h[k + 1][k] / den;
            h[k][k] = den;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            if g[k + 1].abs() <= 0.5 * target || hn == 0.0 || total >= max_iters {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            update
                .iter_mut()
                .zip(&basis[j])
                .for_each(|(u, v)| *u += yj * v);
        }
        prec.apply(&update, &mut z);
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
    }
}
