//! Uniform node-centred grids on an interval or a rectangle, the Neumann
//! Laplacian with mirror ghost nodes, and trapezoidal quadrature.
//!
//! Nodes are numbered x-fastest: `idx = j * nx + i`. Space-time fields are
//! stored slice-major in a flat buffer.

use crate::error::{Error, Result};

/// Tensor-product grid on `[0, Lx]` or `[0, Lx] x [0, Ly]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dim: usize,
    extents: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    weights: Vec<f64>,
}

impl GridSpec {
    /// Builds a grid; every axis needs at least three nodes and a positive length.
    pub fn new(dim: usize, extents: &[f64], counts: &[usize]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if extents.len() != dim || counts.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} extents and counts, got {} and {}",
                extents.len(),
                counts.len()
            )));
        }
        for a in 0..dim {
            if counts[a] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} needs at least 3 nodes, got {}",
                    counts[a]
                )));
            }
            if !(extents[a] > 0.0 && extents[a].is_finite()) {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} extent must be positive, got {}",
                    extents[a]
                )));
            }
        }
        let spacing: Vec<f64> = (0..dim)
            .map(|a| extents[a] / (counts[a] - 1) as f64)
            .collect();
        let axis_weights: Vec<Vec<f64>> = (0..dim)
            .map(|a| {
                let n = counts[a];
                (0..n)
                    .map(|i| {
                        if i == 0 || i == n - 1 {
                            0.5 * spacing[a]
                        } else {
                            spacing[a]
                        }
                    })
                    .collect()
            })
            .collect();
        let weights = if dim == 1 {
            axis_weights[0].clone()
        } else {
            let mut w = Vec::with_capacity(counts[0] * counts[1]);
            for wy in &axis_weights[1] {
                for wx in &axis_weights[0] {
                    w.push(wx * wy);
                }
            }
            w
        };
        Ok(Self {
            dim,
            extents: extents.to_vec(),
            counts: counts.to_vec(),
            spacing,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Trapezoidal quadrature weight of every node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Measure of the domain.
    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    /// Physical coordinates of node `idx`.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let nx = self.counts[0];
        let i = idx % nx;
        let j = idx / nx;
        let x = i as f64 * self.spacing[0];
        let y = if self.dim == 2 {
            j as f64 * self.spacing[1]
        } else {
            0.0
        };
        [x, y]
    }

    /// Samples `f(x, y)` at every node (`y = 0` in 1D).
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let [x, y] = self.coords(k);
                f(x, y)
            })
            .collect()
    }

    /// Writes `out = L f` with the mirror-closed second-difference stencil.
    pub fn apply_laplacian(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.len());
        debug_assert_eq!(out.len(), self.len());
        let nx = self.counts[0];
        let ny = if self.dim == 2 { self.counts[1] } else { 1 };
        let ihx2 = 1.0 / (self.spacing[0] * self.spacing[0]);
        let ihy2 = if self.dim == 2 {
            1.0 / (self.spacing[1] * self.spacing[1])
        } else {
            0.0
        };
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let left = if i == 0 { f[k + 1] } else { f[k - 1] };
                let right = if i == nx - 1 { f[k - 1] } else { f[k + 1] };
                let mut v = (left - 2.0 * f[k] + right) * ihx2;
                if self.dim == 2 {
                    let down = if j == 0 { f[k + nx] } else { f[k - nx] };
                    let up = if j == ny - 1 { f[k - nx] } else { f[k + nx] };
                    v += (down - 2.0 * f[k] + up) * ihy2;
                }
                out[k] = v;
            }
        }
    }

    /// Sparse rows of the Laplacian: `(row, col, value)` triplets, duplicates summed by the caller.
    pub(crate) fn laplacian_entries(&self, mut push: impl FnMut(usize, usize, f64)) {
        let nx = self.counts[0];
        let ny = if self.dim == 2 { self.counts[1] } else { 1 };
        let ihx2 = 1.0 / (self.spacing[0] * self.spacing[0]);
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let l = if i == 0 { k + 1 } else { k - 1 };
                let r = if i == nx - 1 { k - 1 } else { k + 1 };
                push(k, l, ihx2);
                push(k, r, ihx2);
                push(k, k, -2.0 * ihx2);
                if self.dim == 2 {
                    let ihy2 = 1.0 / (self.spacing[1] * self.spacing[1]);
                    let d = if j == 0 { k + nx } else { k - nx };
                    let u = if j == ny - 1 { k - nx } else { k + nx };
                    push(k, d, ihy2);
                    push(k, u, ihy2);
                    push(k, k, -2.0 * ihy2);
                }
            }
        }
    }

    /// Trapezoidal `∫_Ω f`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Trapezoidal `∫_Ω a b`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }
}

/// Nodal values of one scalar quantity on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at node {bad}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            values: grid.sample(f),
            grid: grid.clone(),
        }
    }
}

/// Second-order Neumann Laplacian of a field.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.values.len()];
    f.grid.apply_laplacian(&f.values, &mut out);
    ScalarField {
        grid: f.grid.clone(),
        values: out,
    }
}

/// Trapezoidal integral over the domain.
pub fn integrate_omega(f: &ScalarField) -> f64 {
    f.grid.integrate(&f.values)
}

/// Uniform time partition of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidInput("need at least one time step".into()));
        }
        Ok(Self {
            t_final,
            steps,
            dt: t_final / steps as f64,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.t_final
        } else {
            n as f64 * self.dt
        }
    }

    /// Trapezoid weight of time node `n`.
    pub fn node_weight(&self, n: usize) -> f64 {
        if n == 0 || n == self.steps {
            0.5 * self.dt
        } else {
            self.dt
        }
    }
}

/// A sequence of equally sized spatial slices stored contiguously.
///
/// State-like quantities carry `Nt + 1` slices (one per time node), control-like
/// quantities carry `Nt` slices (one per time cell `(t_n, t_{n+1}]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    nodes: usize,
    data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(nodes: usize, slices: usize) -> Self {
        Self {
            nodes,
            data: vec![0.0; nodes * slices],
        }
    }

    pub fn constant(nodes: usize, slices: usize, c: f64) -> Self {
        Self {
            nodes,
            data: vec![c; nodes * slices],
        }
    }

    pub fn from_vec(nodes: usize, data: Vec<f64>) -> Result<Self> {
        if nodes == 0 || !data.len().is_multiple_of(nodes) {
            return Err(Error::ShapeMismatch(format!(
                "buffer of {} values is not a whole number of {nodes}-node slices",
                data.len()
            )));
        }
        Ok(Self { nodes, data })
    }

    pub fn from_slices(slices: Vec<Vec<f64>>) -> Result<Self> {
        let nodes = slices.first().map(|s| s.len()).unwrap_or(0);
        if nodes == 0 || slices.iter().any(|s| s.len() != nodes) {
            return Err(Error::ShapeMismatch("ragged or empty slices".into()));
        }
        Ok(Self {
            nodes,
            data: slices.concat(),
        })
    }

    /// Builds `slices` slices by sampling `f(slice_index, node_index)`.
    pub fn from_fn(nodes: usize, slices: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(nodes * slices);
        for n in 0..slices {
            for k in 0..nodes {
                data.push(f(n, k));
            }
        }
        Self { nodes, data }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn slices(&self) -> usize {
        self.data.len() / self.nodes
    }

    pub fn slice(&self, n: usize) -> &[f64] {
        &self.data[n * self.nodes..(n + 1) * self.nodes]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.nodes..(n + 1) * self.nodes]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.data.len() == other.data.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            nodes: self.nodes,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        debug_assert!(self.same_shape(other));
        Self {
            nodes: self.nodes,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }
}

/// `∬_Q a b` for node-indexed series: trapezoid in time of the spatial trapezoid.
pub fn inner_l2_q(
    grid: &GridSpec,
    a: &SpaceTimeField,
    b: &SpaceTimeField,
    dt: f64,
) -> Result<f64> {
    if !a.same_shape(b) || a.nodes() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "inner_l2_q: {}x{} vs {}x{} on a {}-node grid",
            a.slices(),
            a.nodes(),
            b.slices(),
            b.nodes(),
            grid.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let m = a.slices();
    if m < 2 {
        return Err(Error::ShapeMismatch(
            "a node-indexed series needs at least two slices".into(),
        ));
    }
    let mut total = 0.0;
    for n in 0..m {
        let w = if n == 0 || n == m - 1 { 0.5 * dt } else { dt };
        total += w * grid.inner(a.slice(n), b.slice(n));
    }
    Ok(total)
}

/// `∬_Q a b` for cell-indexed series (piecewise constant in time): exact in time.
pub fn inner_cells(grid: &GridSpec, a: &SpaceTimeField, b: &SpaceTimeField, dt: f64) -> f64 {
    debug_assert!(a.same_shape(b));
    (0..a.slices())
        .map(|n| dt * grid.inner(a.slice(n), b.slice(n)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(n: usize) -> GridSpec {
        GridSpec::new(1, &[1.0], &[n]).unwrap()
    }

    #[test]
    fn build_grid_examples() {
        let g = line(5);
        assert_eq!(g.spacing(), &[0.25]);
        let g2 = GridSpec::new(2, &[1.0, 2.0], &[3, 5]).unwrap();
        assert_eq!(g2.len(), 15);
        assert_eq!(g2.spacing(), &[0.5, 0.5]);
        assert!(GridSpec::new(1, &[1.0], &[2]).is_err());
        assert!(GridSpec::new(1, &[0.0], &[4]).is_err());
        assert!(GridSpec::new(1, &[-1.0], &[4]).is_err());
        assert!(GridSpec::new(3, &[1.0; 3], &[3; 3]).is_err());
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = GridSpec::new(2, &[1.0, 1.5], &[7, 9]).unwrap();
        let f = ScalarField::constant(&g, 3.7);
        let lap = laplacian_neumann(&f);
        assert!(lap.values.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn laplacian_cosine_second_order() {
        let errs: Vec<f64> = [33, 65, 129]
            .iter()
            .map(|&n| {
                let g = line(n);
                let f = ScalarField::from_fn(&g, |x, _| (PI * x).cos());
                let lap = laplacian_neumann(&f);
                (0..g.len())
                    .map(|k| {
                        let x = g.coords(k)[0];
                        (lap.values[k] + PI * PI * (PI * x).cos()).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let h = 1.0 / 128.0;
        // leading term of the truncation error is pi^4 h^2 / 12
        assert!(errs[2] < 1.2 * PI.powi(4) * h * h / 12.0, "{errs:?}");
        assert!((errs[0] / errs[1]).log2() > 1.9);
        assert!((errs[1] / errs[2]).log2() > 1.9);
    }

    #[test]
    fn laplacian_cosine_2d() {
        let g = GridSpec::new(2, &[1.0, 1.0], &[65, 65]).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| (PI * x).cos() * (PI * y).cos());
        let lap = laplacian_neumann(&f);
        let err = (0..g.len())
            .map(|k| (lap.values[k] + 2.0 * PI * PI * f.values[k]).abs())
            .fold(0.0, f64::max);
        assert!(err < 2e-2, "{err}");
    }

    #[test]
    fn trapezoid_examples() {
        let g = line(101);
        assert!((integrate_omega(&ScalarField::constant(&g, 1.0)) - 1.0).abs() < 1e-14);
        let lin = ScalarField::from_fn(&g, |x, _| x);
        assert!((integrate_omega(&lin) - 0.5).abs() < 1e-12);
        let quad = ScalarField::from_fn(&g, |x, _| x * x);
        let err = (integrate_omega(&quad) - 1.0 / 3.0).abs();
        // trapezoid error for x^2 is h^2 / 6 exactly
        assert!((err - 1e-4 / 6.0).abs() < 1e-12, "{err}");
    }

    #[test]
    fn inner_q_examples() {
        let g = line(11);
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let z = SpaceTimeField::zeros(g.len(), 11);
        assert_eq!(inner_l2_q(&g, &z, &z, tg.dt()).unwrap(), 0.0);
        let one = SpaceTimeField::constant(g.len(), 11, 1.0);
        assert!((inner_l2_q(&g, &one, &one, tg.dt()).unwrap() - 1.0).abs() < 1e-14);
        let short = SpaceTimeField::zeros(g.len(), 10);
        assert!(inner_l2_q(&g, &one, &short, tg.dt()).is_err());
    }

    #[test]
    fn time_grid_invariants() {
        let tg = TimeGrid::new(0.7, 13).unwrap();
        assert!((tg.dt() * 13.0 - 0.7).abs() < 1e-12);
        assert_eq!(tg.time(13), 0.7);
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(0.0, 4).is_err());
    }
}
