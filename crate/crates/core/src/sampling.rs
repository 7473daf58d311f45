//! Seeded random controls shared by the certification and diagnostic checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::control::Control;
use crate::grid::SpaceTimeField;
use crate::problem::Problem;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_field(rng: &mut SeededRng, nodes: usize, slices: usize) -> SpaceTimeField {
    let data = (0..nodes * slices).map(|_| rng.sample(StandardNormal)).collect();
    SpaceTimeField::from_vec(nodes, data).expect("length is nodes * slices")
}

pub fn uniform_field(rng: &mut SeededRng, nodes: usize, slices: usize, lo: f64, hi: f64) -> SpaceTimeField {
    let data = (0..nodes * slices).map(|_| rng.random_range(lo..hi)).collect();
    SpaceTimeField::from_vec(nodes, data).expect("length is nodes * slices")
}

/// Standard-normal control with unit `L²(Q)²` norm.
pub fn gaussian_direction(rng: &mut SeededRng, problem: &Problem) -> Control {
    let (n, s) = (problem.nodes(), problem.steps());
    let c = Control {
        u1: gaussian_field(rng, n, s),
        u2: gaussian_field(rng, n, s),
        bounds: problem.bounds(),
    };
    let norm = c.norm(problem);
    c.scale(1.0 / norm)
}
