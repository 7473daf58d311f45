#![allow(dead_code)]

use tumor_ocp::runner::ExperimentConfig;
use tumor_ocp::sampling::{rng, uniform_field};
use tumor_ocp::{Control, Problem};

/// A coarse 1D variant of the baseline that keeps nonlinear solves cheap.
pub fn small_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        r#"
        seed = 5
        [grid]
        dim = 1
        extents = [1.0]
        counts = [24]
        [time]
        t_final = 0.5
        steps = 32
        "#,
    )
    .expect("small config parses")
}

pub fn small_problem() -> Problem {
    small_config().build_problem().expect("small problem")
}

pub fn baseline_problem() -> Problem {
    ExperimentConfig::default().build_problem().expect("baseline problem")
}

/// Uniform control in `[-scale, scale]` on every cell (clipped to the box).
pub fn random_control(problem: &Problem, seed: u64, scale: f64) -> Control {
    let mut g = rng(seed);
    let (n, s) = (problem.nodes(), problem.steps());
    Control {
        u1: uniform_field(&mut g, n, s, -scale, scale),
        u2: uniform_field(&mut g, n, s, -scale, scale),
        bounds: problem.bounds(),
    }
    .project()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
