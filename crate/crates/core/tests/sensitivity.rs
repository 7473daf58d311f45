mod common;

use common::{random_control, small_problem};
use tumor_ocp::grid::SpaceTimeField;
use tumor_ocp::sampling::{gaussian_field, rng};
use tumor_ocp::sensitivity::{
    solve_adjoint, solve_bilinearized, solve_generalized, solve_linearized, FlagSet, FrozenState,
    LinTrajectory,
};
use tumor_ocp::state::StateTrajectory;
use tumor_ocp::{solve_state, Control, Forcing, Problem};

fn frozen_at(problem: &Problem, u: &Control) -> FrozenState {
    FrozenState::new(problem, solve_state(problem, u, None).unwrap()).unwrap()
}

fn fields(l: &LinTrajectory) -> [&SpaceTimeField; 3] {
    [&l.eta, &l.xi, &l.theta]
}

fn max_diff(a: &LinTrajectory, b: &LinTrajectory) -> f64 {
    fields(a)
        .iter()
        .zip(fields(b))
        .map(|(x, y)| x.axpy(-1.0, y).max_abs())
        .fold(0.0, f64::max)
}

/// Max-norm of `S(u + eps h) - S(u) - sum_i c_i L_i` over the three fields.
fn remainder(base: &StateTrajectory, moved: &StateTrajectory, terms: &[(f64, &LinTrajectory)]) -> f64 {
    let pairs = [
        (&moved.mu, &base.mu, 0),
        (&moved.phi, &base.phi, 1),
        (&moved.sigma, &base.sigma, 2),
    ];
    pairs
        .iter()
        .map(|(m, b, i)| {
            let mut d = m.axpy(-1.0, b);
            for (c, l) in terms {
                d = d.axpy(-c, fields(l)[*i]);
            }
            d.max_abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn zero_data_gives_zero_solutions() {
    let problem = small_problem();
    let u = random_control(&problem, 1, 0.5);
    let frozen = frozen_at(&problem, &u);
    let zero = Control::zeros(&problem);
    let h = random_control(&problem, 2, 1.0);
    assert_eq!(solve_linearized(&problem, &frozen, &zero).unwrap().max_abs(), 0.0);
    assert_eq!(solve_bilinearized(&problem, &frozen, &zero, &h).unwrap().max_abs(), 0.0);
    assert_eq!(solve_bilinearized(&problem, &frozen, &h, &zero).unwrap().max_abs(), 0.0);
    for flags in [[1, 1, 1, 0], [0, 1, 1, 0]] {
        let out = solve_generalized(&problem, &frozen, FlagSet::from_ints(flags).unwrap(), None, None).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }
    assert!(FlagSet::from_ints([2, 0, 0, 0]).is_err());
}

#[test]
fn initial_data_gate() {
    let problem = small_problem();
    let frozen = frozen_at(&problem, &Control::zeros(&problem));
    let flags = FlagSet::from_ints([1, 0, 0, 1]).unwrap();
    let out = solve_generalized(&problem, &frozen, flags, None, None).unwrap();
    assert_eq!(out.xi.slice(0), &problem.init.phi0[..]);
    let lin = solve_linearized(&problem, &frozen, &random_control(&problem, 4, 1.0)).unwrap();
    assert_eq!(lin.eta.slice(0).iter().chain(lin.xi.slice(0)).fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
}

#[test]
fn linearized_solve_is_linear() {
    let problem = small_problem();
    let frozen = frozen_at(&problem, &random_control(&problem, 1, 0.5));
    let h = random_control(&problem, 2, 1.0);
    let k = random_control(&problem, 3, 1.0);
    let lh = solve_linearized(&problem, &frozen, &h).unwrap();
    let lk = solve_linearized(&problem, &frozen, &k).unwrap();
    let scaled = solve_linearized(&problem, &frozen, &h.scale(-2.5)).unwrap();
    let sum = solve_linearized(&problem, &frozen, &h.axpy(1.0, &k)).unwrap();
    let scale = lh.max_abs().max(lk.max_abs());
    for (x, y, z) in fields(&sum).into_iter().zip(fields(&lh)).zip(fields(&lk)).map(|((a, b), c)| (a, b, c)) {
        assert!(x.axpy(-1.0, y).axpy(-1.0, z).max_abs() <= 1e-10 * scale);
    }
    for (x, y) in fields(&scaled).into_iter().zip(fields(&lh)) {
        assert!(x.axpy(2.5, y).max_abs() <= 1e-10 * scale);
    }
}

#[test]
fn generalized_sources_superpose() {
    let problem = small_problem();
    let frozen = frozen_at(&problem, &random_control(&problem, 1, 0.5));
    let h = random_control(&problem, 2, 1.0);
    let mut g = rng(8);
    let (n, s) = (problem.nodes(), problem.steps() + 1);
    let f = Forcing {
        f1: gaussian_field(&mut g, n, s),
        f2: gaussian_field(&mut g, n, s),
        f3: gaussian_field(&mut g, n, s),
    };
    let both = FlagSet::from_ints([1, 1, 1, 0]).unwrap();
    let all = solve_generalized(&problem, &frozen, both, Some(&h), Some(&f)).unwrap();
    let only_h = solve_generalized(&problem, &frozen, FlagSet::LINEARIZED, Some(&h), Some(&f)).unwrap();
    let only_f = solve_generalized(&problem, &frozen, FlagSet::BILINEARIZED, Some(&h), Some(&f)).unwrap();
    for ((a, b), c) in fields(&all).into_iter().zip(fields(&only_h)).zip(fields(&only_f)) {
        assert!(a.axpy(-1.0, b).axpy(-1.0, c).max_abs() <= 1e-10 * all.max_abs().max(1.0));
    }
}

#[test]
fn bilinearized_solve_is_symmetric() {
    let problem = small_problem();
    let frozen = frozen_at(&problem, &random_control(&problem, 1, 0.5));
    let h = random_control(&problem, 2, 1.0);
    let k = random_control(&problem, 3, 1.0);
    let hk = solve_bilinearized(&problem, &frozen, &h, &k).unwrap();
    let kh = solve_bilinearized(&problem, &frozen, &k, &h).unwrap();
    assert!(hk.max_abs() > 0.0);
    assert!(max_diff(&hk, &kh) <= 1e-10 * hk.max_abs());
}

#[test]
fn first_order_taylor_remainder_vanishes() {
    let problem = small_problem();
    let u = random_control(&problem, 1, 0.5);
    let frozen = frozen_at(&problem, &u);
    let h = random_control(&problem, 2, 1.0);
    let lin = solve_linearized(&problem, &frozen, &h).unwrap();
    let quotients: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&eps| {
            let moved = solve_state(&problem, &u.axpy(eps, &h), None).unwrap();
            remainder(&frozen.state, &moved, &[(eps, &lin)]) / eps
        })
        .collect();
    assert!(quotients.windows(2).all(|w| w[1] < 0.2 * w[0]), "{quotients:?}");
}

#[test]
fn second_order_taylor_remainder_is_small() {
    let problem = small_problem();
    let u = random_control(&problem, 1, 0.5);
    let frozen = frozen_at(&problem, &u);
    let h = random_control(&problem, 2, 1.0);
    let lin = solve_linearized(&problem, &frozen, &h).unwrap();
    let bil = solve_bilinearized(&problem, &frozen, &h, &h).unwrap();
    let quotients: Vec<f64> = [1e-1, 5e-2, 2.5e-2]
        .iter()
        .map(|&eps| {
            let moved = solve_state(&problem, &u.axpy(eps, &h), None).unwrap();
            remainder(&frozen.state, &moved, &[(eps, &lin), (0.5 * eps * eps, &bil)]) / (eps * eps)
        })
        .collect();
    // o(eps^2): the quotient itself shrinks roughly linearly
    assert!(quotients.windows(2).all(|w| w[1] < 0.7 * w[0]), "{quotients:?}");
}

#[test]
fn adjoint_terminal_slice() {
    let problem = small_problem();
    let frozen = frozen_at(&problem, &random_control(&problem, 1, 0.5));
    let adj = solve_adjoint(&problem, &frozen).unwrap();
    let nt = problem.steps();
    assert!(adj.p.slice(nt).iter().all(|&v| v == 0.0));
    assert!(adj.r.slice(nt).iter().all(|&v| v == 0.0));
    let c = &problem.cost;
    for j in 0..problem.nodes() {
        let expect = c.b2 * (frozen.state.phi.slice(nt)[j] - c.target_omega[j]) / problem.model.beta;
        assert_eq!(adj.q.slice(nt)[j], expect);
    }
}

#[test]
fn adjoint_vanishes_without_tracking() {
    let mut problem = small_problem();
    problem.cost.b1 = 0.0;
    problem.cost.b2 = 0.0;
    let frozen = frozen_at(&problem, &random_control(&problem, 1, 0.5));
    assert_eq!(solve_adjoint(&problem, &frozen).unwrap().max_abs(), 0.0);
}

#[test]
fn linearized_response_is_bounded() {
    let problem = small_problem();
    let frozen = frozen_at(&problem, &random_control(&problem, 1, 0.5));
    let mut g = rng(21);
    let ratios: Vec<f64> = (0..6)
        .map(|_| {
            let h = tumor_ocp::sampling::gaussian_direction(&mut g, &problem);
            let lin = solve_linearized(&problem, &frozen, &h).unwrap();
            let state_norm: f64 = fields(&lin)
                .iter()
                .map(|f| tumor_ocp::grid::inner_l2_q(&problem.grid, f, f, problem.dt()).unwrap().sqrt())
                .sum();
            state_norm / h.norm(&problem)
        })
        .collect();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    // white-noise directions differ in smooth content, which is what the
    // state responds to, so the spread is a few units rather than 1
    assert!(lo > 0.0 && hi / lo <= 4.0, "{ratios:?}");
}
