mod common;

use common::{random_control, small_config, small_problem};
use tumor_ocp::grid::SpaceTimeField;
use tumor_ocp::objective::{evaluate, GradientPair};
use tumor_ocp::optimality::projection_residual;
use tumor_ocp::optimizer::{
    self, multipliers_in_subdifferential, recover_multipliers, stationarity_residual, OptimizerStatus,
};
use tumor_ocp::runner::FieldSpec;
use tumor_ocp::{Control, Problem};

fn constant_gradient(problem: &Problem, a: f64, b: f64) -> GradientPair {
    let (n, s) = (problem.nodes(), problem.steps());
    GradientPair {
        d1: SpaceTimeField::constant(n, s, a),
        d2: SpaceTimeField::constant(n, s, b),
    }
}

#[test]
fn uncontrolled_targets_are_stationary_at_zero() {
    let mut cfg = small_config();
    cfg.cost.target_q = FieldSpec::Uncontrolled;
    cfg.cost.target_omega = FieldSpec::Uncontrolled;
    let problem = cfg.build_problem().unwrap();
    let res = optimizer::solve(&problem, &cfg.optimizer_config(), &Control::zeros(&problem)).unwrap();
    assert_eq!(res.status, OptimizerStatus::Converged);
    assert_eq!(res.history.len(), 1);
    assert!(res.residual <= cfg.optimizer.stat_tol);
    assert_eq!(res.control().max_abs(), 0.0);
}

#[test]
fn converges_with_monotone_feasible_history() {
    let cfg = small_config();
    let problem = cfg.build_problem().unwrap();
    let start = random_control(&problem, 3, 2.0);
    let res = optimizer::solve(&problem, &cfg.optimizer_config(), &start).unwrap();
    assert_eq!(res.status, OptimizerStatus::Converged);
    assert!(res.residual <= 1e-8);
    assert!(res.history.windows(2).all(|w| w[1].objective <= w[0].objective));
    assert!(res.history.iter().all(|r| r.bound_violations == 0));
    let (p1, p2) = projection_residual(&problem, res.control(), &res.eval.adjoint, &res.multipliers);
    assert!(p1.max(p2) <= 1e-6);
    assert!(multipliers_in_subdifferential(res.control(), &res.multipliers));

    let moved = res.control().axpy(1.0, &Control {
        u1: SpaceTimeField::constant(problem.nodes(), problem.steps(), 0.1),
        u2: SpaceTimeField::constant(problem.nodes(), problem.steps(), 0.1),
        bounds: problem.bounds(),
    });
    let (q1, q2) = projection_residual(&problem, &moved, &res.eval.adjoint, &res.multipliers);
    assert!(q1 > 0.0 && q2 > 0.0);
}

#[test]
fn stationarity_residual_examples() {
    let problem = small_problem();
    let zero = Control::zeros(&problem);
    let kappa = problem.cost.kappa;
    assert_eq!(stationarity_residual(&problem, &zero, &constant_gradient(&problem, 0.0, 0.0), 1.0), 0.0);
    for tau in [1e-3, 1.0, 20.0] {
        let g = constant_gradient(&problem, 0.25 * kappa, -0.25 * kappa);
        assert_eq!(stationarity_residual(&problem, &zero, &g, tau), 0.0);
    }
    let u = random_control(&problem, 5, 1.0);
    let ev = evaluate(&problem, &u).unwrap();
    assert!(stationarity_residual(&problem, &u, &ev.gradient, 1.0 / problem.cost.b3) > 0.0);
}

#[test]
fn multiplier_cases() {
    let problem = small_problem();
    let zero = Control::zeros(&problem);
    let lam = recover_multipliers(&problem, &zero, &constant_gradient(&problem, 0.0, 0.0));
    assert_eq!(lam.lam1.max_abs(), 0.0);
    assert_eq!(lam.lam2.max_abs(), 0.0);

    let mut u = random_control(&problem, 6, 1.0);
    u.u1.slice_mut(0)[0] = 0.0;
    let g = constant_gradient(&problem, 0.5 * problem.cost.kappa, -5.0);
    let lam = recover_multipliers(&problem, &u, &g);
    for (&x, &l) in u.u1.as_slice().iter().zip(lam.lam1.as_slice()) {
        if x > 0.0 {
            assert_eq!(l, 1.0);
        } else if x < 0.0 {
            assert_eq!(l, -1.0);
        } else {
            assert_eq!(l, -0.5);
        }
    }
    assert!(multipliers_in_subdifferential(&u, &lam));
    let mut bad = lam.clone();
    bad.lam1.slice_mut(0)[0] = 1.5;
    assert!(!multipliers_in_subdifferential(&u, &bad));
}

#[test]
fn rejects_invalid_configuration() {
    let cfg = small_config();
    let problem = cfg.build_problem().unwrap();
    let mut oc = cfg.optimizer_config();
    oc.backtrack_factor = 1.5;
    assert!(optimizer::solve(&problem, &oc, &Control::zeros(&problem)).is_err());
}
