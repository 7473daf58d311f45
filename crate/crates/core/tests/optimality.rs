mod common;

use common::{small_config, small_problem};
use tumor_ocp::grid::SpaceTimeField;
use tumor_ocp::optimality::{
    classify_cone, coercivity_scan, default_act_tol, growth_probe, sample_critical_directions,
    sparsity_bands, ConeClass, ConeClassification,
};
use tumor_ocp::optimizer::{self, OptimizeResult};
use tumor_ocp::sensitivity::AdjointTrajectory;
use tumor_ocp::{Control, Error, Problem};

fn optimum(problem: &Problem) -> OptimizeResult {
    optimizer::solve(problem, &small_config().optimizer_config(), &Control::zeros(problem)).unwrap()
}

fn adjoint_with_p(problem: &Problem, p: f64) -> AdjointTrajectory {
    let (n, s) = (problem.nodes(), problem.steps() + 1);
    AdjointTrajectory {
        time: problem.time,
        p: SpaceTimeField::constant(n, s, p),
        q: SpaceTimeField::zeros(n, s),
        r: SpaceTimeField::zeros(n, s),
    }
}

fn uniform(problem: &Problem, u1: f64) -> Control {
    let (n, s) = (problem.nodes(), problem.steps());
    Control {
        u1: SpaceTimeField::constant(n, s, u1),
        u2: SpaceTimeField::zeros(n, s),
        bounds: problem.bounds(),
    }
}

fn first_class(cls: &ConeClassification) -> ConeClass {
    cls.classes[0][0]
}

#[test]
fn cone_cases() {
    let problem = small_problem();
    let (kappa, b3) = (problem.cost.kappa, problem.cost.b3);
    let tol = default_act_tol(&problem);

    // u1 = 0 and |-h p| = kappa / 2
    let cls = classify_cone(&problem, &uniform(&problem, 0.0), &adjoint_with_p(&problem, 0.5 * kappa), tol);
    assert_eq!(first_class(&cls), ConeClass::ForcedZero);
    // second component sees r = 0, hence |d| = 0 != kappa
    assert!(cls.is_degenerate());

    // u1 at the lower bound with |-h p + b3 lo| = kappa
    let lo = problem.bounds().lo1;
    let cls = classify_cone(&problem, &uniform(&problem, lo), &adjoint_with_p(&problem, kappa + b3 * lo), tol);
    assert_eq!(first_class(&cls), ConeClass::Nonneg);
    let hi = problem.bounds().hi1;
    let cls = classify_cone(&problem, &uniform(&problem, hi), &adjoint_with_p(&problem, b3 * hi - kappa), tol);
    assert_eq!(first_class(&cls), ConeClass::Nonpos);

    // interior nonzero u1 with |-h p + b3 u1| = kappa
    let cls = classify_cone(&problem, &uniform(&problem, 0.5), &adjoint_with_p(&problem, 0.5 * b3 - kappa), tol);
    assert_eq!(first_class(&cls), ConeClass::Free);

    // u1 = 0 on the switching boundary: sign restricted
    let cls = classify_cone(&problem, &uniform(&problem, 0.0), &adjoint_with_p(&problem, kappa), tol);
    assert_eq!(first_class(&cls), ConeClass::Nonneg);
    let cls = classify_cone(&problem, &uniform(&problem, 0.0), &adjoint_with_p(&problem, -kappa), tol);
    assert_eq!(first_class(&cls), ConeClass::Nonpos);
}

#[test]
fn smooth_case_cone_without_sparsity() {
    let mut problem = small_problem();
    problem.cost.kappa = 0.0;
    let b3 = problem.cost.b3;
    let tol = 1e-9;
    // |-h p + b3 u| = 0 means the cell is free; anything else is forced to zero
    let cls = classify_cone(&problem, &uniform(&problem, 0.2), &adjoint_with_p(&problem, 0.2 * b3), tol);
    assert_eq!(first_class(&cls), ConeClass::Free);
    let cls = classify_cone(&problem, &uniform(&problem, 0.0), &adjoint_with_p(&problem, 0.0), tol);
    assert_eq!(first_class(&cls), ConeClass::Free);
    let cls = classify_cone(&problem, &uniform(&problem, 0.2), &adjoint_with_p(&problem, 0.0), tol);
    assert_eq!(first_class(&cls), ConeClass::ForcedZero);
}

#[test]
fn degenerate_cone_has_no_directions() {
    let problem = small_problem();
    let kappa = problem.cost.kappa;
    let cls = classify_cone(&problem, &uniform(&problem, 0.0), &adjoint_with_p(&problem, 0.5 * kappa), 1e-9);
    assert!(matches!(
        sample_critical_directions(&problem, &cls, 5, 1),
        Err(Error::ConeDegenerate)
    ));
}

#[test]
fn free_cone_directions_are_unit_gaussians() {
    let problem = small_problem();
    let size = problem.nodes() * problem.steps();
    let cls = ConeClassification {
        nodes: problem.nodes(),
        slices: problem.steps(),
        classes: [vec![ConeClass::Free; size], vec![ConeClass::Free; size]],
        act_tol: 0.0,
    };
    let dirs = sample_critical_directions(&problem, &cls, 8, 3).unwrap();
    for v in &dirs {
        assert!((v.norm(&problem) - 1.0).abs() <= 1e-12);
        assert!(v.u1.as_slice().iter().all(|x| *x != 0.0));
    }
}

#[test]
fn certificates_at_a_converged_solution() {
    let problem = small_problem();
    let res = optimum(&problem);
    let u = res.control();
    let adj = &res.eval.adjoint;

    let bands = sparsity_bands(&problem, u, adj, 1e-4);
    assert!(bands.agrees());
    assert!(bands.components.iter().all(|c| c.band_agreement == 1.0));

    let cls = classify_cone(&problem, u, adj, default_act_tol(&problem));
    let dirs = sample_critical_directions(&problem, &cls, 20, 4).unwrap();
    for v in &dirs {
        assert!(cls.admits(v));
        assert!((v.norm(&problem) - 1.0).abs() <= 1e-12);
    }
    let scan = coercivity_scan(&problem, &res.eval.frozen, adj, &dirs).unwrap();
    assert!(scan.min_quotient > 0.0);
    assert_eq!(scan.quotients[scan.witness_index], scan.min_quotient);
    // the quotient is homogeneous of degree zero
    let doubled: Vec<Control> = dirs.iter().map(|v| v.scale(2.0)).collect();
    let scan2 = coercivity_scan(&problem, &res.eval.frozen, adj, &doubled).unwrap();
    for (a, b) in scan.quotients.iter().zip(&scan2.quotients) {
        assert!((a - b).abs() <= 1e-10);
    }

    let growth = growth_probe(&problem, u, 1e-2, 20, 5).unwrap();
    assert_eq!(growth.negative_gaps, 0);
    assert_eq!(growth.gaps.len(), 20);
    assert!(growth.gaps.iter().all(|&g| growth.min_gap <= g));
}

#[test]
fn sparsity_responds_to_kappa() {
    let mut problem = small_problem();
    let res = optimum(&problem);
    let adj = &res.eval.adjoint;
    let hp = adj.p.max_abs() * problem.cost.h_field.max_abs();
    problem.cost.kappa = 10.0 * hp.max(adj.r.max_abs());
    let big = optimum(&problem);
    assert_eq!(big.control().max_abs(), 0.0);
    let report = sparsity_bands(&problem, big.control(), &big.eval.adjoint, 1e-4);
    assert!(report.components.iter().all(|c| c.zero_fraction == 1.0));

    problem.cost.kappa = 1e-8;
    let tiny = optimum(&problem);
    let report = sparsity_bands(&problem, tiny.control(), &tiny.eval.adjoint, 1e-4);
    assert!(report.components.iter().all(|c| c.zero_fraction < 0.05), "{report:?}");
}

#[test]
fn growth_probe_rejects_bad_arguments() {
    let problem = small_problem();
    let u = Control::zeros(&problem);
    assert!(growth_probe(&problem, &u, 0.0, 5, 1).is_err());
    assert!(growth_probe(&problem, &u, 1e-2, 0, 1).is_err());
}
