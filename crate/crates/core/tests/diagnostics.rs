mod common;

use common::{random_control, small_problem};
use tumor_ocp::diagnostics::{
    continuity_check, gradient_check, hessian_check, manufactured, mms_convergence, mms_error, Refinement,
};
use tumor_ocp::Control;

const EPS: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

#[test]
fn gradient_check_trend_and_reproducibility() {
    let problem = small_problem();
    let u = random_control(&problem, 1, 0.5);
    let a = gradient_check(&problem, &u, 3, &EPS, 1e-3, 7).unwrap();
    assert!(a.pass, "{a:?}");
    let err: Vec<f64> = a.details.iter().map(|(_, v)| *v).collect();
    // truncation dominates at the largest step
    assert!(err[0] > err[1], "{err:?}");
    assert!(a.measurement("fd_rel_error@1e-4").is_some());

    let b = gradient_check(&problem, &u, 3, &EPS, 1e-3, 7).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = gradient_check(&problem, &u, 3, &EPS, 1e-3, 8).unwrap();
    assert_ne!(a.digest, c.digest);

    assert!(gradient_check(&problem, &u, 0, &EPS, 1e-3, 7).is_err());
    assert!(gradient_check(&problem, &u, 3, &[], 1e-3, 7).is_err());
}

#[test]
fn hessian_check_passes_away_from_the_optimum() {
    let problem = small_problem();
    let u = random_control(&problem, 2, 0.5);
    let r = hessian_check(&problem, &u, 2, 1e-3, 3).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(hessian_check(&problem, &u, 2, 0.0, 3).is_err());
}

#[test]
fn continuity_check_sequences() {
    let problem = small_problem();
    let u = random_control(&problem, 3, 0.5);
    let r = continuity_check(&problem, &u, &[1e-1, 1e-2, 1e-3], 4).unwrap();
    assert!(r.pass, "{r:?}");
    assert_eq!(r.measurement("zero_perturbation").unwrap().value, 0.0);
    assert!(continuity_check(&problem, &u, &[], 4).is_err());
    assert!(continuity_check(&problem, &Control::zeros(&problem), &[1e-1, -1.0], 4).is_err());
}

#[test]
fn manufactured_solutions_converge() {
    let (report, [temporal, spatial]) = mms_convergence(3).unwrap();
    assert!(report.pass, "{report:?}");
    assert!((temporal.order - 1.0).abs() <= 0.2);
    assert!((spatial.order - 2.0).abs() <= 0.3);
    for s in [&temporal, &spatial] {
        let finest = *s.errors.last().unwrap();
        assert!(s.errors[..s.errors.len() - 1].iter().all(|&e| e > finest));
    }
    let m = manufactured(17, 8, Refinement::Time).unwrap();
    assert!(mms_error(&m).unwrap() > 0.0);
    assert!(manufactured(1, 8, Refinement::Time).is_err());
}
