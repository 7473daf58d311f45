use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use tumor_ocp::objective::{evaluate, hessian_form};
use tumor_ocp::runner::run::diagnostic_control;
use tumor_ocp::runner::ExperimentConfig;
use tumor_ocp::sensitivity::{solve_adjoint, FrozenState};
use tumor_ocp::state::solve_state;

fn solvers(c: &mut Criterion) {
    let problem = ExperimentConfig::default().build_problem().unwrap();
    let u = diagnostic_control(&problem, 1);
    let ev = evaluate(&problem, &u).unwrap();
    let h = diagnostic_control(&problem, 2);

    let mut g = c.benchmark_group("baseline");
    g.sample_size(20);
    g.bench_function("forward", |b| {
        b.iter(|| solve_state(black_box(&problem), black_box(&u), None).unwrap())
    });
    g.bench_function("adjoint", |b| {
        b.iter(|| solve_adjoint(&problem, black_box(&ev.frozen)).unwrap())
    });
    g.bench_function("frozen_coefficients", |b| {
        b.iter(|| FrozenState::new(&problem, black_box(ev.state().clone())).unwrap())
    });
    g.bench_function("hessian_form", |b| {
        b.iter(|| hessian_form(&problem, &ev.frozen, &ev.adjoint, black_box(&h), black_box(&h)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, solvers);
criterion_main!(benches);
