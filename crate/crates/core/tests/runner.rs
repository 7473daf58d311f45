mod common;

use std::fs;
use std::path::Path;

use common::small_config;
use proptest::prelude::*;
use serde_json::Value;
use tumor_ocp::grid::{GridSpec, SpaceTimeField};
use tumor_ocp::runner::io::{decode_field, encode_field};
use tumor_ocp::runner::{
    error_exit_code, read_field, run_certify, run_mms, run_optimize, run_simulate, write_field,
    ExperimentConfig, FieldDump, FieldSpec, RunStatus,
};
use tumor_ocp::Error;

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_every_snapshot_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let out = run_simulate(&cfg, dir.path()).unwrap();
    assert_eq!(out.status, RunStatus::Success);
    for name in ["mu", "phi", "sigma"] {
        let dump = read_field(&dir.path().join(format!("{name}.bin"))).unwrap();
        assert_eq!(dump.data.slices(), cfg.time.steps + 1);
        assert_eq!(dump.data.nodes(), cfg.grid.counts[0]);
        assert_eq!(dump.dt, cfg.time.t_final / cfg.time.steps as f64);
    }
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["status"], "success");
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], cfg.seed);
    assert_eq!(manifest["partial"], false);
    // the echoed config reproduces the run
    let echoed: ExperimentConfig = serde_json::from_value(manifest["config"].clone()).unwrap();
    assert_eq!(echoed, cfg);
    let listed = manifest["artifacts"].as_array().unwrap();
    assert_eq!(listed.len(), out.artifacts.len());
    for a in listed {
        let bytes = fs::read(dir.path().join(a["name"].as_str().unwrap())).unwrap();
        assert_eq!(a["bytes"].as_u64().unwrap() as usize, bytes.len());
        assert_eq!(a["sha256"].as_str().unwrap(), tumor_ocp::runner::io::sha256_hex(&bytes));
    }
    assert_eq!(json(&dir.path().join("separation.json"))["clamp_count"], 0);
}

#[test]
fn certify_after_optimize_reports_everything() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.certification.directions = 10;
    cfg.certification.growth_probes = 10;
    cfg.output.csv = true;
    run_optimize(&cfg, dir.path()).unwrap();
    for name in ["u1.bin", "u2.bin", "p.bin", "q.bin", "r.bin", "lam1.bin", "lam2.bin", "history.csv", "u1.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let optimized = json(&dir.path().join("optimize.json"));
    assert_eq!(optimized["status"], "converged");

    let out = run_certify(&cfg, dir.path()).unwrap();
    assert_eq!(out.status, RunStatus::Success);
    for name in ["sparsity.json", "cone.json", "coercivity.json", "growth.json", "certificate.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let cert = json(&dir.path().join("certificate.json"));
    assert_eq!(cert["pass"], true);
    for c in cert["certificates"].as_array().unwrap() {
        assert!(c["pass"].is_boolean());
    }
    // warm-started from the optimize run, so the optimizer stops at once
    let again = json(&dir.path().join("optimize.json"));
    assert_eq!(again["iterations"], 0);
}

#[test]
fn failed_certificates_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.optimizer.max_outer_iters = 1;
    cfg.certification.directions = 5;
    cfg.certification.growth_probes = 5;
    let out = run_certify(&cfg, dir.path()).unwrap();
    assert_eq!(out.status, RunStatus::CertificationFailure);
    assert_eq!(out.status.exit_code(), 3);
    assert_eq!(json(&dir.path().join("manifest.json"))["status"], "certification-failure");
}

#[test]
fn solver_failures_leave_a_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.init.phi0 = FieldSpec::Constant { value: 0.999999 };
    cfg.solver.clamp_budget = 0;
    let err = run_optimize(&cfg, dir.path()).unwrap_err();
    assert_eq!(error_exit_code(&err), 1);
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["status"], "failed");
    assert!(manifest["error"].is_string());
}

#[test]
fn config_errors_are_path_qualified() {
    let mut cfg = small_config();
    cfg.cost.kappa = 0.0;
    let err = cfg.validate().unwrap_err();
    assert!(err.to_string().contains("cost.kappa"), "{err}");
    assert_eq!(error_exit_code(&err), 2);
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(run_mms(&cfg, dir.path()), Err(Error::Config(_))));

    let mut cfg = small_config();
    cfg.init.phi0 = FieldSpec::File { path: dir.path().join("missing.bin") };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    assert!(matches!(
        ExperimentConfig::from_path(&dir.path().join("nope.toml")),
        Err(Error::Config(_))
    ));
}

#[test]
fn initial_data_from_a_field_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let grid = GridSpec::new(1, &cfg.grid.extents, &cfg.grid.counts).unwrap();
    let values: Vec<f64> = (0..grid.len()).map(|j| 0.3 * (j as f64 / grid.len() as f64) - 0.1).collect();
    write_field(&dir.path().join("phi0.bin"), &FieldDump::spatial(&grid, &values).unwrap()).unwrap();
    let mut run = cfg.clone();
    // relative paths resolve against the config file's directory
    run.init.phi0 = FieldSpec::File { path: "phi0.bin".into() };
    fs::write(dir.path().join("run.toml"), run.to_toml()).unwrap();
    let loaded = ExperimentConfig::from_path(&dir.path().join("run.toml")).unwrap();
    let problem = loaded.build_problem().unwrap();
    assert_eq!(problem.init.phi0, values);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_dumps_round_trip_bit_exactly(
        nodes in 3usize..12,
        slices in 1usize..6,
        seed in any::<u64>(),
    ) {
        let grid = GridSpec::new(1, &[1.0], &[nodes]).unwrap();
        let mut g = tumor_ocp::sampling::rng(seed);
        let data = tumor_ocp::sampling::gaussian_field(&mut g, nodes, slices);
        let dump = FieldDump::new(&grid, 0.125, data.clone()).unwrap();
        let back = decode_field(&encode_field(&dump)).unwrap();
        prop_assert_eq!(back.data.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            data.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back, dump);
    }
}

#[test]
fn shapes_are_checked_on_dump() {
    let grid = GridSpec::new(1, &[1.0], &[5]).unwrap();
    assert!(FieldDump::new(&grid, 0.1, SpaceTimeField::zeros(4, 2)).is_err());
}
