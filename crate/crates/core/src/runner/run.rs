//! The five experiment drivers behind the CLI subcommands. Each run owns its
//! output directory, writes its artifacts there and finishes with
//! `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use crate::control::Control;
use crate::diagnostics::{continuity_check, gradient_check, hessian_check, mms_convergence, CheckReport};
use crate::error::{Error, Result};
use crate::grid::SpaceTimeField;
use crate::objective::Evaluation;
use crate::optimality::{
    classify_cone, coercivity_scan, growth_probe, projection_residual, sample_critical_directions,
    sparsity_bands, variational_inequality_slack,
};
use crate::optimizer::{self, multipliers_in_subdifferential, OptimizeResult, OptimizerStatus};
use crate::problem::Problem;
use crate::runner::config::ExperimentConfig;
use crate::runner::io::{encode_field, read_field, sha256_hex, write_field_csv, FieldDump};
use crate::sampling::{rng, uniform_field};
use crate::state::{check_separation, solve_state, StateTrajectory};

/// Exit status of a completed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Success,
    /// A mandatory certificate or check failed.
    CertificationFailure,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Success => 0,
            Self::CertificationFailure => 3,
        }
    }
}

/// Exit code for a run that returned an error.
pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        _ => 1,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub out_dir: PathBuf,
    pub artifacts: Vec<Artifact>,
    pub summary: Value,
}

struct RunContext<'a> {
    cfg: &'a ExperimentConfig,
    command: &'static str,
    out: PathBuf,
    artifacts: Vec<Artifact>,
    timings: Vec<(String, f64)>,
    start: Instant,
}

impl<'a> RunContext<'a> {
    fn new(cfg: &'a ExperimentConfig, command: &'static str, out: &Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        Ok(Self {
            cfg,
            command,
            out: out.to_path_buf(),
            artifacts: Vec::new(),
            timings: Vec::new(),
            start: Instant::now(),
        })
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.out.join(name), bytes)?;
        self.artifacts.push(Artifact {
            name: name.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_field(&mut self, name: &str, problem: &Problem, dt: f64, data: &SpaceTimeField) -> Result<()> {
        let dump = FieldDump::new(&problem.grid, dt, data.clone())?;
        self.write_bytes(&format!("{name}.bin"), &encode_field(&dump))?;
        if self.cfg.output.csv {
            let csv = format!("{name}.csv");
            write_field_csv(&self.out.join(&csv), &dump)?;
            let bytes = fs::read(self.out.join(&csv))?;
            self.artifacts.push(Artifact {
                name: csv,
                bytes: bytes.len(),
                sha256: sha256_hex(&bytes),
            });
        }
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Format(format!("cannot serialize {name}: {e}")))?;
        self.write_bytes(name, format!("{text}\n").as_bytes())
    }

    fn time(&mut self, label: &str, since: Instant) {
        self.timings.push((label.into(), since.elapsed().as_secs_f64()));
    }

    fn manifest(&self, status: &str, summary: &Value, error: Option<&str>) -> Result<()> {
        let manifest = json!({
            "tool": "tumor-ocp",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.cfg.seed,
            "status": status,
            "partial": error.is_some() && !self.artifacts.is_empty(),
            "error": error,
            "config": self.cfg,
            "artifacts": self.artifacts,
            "summary": summary,
            "timings_s": self.timings.iter().map(|(k, v)| json!({"step": k, "seconds": v})).collect::<Vec<_>>(),
            "wall_time_s": self.start.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Format(format!("cannot serialize manifest: {e}")))?;
        fs::write(self.out.join("manifest.json"), format!("{text}\n"))?;
        Ok(())
    }

    fn finish(self, status: RunStatus, summary: Value) -> Result<RunOutcome> {
        let label = match status {
            RunStatus::Success => "success",
            RunStatus::CertificationFailure => "certification-failure",
        };
        self.manifest(label, &summary, None)?;
        Ok(RunOutcome {
            status,
            out_dir: self.out,
            artifacts: self.artifacts,
            summary,
        })
    }
}

/// Runs `body`; on error the manifest still gets written, flagged as partial.
fn guarded(
    cfg: &ExperimentConfig,
    command: &'static str,
    out: &Path,
    body: impl FnOnce(&mut RunContext<'_>) -> Result<(RunStatus, Value)>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut ctx = RunContext::new(cfg, command, out)?;
    match body(&mut ctx) {
        Ok((status, summary)) => ctx.finish(status, summary),
        Err(e) => {
            if let Err(m) = ctx.manifest("failed", &Value::Null, Some(&e.to_string())) {
                warn!("could not write manifest after failure: {m}");
            }
            Err(e)
        }
    }
}

fn write_state(ctx: &mut RunContext<'_>, problem: &Problem, traj: &StateTrajectory) -> Result<()> {
    let dt = problem.dt();
    ctx.write_field("mu", problem, dt, &traj.mu)?;
    ctx.write_field("phi", problem, dt, &traj.phi)?;
    ctx.write_field("sigma", problem, dt, &traj.sigma)
}

fn separation_json(traj: &StateTrajectory) -> Value {
    let s = check_separation(traj);
    json!({
        "phi_min": s.phi_min,
        "phi_max": s.phi_max,
        "clamp_count": s.clamp_count,
        "strictly_interior": s.strictly_interior(),
        "newton_iterations": traj.newton_iterations.iter().sum::<usize>(),
        "max_step_residual": traj.max_residual,
    })
}

/// Forward solve for the zero control.
pub fn run_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    guarded(cfg, "simulate", out, |ctx| {
        let problem = cfg.build_problem()?;
        let t = Instant::now();
        let traj = solve_state(&problem, &Control::zeros(&problem), None)?;
        ctx.time("forward", t);
        write_state(ctx, &problem, &traj)?;
        let sep = separation_json(&traj);
        ctx.write_json("separation.json", &sep)?;
        let status = if check_separation(&traj).strictly_interior() {
            RunStatus::Success
        } else {
            warn!("phase field left the safeguard band");
            RunStatus::CertificationFailure
        };
        Ok((status, json!({ "separation": sep, "slices": traj.slices() })))
    })
}

fn load_warm_start(problem: &Problem, dir: &Path) -> Option<Control> {
    let load = |name: &str| {
        let dump = read_field(&dir.join(name)).ok()?;
        (dump.data.nodes() == problem.nodes() && dump.data.slices() == problem.steps()).then_some(dump.data)
    };
    let u = Control::new(load("u1.bin")?, load("u2.bin")?, problem.bounds()).ok()?;
    Some(u.project())
}

fn optimize_inner(
    ctx: &mut RunContext<'_>,
    problem: &Problem,
    start: &Control,
) -> Result<OptimizeResult> {
    let t = Instant::now();
    let res = optimizer::solve(problem, &ctx.cfg.optimizer_config(), start)?;
    ctx.time("optimize", t);
    let dt = problem.dt();
    let u = res.control();
    ctx.write_field("u1", problem, dt, &u.u1)?;
    ctx.write_field("u2", problem, dt, &u.u2)?;
    write_state(ctx, problem, res.eval.state())?;
    let adj = &res.eval.adjoint;
    ctx.write_field("p", problem, dt, &adj.p)?;
    ctx.write_field("q", problem, dt, &adj.q)?;
    ctx.write_field("r", problem, dt, &adj.r)?;
    ctx.write_field("lam1", problem, dt, &res.multipliers.lam1)?;
    ctx.write_field("lam2", problem, dt, &res.multipliers.lam2)?;
    let mut csv = String::from("iteration,objective,residual,step,zero_fraction_u1,zero_fraction_u2,bound_violations\n");
    for r in &res.history {
        csv.push_str(&format!(
            "{},{:e},{:e},{:e},{},{},{}\n",
            r.iteration,
            r.objective,
            r.residual,
            r.step,
            r.zero_fraction[0],
            r.zero_fraction[1],
            r.bound_violations
        ));
    }
    ctx.write_bytes("history.csv", csv.as_bytes())?;
    Ok(res)
}

fn optimize_summary(res: &OptimizeResult, kappa: f64) -> Value {
    let last = res.history.last().expect("history holds the start point");
    json!({
        "status": match res.status {
            OptimizerStatus::Converged => "converged",
            OptimizerStatus::BudgetExhausted => "budget-exhausted",
        },
        "iterations": last.iteration,
        "objective": res.eval.total(kappa),
        "tracking": res.eval.tracking,
        "sparsity": res.eval.sparsity,
        "residual": res.residual,
        "zero_fraction": last.zero_fraction,
        "feasible": res.control().is_feasible(),
        "separation": separation_json(res.eval.state()),
    })
}

/// Proximal-gradient optimization from the zero control.
pub fn run_optimize(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    guarded(cfg, "optimize", out, |ctx| {
        let problem = cfg.build_problem()?;
        let res = optimize_inner(ctx, &problem, &Control::zeros(&problem))?;
        let summary = optimize_summary(&res, problem.cost.kappa);
        ctx.write_json("optimize.json", &summary)?;
        if res.status == OptimizerStatus::BudgetExhausted {
            warn!("optimizer stopped on its iteration budget; results are not certified");
        }
        Ok((RunStatus::Success, summary))
    })
}

#[derive(Debug, Serialize)]
struct Certificate {
    name: &'static str,
    value: f64,
    bound: f64,
    pass: bool,
}

fn cert(name: &'static str, value: f64, bound: f64, pass: bool) -> Certificate {
    Certificate {
        name,
        value,
        bound,
        pass,
    }
}

/// Optimizes (warm-started from control dumps already in `out`, if any) and
/// certifies the result.
pub fn run_certify(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    guarded(cfg, "certify", out, |ctx| {
        let problem = cfg.build_problem()?;
        let start = load_warm_start(&problem, out).unwrap_or_else(|| Control::zeros(&problem));
        let res = optimize_inner(ctx, &problem, &start)?;
        ctx.write_json("optimize.json", &optimize_summary(&res, problem.cost.kappa))?;
        let cc = &cfg.certification;
        let ev: &Evaluation = &res.eval;
        let u = res.control();
        let mut certs = Vec::new();
        let stat_tol = cfg.optimizer.stat_tol;
        certs.push(cert("stationarity_residual", res.residual, stat_tol, res.residual <= stat_tol));
        let (r1, r2) = projection_residual(&problem, u, &ev.adjoint, &res.multipliers);
        let proj = r1.max(r2);
        certs.push(cert("projection_residual", proj, cc.projection_tol, proj <= cc.projection_tol));
        let in_sub = multipliers_in_subdifferential(u, &res.multipliers);
        certs.push(cert("multipliers_in_subdifferential", if in_sub { 0.0 } else { 1.0 }, 0.0, in_sub));
        let slack = variational_inequality_slack(&problem, u, &ev.gradient, &res.multipliers, 100, cfg.seed);
        certs.push(cert("variational_inequality_slack", slack, -1e-6, slack >= -1e-6));
        certs.push(cert("feasible", u.bound_violations() as f64, 0.0, u.is_feasible()));

        if cc.sparsity {
            let sb = sparsity_bands(&problem, u, &ev.adjoint, cc.band_tol);
            let agree = sb.components[0].band_agreement.min(sb.components[1].band_agreement);
            certs.push(cert("sparsity_band_agreement", agree, 1.0, sb.agrees()));
            ctx.write_json("sparsity.json", &sb)?;
        }

        let t = Instant::now();
        let act_tol = cfg.act_tol();
        let cls = classify_cone(&problem, u, &ev.adjoint, act_tol);
        ctx.write_json(
            "cone.json",
            &json!({
                "act_tol": act_tol,
                "u1": cls.counts(0),
                "u2": cls.counts(1),
            }),
        )?;
        match sample_critical_directions(&problem, &cls, cc.directions, cfg.seed.wrapping_add(1)) {
            Ok(dirs) => {
                let admitted = dirs.iter().all(|v| cls.admits(v));
                let co = coercivity_scan(&problem, &ev.frozen, &ev.adjoint, &dirs)?;
                certs.push(cert("coercivity_min_quotient", co.min_quotient, 0.0, co.min_quotient > 0.0 && admitted));
                ctx.write_json("coercivity.json", &co)?;
                if let Some(w) = &co.witness {
                    ctx.write_field("witness_v1", &problem, problem.dt(), &w.u1)?;
                    ctx.write_field("witness_v2", &problem, problem.dt(), &w.u2)?;
                }
            }
            Err(Error::ConeDegenerate) => {
                info!("critical cone is {{0}}; coercivity holds vacuously");
                ctx.write_json("coercivity.json", &json!({ "degenerate_cone": true }))?;
                certs.push(cert("coercivity_min_quotient", f64::INFINITY, 0.0, true));
            }
            Err(e) => return Err(e),
        }
        ctx.time("second_order", t);

        let t = Instant::now();
        let gp = growth_probe(&problem, u, cc.growth_radius, cc.growth_probes, cfg.seed.wrapping_add(2))?;
        ctx.time("growth_probe", t);
        certs.push(cert(
            "growth_negative_gaps",
            gp.negative_gaps as f64,
            0.0,
            gp.negative_gaps == 0 && gp.failures == 0,
        ));
        ctx.write_json(
            "growth.json",
            &json!({
                "report": gp,
                "note": "sampled evidence of quadratic growth, not a proof",
            }),
        )?;

        let pass = certs.iter().all(|c| c.pass);
        ctx.write_json("certificate.json", &json!({ "pass": pass, "certificates": certs }))?;
        let status = if pass {
            RunStatus::Success
        } else {
            RunStatus::CertificationFailure
        };
        Ok((status, json!({ "pass": pass, "certificates": certs })))
    })
}

/// A fixed interior control for derivative checks: uniform in half the box.
pub fn diagnostic_control(problem: &Problem, seed: u64) -> Control {
    let mut rng = rng(seed);
    let b = problem.bounds();
    let (n, s) = (problem.nodes(), problem.steps());
    Control {
        u1: uniform_field(&mut rng, n, s, 0.5 * b.lo1, 0.5 * b.hi1),
        u2: uniform_field(&mut rng, n, s, 0.5 * b.lo2, 0.5 * b.hi2),
        bounds: b,
    }
}

fn checks_json(reports: &[CheckReport]) -> Value {
    json!({
        "pass": reports.iter().all(|r| r.pass),
        "checks": reports,
    })
}

/// Gradient, Hessian, continuity and manufactured-solution checks.
pub fn run_diagnostics(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    guarded(cfg, "diagnostics", out, |ctx| {
        let problem = cfg.build_problem()?;
        let d = &cfg.diagnostics;
        let u = diagnostic_control(&problem, cfg.seed);
        let reports = vec![
            gradient_check(&problem, &u, d.gradient_dirs, &d.gradient_eps, d.gradient_tol, cfg.seed.wrapping_add(1))?,
            hessian_check(&problem, &u, d.hessian_dirs, d.hessian_eps, cfg.seed.wrapping_add(2))?,
            continuity_check(&problem, &u, &d.continuity_deltas, cfg.seed.wrapping_add(3))?,
            mms_convergence(d.mms_levels)?.0,
        ];
        for r in &reports {
            ctx.timings.push((r.name.clone(), r.runtime));
        }
        let summary = checks_json(&reports);
        ctx.write_json("checks.json", &summary)?;
        let status = if reports.iter().all(|r| r.pass) {
            RunStatus::Success
        } else {
            RunStatus::CertificationFailure
        };
        Ok((status, summary))
    })
}

/// Manufactured-solution convergence study of the forward solver.
pub fn run_mms(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    guarded(cfg, "mms", out, |ctx| {
        let (report, studies) = mms_convergence(cfg.diagnostics.mms_levels)?;
        ctx.timings.push(("mms".into(), report.runtime));
        let summary = json!({ "pass": report.pass, "check": report, "studies": studies });
        ctx.write_json("mms.json", &summary)?;
        let status = if report.pass {
            RunStatus::Success
        } else {
            RunStatus::CertificationFailure
        };
        Ok((status, summary))
    })
}
