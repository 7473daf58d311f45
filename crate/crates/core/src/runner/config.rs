//! TOML experiment configuration: schema, defaults, validation and the
//! construction of a [`Problem`] from it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::Control;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, SpaceTimeField, TimeGrid};
use crate::linalg::LinearSolverKind;
use crate::model::{Bounds, CostParams, ModelParams, Proliferation};
use crate::optimizer::OptimizerConfig;
use crate::problem::{GuessMode, InitialData, Problem, SolverOptions};
use crate::runner::io::read_field;
use crate::state::solve_state;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed of every random draw in the run.
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub certification: CertificationConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub alpha: f64,
    pub beta: f64,
    pub chi: f64,
    pub f2_k: f64,
    /// `"constant"` or `"logistic-smooth"`.
    pub proliferation: String,
    pub p0: f64,
    pub p_scale: f64,
    pub sep_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            chi: 0.5,
            f2_k: 1.0,
            proliferation: "logistic-smooth".into(),
            p0: 0.5,
            p_scale: 0.5,
            sep_eps: 1e-6,
        }
    }
}

/// A scalar field given analytically or by file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `offset + amplitude * prod_a cos(modes[a] pi x_a / L_a)`.
    CosineBump {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        #[serde(default = "default_modes")]
        modes: Vec<u32>,
    },
    /// A field dump with one slice (spatial) or one slice per node or cell.
    File {
        path: PathBuf,
    },
    /// The phase field of the uncontrolled trajectory (targets only).
    Uncontrolled,
}

fn default_modes() -> Vec<u32> {
    vec![1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub lo1: f64,
    pub hi1: f64,
    pub lo2: f64,
    pub hi2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub kappa: f64,
    pub bounds: BoundsConfig,
    pub target_q: FieldSpec,
    pub target_omega: FieldSpec,
    pub h: FieldSpec,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            b1: 1.0,
            b2: 1.0,
            b3: 0.05,
            kappa: 0.02,
            bounds: BoundsConfig {
                lo1: -1.0,
                hi1: 1.0,
                lo2: -1.0,
                hi2: 1.0,
            },
            target_q: FieldSpec::CosineBump {
                offset: -0.2,
                amplitude: 0.2,
                modes: vec![1],
            },
            target_omega: FieldSpec::Constant { value: -0.3 },
            h: FieldSpec::Constant { value: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub mu0: FieldSpec,
    pub phi0: FieldSpec,
    pub sigma0: FieldSpec,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            mu0: FieldSpec::Constant { value: 0.0 },
            phi0: FieldSpec::CosineBump {
                offset: 0.0,
                amplitude: 0.4,
                modes: vec![1],
            },
            sigma0: FieldSpec::Constant { value: 0.5 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub clamp_budget: usize,
    /// `"auto"`, `"banded"` or `"gmres"`.
    pub linear: String,
    /// `"previous"` or `"extrapolated"`.
    pub guess: String,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            newton_tol: d.newton_tol,
            max_newton_iters: d.max_newton_iters,
            clamp_budget: d.clamp_budget,
            linear: "auto".into(),
            guess: "previous".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    /// Initial step; omitted means `1 / b3`.
    pub step_init: Option<f64>,
    pub backtrack_factor: f64,
    pub max_outer_iters: usize,
    pub stat_tol: f64,
    pub min_step: f64,
    pub armijo: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            step_init: d.step_init,
            backtrack_factor: d.backtrack_factor,
            max_outer_iters: d.max_outer_iters,
            stat_tol: d.stat_tol,
            min_step: d.min_step,
            armijo: d.armijo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertificationConfig {
    /// Runs the sparsity-band certificate, which needs `lo_i < 0 < hi_i`.
    pub sparsity: bool,
    pub directions: usize,
    pub growth_probes: usize,
    pub growth_radius: f64,
    /// Activity tolerance; omitted means `1e-6 (kappa + b3 max|bound|)`.
    pub act_tol: Option<f64>,
    pub band_tol: f64,
    /// Projection-formula residual bound.
    pub projection_tol: f64,
}

impl Default for CertificationConfig {
    fn default() -> Self {
        Self {
            sparsity: true,
            directions: 50,
            growth_probes: 100,
            growth_radius: 1e-2,
            act_tol: None,
            band_tol: 1e-4,
            projection_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub gradient_dirs: usize,
    pub gradient_eps: Vec<f64>,
    pub gradient_tol: f64,
    pub hessian_dirs: usize,
    pub hessian_eps: f64,
    pub continuity_deltas: Vec<f64>,
    pub mms_levels: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            gradient_dirs: 5,
            gradient_eps: vec![1e-2, 1e-3, 1e-4, 1e-5],
            gradient_tol: 1e-3,
            hessian_dirs: 3,
            hessian_eps: 1e-3,
            continuity_deltas: vec![1e-1, 1e-2, 1e-3],
            mms_levels: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write CSV copies of every field dump.
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            csv: false,
        }
    }
}

impl Default for ExperimentConfig {
    /// The shipped baseline: 1D, 64 nodes, 128 steps, `T = 1`.
    fn default() -> Self {
        Self {
            seed: 0,
            grid: GridConfig {
                dim: 1,
                extents: vec![1.0],
                counts: vec![64],
            },
            time: TimeConfig {
                t_final: 1.0,
                steps: 128,
            },
            model: ModelConfig::default(),
            cost: CostConfig::default(),
            init: InitConfig::default(),
            solver: SolverConfig::default(),
            optimizer: OptimizerSection::default(),
            certification: CertificationConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn config_err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(path, format!("must be > 0, got {v}")))
    }
}

impl ExperimentConfig {
    /// Reads and validates a TOML file. Relative `file` field paths resolve
    /// against the config's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without validating.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let specs = [
            &mut self.cost.target_q,
            &mut self.cost.target_omega,
            &mut self.cost.h,
            &mut self.init.mu0,
            &mut self.init.phi0,
            &mut self.init.sigma0,
        ];
        for spec in specs {
            if let FieldSpec::File { path } = spec {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    /// Schema checks with path-qualified messages.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(g.dim == 1 || g.dim == 2) {
            return Err(config_err("grid.dim", format!("must be 1 or 2, got {}", g.dim)));
        }
        if g.extents.len() != g.dim || g.counts.len() != g.dim {
            return Err(config_err("grid", "extents and counts need one entry per axis"));
        }
        for (a, &e) in g.extents.iter().enumerate() {
            positive(&format!("grid.extents[{a}]"), e)?;
        }
        for (a, &c) in g.counts.iter().enumerate() {
            if c < 3 {
                return Err(config_err(&format!("grid.counts[{a}]"), format!("must be >= 3, got {c}")));
            }
        }
        positive("time.t_final", self.time.t_final)?;
        if self.time.steps == 0 {
            return Err(config_err("time.steps", "must be >= 1"));
        }
        let m = &self.model;
        positive("model.alpha", m.alpha)?;
        positive("model.beta", m.beta)?;
        positive("model.chi", m.chi)?;
        if !(m.f2_k.is_finite() && m.f2_k >= 0.0) {
            return Err(config_err("model.f2_k", format!("must be >= 0, got {}", m.f2_k)));
        }
        if !(m.sep_eps > 0.0 && m.sep_eps < 0.1) {
            return Err(config_err("model.sep_eps", format!("must lie in (0, 0.1), got {}", m.sep_eps)));
        }
        Proliferation::from_kind(&m.proliferation, m.p0, m.p_scale)
            .map_err(|e| config_err("model.proliferation", e))?;
        let c = &self.cost;
        if !(c.b1 >= 0.0) {
            return Err(config_err("cost.b1", format!("must be >= 0, got {}", c.b1)));
        }
        if !(c.b2 >= 0.0) {
            return Err(config_err("cost.b2", format!("must be >= 0, got {}", c.b2)));
        }
        positive("cost.b3", c.b3)?;
        positive("cost.kappa", c.kappa)?;
        let b = &c.bounds;
        if !(b.lo1 < b.hi1) {
            return Err(config_err("cost.bounds", format!("lo1 = {} must be < hi1 = {}", b.lo1, b.hi1)));
        }
        if !(b.lo2 < b.hi2) {
            return Err(config_err("cost.bounds", format!("lo2 = {} must be < hi2 = {}", b.lo2, b.hi2)));
        }
        if self.certification.sparsity {
            for (name, v, neg) in [
                ("lo1", b.lo1, true),
                ("hi1", b.hi1, false),
                ("lo2", b.lo2, true),
                ("hi2", b.hi2, false),
            ] {
                if (neg && v >= 0.0) || (!neg && v <= 0.0) {
                    return Err(config_err(
                        &format!("cost.bounds.{name}"),
                        format!("sparsity certification needs lo < 0 < hi, got {v}"),
                    ));
                }
            }
        }
        for (path, spec) in [
            ("init.mu0", &self.init.mu0),
            ("init.phi0", &self.init.phi0),
            ("init.sigma0", &self.init.sigma0),
            ("cost.h", &self.cost.h),
        ] {
            if matches!(spec, FieldSpec::Uncontrolled) {
                return Err(config_err(path, "kind \"uncontrolled\" is only valid for targets"));
            }
        }
        for (path, spec) in [
            ("cost.target_q", &self.cost.target_q),
            ("cost.target_omega", &self.cost.target_omega),
            ("cost.h", &self.cost.h),
            ("init.mu0", &self.init.mu0),
            ("init.phi0", &self.init.phi0),
            ("init.sigma0", &self.init.sigma0),
        ] {
            if let FieldSpec::File { path: p } = spec {
                if !p.exists() {
                    return Err(config_err(path, format!("file {} does not exist", p.display())));
                }
            }
        }
        let s = &self.solver;
        positive("solver.newton_tol", s.newton_tol)?;
        if s.max_newton_iters == 0 {
            return Err(config_err("solver.max_newton_iters", "must be >= 1"));
        }
        self.linear_kind()?;
        self.guess_mode()?;
        self.optimizer_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let cert = &self.certification;
        if cert.directions == 0 {
            return Err(config_err("certification.directions", "must be >= 1"));
        }
        if cert.growth_probes == 0 {
            return Err(config_err("certification.growth_probes", "must be >= 1"));
        }
        positive("certification.growth_radius", cert.growth_radius)?;
        positive("certification.band_tol", cert.band_tol)?;
        positive("certification.projection_tol", cert.projection_tol)?;
        if let Some(t) = cert.act_tol {
            positive("certification.act_tol", t)?;
        }
        let d = &self.diagnostics;
        if d.gradient_dirs == 0 || d.hessian_dirs == 0 {
            return Err(config_err("diagnostics", "direction counts must be >= 1"));
        }
        if d.gradient_eps.is_empty() || d.gradient_eps.iter().any(|&e| !(e > 0.0)) {
            return Err(config_err("diagnostics.gradient_eps", "needs positive entries"));
        }
        positive("diagnostics.gradient_tol", d.gradient_tol)?;
        positive("diagnostics.hessian_eps", d.hessian_eps)?;
        if d.continuity_deltas.is_empty() || d.continuity_deltas.iter().any(|&e| !(e > 0.0)) {
            return Err(config_err("diagnostics.continuity_deltas", "needs positive entries"));
        }
        if d.mms_levels < 3 {
            return Err(config_err("diagnostics.mms_levels", "must be >= 3"));
        }
        Ok(())
    }

    pub fn linear_kind(&self) -> Result<LinearSolverKind> {
        match self.solver.linear.as_str() {
            "auto" => Ok(LinearSolverKind::Auto),
            "banded" => Ok(LinearSolverKind::Banded),
            "gmres" => Ok(LinearSolverKind::Gmres),
            other => Err(config_err(
                "solver.linear",
                format!("expected auto, banded or gmres, got {other:?}"),
            )),
        }
    }

    pub fn guess_mode(&self) -> Result<GuessMode> {
        match self.solver.guess.as_str() {
            "previous" => Ok(GuessMode::Previous),
            "extrapolated" => Ok(GuessMode::Extrapolated),
            other => Err(config_err(
                "solver.guess",
                format!("expected previous or extrapolated, got {other:?}"),
            )),
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            step_init: o.step_init,
            backtrack_factor: o.backtrack_factor,
            max_outer_iters: o.max_outer_iters,
            stat_tol: o.stat_tol,
            min_step: o.min_step,
            armijo: o.armijo,
        }
    }

    pub fn act_tol(&self) -> f64 {
        let c = &self.cost;
        let b = Bounds {
            lo1: c.bounds.lo1,
            hi1: c.bounds.hi1,
            lo2: c.bounds.lo2,
            hi2: c.bounds.hi2,
        };
        self.certification
            .act_tol
            .unwrap_or(1e-6 * (c.kappa + c.b3 * b.max_magnitude()))
    }

    /// Builds the discretized problem. Targets of kind `uncontrolled` cost one
    /// forward solve.
    pub fn build_problem(&self) -> Result<Problem> {
        self.validate()?;
        let grid = GridSpec::new(self.grid.dim, &self.grid.extents, &self.grid.counts)?;
        let time = TimeGrid::new(self.time.t_final, self.time.steps)?;
        let m = &self.model;
        let model = ModelParams {
            alpha: m.alpha,
            beta: m.beta,
            chi: m.chi,
            f2_k: m.f2_k,
            proliferation: Proliferation::from_kind(&m.proliferation, m.p0, m.p_scale)?,
            sep_eps: m.sep_eps,
        };
        let nt = time.steps();
        let init = InitialData {
            mu0: spatial_field(&grid, &self.init.mu0, "init.mu0")?,
            phi0: spatial_field(&grid, &self.init.phi0, "init.phi0")?,
            sigma0: spatial_field(&grid, &self.init.sigma0, "init.sigma0")?,
        };
        let c = &self.cost;
        let bounds = Bounds {
            lo1: c.bounds.lo1,
            hi1: c.bounds.hi1,
            lo2: c.bounds.lo2,
            hi2: c.bounds.hi2,
        };
        let h_field = series_field(&grid, &c.h, nt, "cost.h")?;
        let needs_free_run = matches!(c.target_q, FieldSpec::Uncontrolled)
            || matches!(c.target_omega, FieldSpec::Uncontrolled);
        let placeholder_q = SpaceTimeField::zeros(grid.len(), nt + 1);
        let target_q = match &c.target_q {
            FieldSpec::Uncontrolled => placeholder_q,
            spec => series_field(&grid, spec, nt + 1, "cost.target_q")?,
        };
        let target_omega = match &c.target_omega {
            FieldSpec::Uncontrolled => vec![0.0; grid.len()],
            spec => spatial_field(&grid, spec, "cost.target_omega")?,
        };
        let cost = CostParams {
            b1: c.b1,
            b2: c.b2,
            b3: c.b3,
            kappa: c.kappa,
            target_q,
            target_omega,
            bounds,
            h_field,
        };
        let mut problem = Problem::new(grid, time, model, cost, init)
            .map_err(|e| Error::Config(e.to_string()))?;
        problem.solver = SolverOptions {
            newton_tol: self.solver.newton_tol,
            max_newton_iters: self.solver.max_newton_iters,
            clamp_budget: self.solver.clamp_budget,
            linear: self.linear_kind()?,
            guess: self.guess_mode()?,
        };
        if needs_free_run {
            let free = solve_state(&problem, &Control::zeros(&problem), None)?;
            if matches!(c.target_q, FieldSpec::Uncontrolled) {
                problem.cost.target_q = free.phi.clone();
            }
            if matches!(c.target_omega, FieldSpec::Uncontrolled) {
                problem.cost.target_omega = free.phi.slice(nt).to_vec();
            }
        }
        Ok(problem)
    }
}

fn analytic(grid: &GridSpec, spec: &FieldSpec) -> Option<Vec<f64>> {
    match spec {
        FieldSpec::Constant { value } => Some(vec![*value; grid.len()]),
        FieldSpec::CosineBump {
            offset,
            amplitude,
            modes,
        } => {
            let ext = grid.extents().to_vec();
            let modes: Vec<f64> = (0..grid.dim())
                .map(|a| *modes.get(a).or(modes.last()).unwrap_or(&1) as f64)
                .collect();
            Some(grid.sample(|x, y| {
                let mut v = (modes[0] * std::f64::consts::PI * x / ext[0]).cos();
                if ext.len() > 1 {
                    v *= (modes[1] * std::f64::consts::PI * y / ext[1]).cos();
                }
                offset + amplitude * v
            }))
        }
        _ => None,
    }
}

fn spatial_field(grid: &GridSpec, spec: &FieldSpec, path: &str) -> Result<Vec<f64>> {
    if let Some(v) = analytic(grid, spec) {
        return Ok(v);
    }
    match spec {
        FieldSpec::File { path: p } => {
            let dump = read_field(p).map_err(|e| config_err(path, e))?;
            if dump.data.nodes() != grid.len() || dump.data.slices() != 1 {
                return Err(config_err(
                    path,
                    format!(
                        "file holds {}x{} values, expected one slice of {} nodes",
                        dump.data.slices(),
                        dump.data.nodes(),
                        grid.len()
                    ),
                ));
            }
            Ok(dump.data.slice(0).to_vec())
        }
        _ => Err(config_err(path, "unsupported field kind here")),
    }
}

fn series_field(grid: &GridSpec, spec: &FieldSpec, slices: usize, path: &str) -> Result<SpaceTimeField> {
    if let Some(v) = analytic(grid, spec) {
        return Ok(SpaceTimeField::from_fn(grid.len(), slices, |_, k| v[k]));
    }
    match spec {
        FieldSpec::File { path: p } => {
            let dump = read_field(p).map_err(|e| config_err(path, e))?;
            let d = dump.data;
            if d.nodes() != grid.len() {
                return Err(config_err(path, format!("file has {} nodes, grid {}", d.nodes(), grid.len())));
            }
            if d.slices() == 1 {
                let v = d.slice(0).to_vec();
                Ok(SpaceTimeField::from_fn(grid.len(), slices, |_, k| v[k]))
            } else if d.slices() == slices {
                Ok(d)
            } else {
                Err(config_err(
                    path,
                    format!("file has {} slices, expected 1 or {slices}", d.slices()),
                ))
            }
        }
        _ => Err(config_err(path, "unsupported field kind here")),
    }
}
