//! Experiment configuration: TOML sections of `key = value` lines, command
//! line overrides and validation with field paths.
//!
//! Every section is optional except for the required keys `task.betas` and
//! `costs.c`; all other keys have defaults. Unknown keys are rejected.

use std::path::Path;

use cdac_core::approx::{GprConfig, RbfConfig, RbfKernel};
use cdac_core::baselines::BaselineKind;
use cdac_core::{CdacLookup, CostParams, FixationAction, Interpolation, SolverConfig, TaskSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub task: TaskBlock,
    pub costs: CostsBlock,
    pub solver: SolverBlock,
    pub approx: ApproxBlock,
    pub sim: SimBlock,
    pub compare: CompareBlock,
    pub output: OutputBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskBlock {
    /// `task1` (one acuity) or `task2` (four acuities).
    pub kind: String,
    pub betas: Option<Vec<f64>>,
}

impl Default for TaskBlock {
    fn default() -> Self {
        Self {
            kind: "task1".into(),
            betas: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostsBlock {
    pub c: Option<f64>,
    pub c_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    /// Bins per simplex edge.
    pub m: usize,
    pub tolerance: f64,
    pub max_iters: usize,
    /// `barycentric` or `nearest`.
    pub interp: String,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            m: 201,
            tolerance: d.tolerance,
            max_iters: d.max_iters,
            interp: "barycentric".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxBlock {
    /// `rbf` or `gpr`.
    pub method: String,
    pub centers: usize,
    pub sigma: f64,
    pub kernel: String,
    /// Shape parameter of the multiquadric and inverse-quadratic kernels.
    pub epsilon: f64,
    /// RBF samples per sweep.
    pub samples: usize,
    pub rcond: Option<f64>,
    /// GPR training points per sweep.
    pub points: usize,
    pub length_scale: f64,
    pub signal: f64,
    pub noise: f64,
    pub probe_m: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub max_iters: usize,
    /// Grid on which the approximate policy is compared with the exact one.
    pub eval_m: usize,
    /// Saved model read by `simulate` and `export-policy` with policy `model`.
    pub model_file: Option<String>,
}

impl Default for ApproxBlock {
    fn default() -> Self {
        let r = RbfConfig::default();
        let g = GprConfig::default();
        Self {
            method: "rbf".into(),
            centers: r.centers,
            sigma: r.sigma,
            kernel: r.kernel.name().into(),
            epsilon: 1.0,
            samples: r.samples,
            rcond: r.rcond,
            points: g.points,
            length_scale: g.length_scale,
            signal: g.signal,
            noise: g.noise,
            probe_m: g.probe_m,
            seed: r.seed,
            tolerance: r.tolerance,
            max_iters: r.max_iters,
            eval_m: 201,
            model_file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimBlock {
    /// `cdac`, `infomax`, `greedy-map` or `model`.
    pub policy: String,
    /// Stopping threshold of the baselines.
    pub threshold: Option<f64>,
    /// C-DAC action lookup: `lookahead` or `nearest`.
    pub lookup: String,
    pub trials: usize,
    pub seed: u64,
    /// Initial fixation by name; defaults to `1` (Task 1) or `l123` (Task 2).
    pub initial: Option<String>,
    pub max_steps: usize,
    /// Also write one CSV line per simulated step.
    pub traces: bool,
}

impl Default for SimBlock {
    fn default() -> Self {
        Self {
            policy: "cdac".into(),
            threshold: None,
            lookup: "lookahead".into(),
            trials: 10_000,
            seed: 0,
            initial: None,
            max_steps: 1000,
            traces: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareBlock {
    pub policies: Vec<String>,
    /// Switch costs to compare at `costs.c`; defaults to `[costs.c_s]`.
    pub c_s: Option<Vec<f64>>,
    /// Fixed baseline threshold; calibrated against C-DAC when absent.
    pub threshold: Option<f64>,
    pub calibration_trials: usize,
    pub accuracy_tol: f64,
}

impl Default for CompareBlock {
    fn default() -> Self {
        Self {
            policies: vec!["cdac".into(), "infomax".into()],
            c_s: None,
            threshold: None,
            calibration_trials: 10_000,
            accuracy_tol: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: String,
    /// Prefix of every written file name.
    pub prefix: String,
    /// Subset of `csv` and `ppm` (rasters include the PGM tie maps).
    pub formats: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            prefix: String::new(),
            formats: vec!["csv".into(), "ppm".into()],
        }
    }
}

fn field(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

/// Parses the file, applies `section.key=value` overrides in order and
/// deserializes the result.
pub fn load(path: &Path, overrides: &[String]) -> Result<Config, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, overrides)
}

pub fn parse(text: &str, overrides: &[String]) -> Result<Config, CliError> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Config(inner.to_string())
        } else {
            field(&path, inner)
        }
    })
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{spec}' is not section.key=value")))?;
    let (section, name) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| CliError::Config(format!("override key '{key}' is not section.key")))?;
    // Bare words that are not TOML literals are taken as strings.
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    entry
        .as_table_mut()
        .ok_or_else(|| field(section, "is not a section"))?
        .insert(name.to_string(), value);
    Ok(())
}

/// Subcommand whose blocks are validated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Solve,
    Approx,
    Simulate,
    Compare,
    ExportPolicy,
}

/// Where a simulated or exported policy comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicySource {
    Cdac(CdacLookup),
    Baseline(BaselineKind, f64),
    Model,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Rbf,
    Gpr,
}

impl Config {
    pub fn task(&self) -> Result<TaskSpec<f64>, CliError> {
        let betas = self.task.betas.as_ref().ok_or_else(|| field("task.betas", "missing"))?;
        let task = match self.task.kind.trim().to_ascii_lowercase().as_str() {
            "task1" => match betas.as_slice() {
                [b] => TaskSpec::task1(*b),
                _ => {
                    return Err(field(
                        "task.betas",
                        format!("task1 takes 1 acuity, got {}", betas.len()),
                    ))
                }
            },
            "task2" => match betas.as_slice() {
                [a, b, c, d] => TaskSpec::task2([*a, *b, *c, *d]),
                _ => {
                    return Err(field(
                        "task.betas",
                        format!("task2 takes 4 acuities, got {}", betas.len()),
                    ))
                }
            },
            other => {
                return Err(field(
                    "task.kind",
                    format!("unknown task '{other}', expected task1 or task2"),
                ))
            }
        };
        task.map_err(|e| field("task.betas", e))
    }

    pub fn costs_with(&self, c_s: f64) -> Result<CostParams<f64>, CliError> {
        let c = self.costs.c.ok_or_else(|| field("costs.c", "missing"))?;
        CostParams::new(c, c_s).map_err(|e| field("costs", e))
    }

    pub fn costs(&self) -> Result<CostParams<f64>, CliError> {
        self.costs_with(self.costs.c_s)
    }

    pub fn solver(&self) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        if s.m < 2 {
            return Err(field("solver.m", "needs at least 2 bins"));
        }
        if !(s.tolerance > 0.0) {
            return Err(field("solver.tolerance", "must be positive"));
        }
        if s.max_iters == 0 {
            return Err(field("solver.max_iters", "must be at least 1"));
        }
        let interp = match s.interp.trim().to_ascii_lowercase().as_str() {
            "barycentric" => Interpolation::Barycentric,
            "nearest" | "nearest-neighbor" => Interpolation::NearestNeighbor,
            other => return Err(field("solver.interp", format!("unknown interpolation '{other}'"))),
        };
        Ok(SolverConfig {
            tolerance: s.tolerance,
            max_iters: s.max_iters,
            interp,
        })
    }

    pub fn method(&self) -> Result<Method, CliError> {
        match self.approx.method.trim().to_ascii_lowercase().as_str() {
            "rbf" => Ok(Method::Rbf),
            "gpr" => Ok(Method::Gpr),
            other => Err(field(
                "approx.method",
                format!("unknown method '{other}', expected rbf or gpr"),
            )),
        }
    }

    fn approx_common(&self) -> Result<(), CliError> {
        let a = &self.approx;
        if !(a.tolerance > 0.0) {
            return Err(field("approx.tolerance", "must be positive"));
        }
        if a.max_iters == 0 {
            return Err(field("approx.max_iters", "must be at least 1"));
        }
        if a.eval_m < 2 {
            return Err(field("approx.eval_m", "needs at least 2 bins"));
        }
        Ok(())
    }

    pub fn rbf(&self) -> Result<RbfConfig, CliError> {
        self.approx_common()?;
        let a = &self.approx;
        let kernel = RbfKernel::from_name(&a.kernel, a.epsilon)
            .ok_or_else(|| field("approx.kernel", format!("unknown kernel '{}'", a.kernel)))?;
        if a.centers == 0 {
            return Err(field("approx.centers", "must be at least 1"));
        }
        if !(a.sigma > 0.0) {
            return Err(field("approx.sigma", "must be positive"));
        }
        if a.samples == 0 {
            return Err(field("approx.samples", "must be at least 1"));
        }
        if let Some(r) = a.rcond {
            if !(r >= 0.0) {
                return Err(field("approx.rcond", "must be non-negative"));
            }
        }
        Ok(RbfConfig {
            centers: a.centers,
            sigma: a.sigma,
            kernel,
            samples: a.samples,
            seed: a.seed,
            tolerance: a.tolerance,
            max_iters: a.max_iters,
            rcond: a.rcond,
            ..RbfConfig::default()
        })
    }

    pub fn gpr(&self) -> Result<GprConfig, CliError> {
        self.approx_common()?;
        let a = &self.approx;
        if a.points == 0 {
            return Err(field("approx.points", "must be at least 1"));
        }
        for (name, v) in [("length_scale", a.length_scale), ("signal", a.signal)] {
            if !(v > 0.0) {
                return Err(field(&format!("approx.{name}"), "must be positive"));
            }
        }
        if !(a.noise >= 0.0) {
            return Err(field("approx.noise", "must be non-negative"));
        }
        Ok(GprConfig {
            points: a.points,
            length_scale: a.length_scale,
            signal: a.signal,
            noise: a.noise,
            seed: a.seed,
            tolerance: a.tolerance,
            max_iters: a.max_iters,
            probe_m: a.probe_m,
        })
    }

    pub fn lookup(&self) -> Result<CdacLookup, CliError> {
        CdacLookup::parse(&self.sim.lookup).ok_or_else(|| {
            field(
                "sim.lookup",
                format!("unknown lookup '{}', expected lookahead or nearest", self.sim.lookup),
            )
        })
    }

    fn threshold(path: &str, t: Option<f64>, k: usize) -> Result<Option<f64>, CliError> {
        match t {
            Some(t) if !(t > 1.0 / k as f64 && t <= 1.0) => {
                Err(field(path, format!("must lie in (1/{k}, 1], got {t}")))
            }
            t => Ok(t),
        }
    }

    pub fn policy_source(&self, task: &TaskSpec<f64>) -> Result<PolicySource, CliError> {
        let name = self.sim.policy.trim().to_ascii_lowercase();
        if name == "cdac" {
            return Ok(PolicySource::Cdac(self.lookup()?));
        }
        if name == "model" {
            if self.approx.model_file.is_none() {
                return Err(field("approx.model_file", "required for policy 'model'"));
            }
            return Ok(PolicySource::Model);
        }
        let kind = BaselineKind::parse(&name).ok_or_else(|| {
            field(
                "sim.policy",
                format!("unknown policy '{name}', expected cdac, infomax, greedy-map or model"),
            )
        })?;
        let thr = Self::threshold("sim.threshold", self.sim.threshold, task.k())?
            .ok_or_else(|| field("sim.threshold", format!("required for policy '{name}'")))?;
        Ok(PolicySource::Baseline(kind, thr))
    }

    pub fn initial(&self, task: &TaskSpec<f64>) -> Result<FixationAction, CliError> {
        match &self.sim.initial {
            None => Ok(FixationAction(if task.num_actions() > 3 {
                task.num_actions() - 1
            } else {
                0
            })),
            Some(name) => task
                .parse_action(name)
                .ok_or_else(|| field("sim.initial", format!("unknown fixation '{name}' for this task"))),
        }
    }

    fn sim_common(&self) -> Result<(), CliError> {
        if self.sim.trials == 0 {
            return Err(field("sim.trials", "must be at least 1"));
        }
        if self.sim.max_steps == 0 {
            return Err(field("sim.max_steps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn compare_policies(&self, task: &TaskSpec<f64>) -> Result<Vec<cdac_core::sim::PolicySpec>, CliError> {
        use cdac_core::sim::PolicySpec;
        let cmp = &self.compare;
        if cmp.policies.len() < 2 {
            return Err(field("compare.policies", "needs at least two policies"));
        }
        let threshold = Self::threshold("compare.threshold", cmp.threshold, task.k())?;
        cmp.policies
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p.trim().eq_ignore_ascii_case("cdac") {
                    Ok(PolicySpec::Cdac)
                } else {
                    BaselineKind::parse(p)
                        .map(|kind| PolicySpec::Baseline { kind, threshold })
                        .ok_or_else(|| field(&format!("compare.policies[{i}]"), format!("unknown policy '{p}'")))
                }
            })
            .collect()
    }

    pub fn switch_costs(&self) -> Result<Vec<f64>, CliError> {
        let list = self.compare.c_s.clone().unwrap_or_else(|| vec![self.costs.c_s]);
        if list.is_empty() {
            return Err(field("compare.c_s", "is empty"));
        }
        for (i, cs) in list.iter().enumerate() {
            self.costs_with(*cs)
                .map_err(|e| field(&format!("compare.c_s[{i}]"), e))?;
        }
        Ok(list)
    }

    pub fn wants(&self, format: &str) -> bool {
        self.output.formats.iter().any(|f| f.eq_ignore_ascii_case(format))
    }

    /// Checks every block the subcommand reads and fills resolved defaults
    /// (the initial fixation) so the echoed config is explicit.
    pub fn validate(&mut self, scope: Scope) -> Result<(), CliError> {
        let task = self.task()?;
        self.costs()?;
        self.solver()?;
        for (i, f) in self.output.formats.iter().enumerate() {
            if !matches!(f.to_ascii_lowercase().as_str(), "csv" | "ppm") {
                return Err(field(
                    &format!("output.formats[{i}]"),
                    format!("unknown format '{f}', expected csv or ppm"),
                ));
            }
        }
        if self.output.dir.trim().is_empty() {
            return Err(field("output.dir", "is empty"));
        }
        match scope {
            Scope::Solve => {}
            Scope::Approx => match self.method()? {
                Method::Rbf => {
                    self.rbf()?;
                }
                Method::Gpr => {
                    self.gpr()?;
                }
            },
            Scope::Simulate | Scope::ExportPolicy => {
                if scope == Scope::Simulate {
                    self.sim_common()?;
                }
                if self.policy_source(&task)? == PolicySource::Model {
                    self.method()?;
                }
            }
            Scope::Compare => {
                self.sim_common()?;
                self.lookup()?;
                self.compare_policies(&task)?;
                self.switch_costs()?;
                let min = cdac_core::baselines::CalibrationConfig::MIN_TRIALS;
                if self.compare.calibration_trials < min {
                    return Err(field("compare.calibration_trials", format!("must be at least {min}")));
                }
                if !(self.compare.accuracy_tol >= 0.0) {
                    return Err(field("compare.accuracy_tol", "must be non-negative"));
                }
            }
        }
        let initial = self.initial(&task)?;
        self.sim.initial = Some(task.action_name(initial).to_string());
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
