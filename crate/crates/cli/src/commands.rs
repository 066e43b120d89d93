//! Subcommand bodies. Each writes its artifacts plus the effective config
//! into the output directory and prints a short summary.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use cdac_core::approx::io::{read_model, write_model};
use cdac_core::approx::{agreement_with_exact, gpr_run, rbf_run, ApproxModel, ApproxRun};
use cdac_core::baselines::{baseline_policy_map, ThresholdPolicy, TieRule};
use cdac_core::export::{
    policy_ppm, tie_pgm, write_batch_csv, write_compare_csv, write_policy_csv, write_trace_csv, write_value_csv,
};
use cdac_core::sim::{compare, run_traces, ModelPolicy};
use cdac_core::solver::policy_from_model;
use cdac_core::{
    solve, BatchConfig, BatchReport, BeliefState, CdacLookup, CompareConfig, EpisodeTrace, Policy, SimplexGrid,
    SolveReport, Task, ValueModel,
};

use crate::config::{Config, Method, PolicySource, Scope};
use crate::error::CliError;

/// Output directory plus file-name prefix.
pub struct Output {
    dir: PathBuf,
    prefix: String,
}

impl Output {
    fn new(cfg: &Config) -> Result<Self, CliError> {
        let dir = PathBuf::from(&cfg.output.dir);
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            prefix: cfg.output.prefix.clone(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{}{name}", self.prefix))
    }

    fn create(&self, name: &str) -> Result<File, CliError> {
        Ok(File::create(self.path(name))?)
    }
}

/// Validates, echoes the effective config and dispatches.
pub fn run(scope: Scope, mut cfg: Config, stdout: &mut dyn Write) -> Result<(), CliError> {
    cfg.validate(scope)?;
    let out = Output::new(&cfg)?;
    std::fs::write(out.path("config.toml"), cfg.to_toml())?;
    match scope {
        Scope::Solve => cmd_solve(&cfg, &out, stdout),
        Scope::Approx => cmd_approx(&cfg, &out, stdout),
        Scope::Simulate => cmd_simulate(&cfg, &out, stdout),
        Scope::Compare => cmd_compare(&cfg, &out, stdout),
        Scope::ExportPolicy => cmd_export_policy(&cfg, &out, stdout),
    }
}

fn write_convergence(out: &Output, name: &str, report: &SolveReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out.create(name)?);
    w.write_record(["iteration", "delta"])?;
    for (i, d) in report.deltas.iter().enumerate() {
        w.write_record([(i + 1).to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Policy table and per-fixation rasters (tie maps when present), limited
/// to the configured formats.
fn write_policy_files(cfg: &Config, out: &Output, stem: &str, policy: &Policy) -> Result<(), CliError> {
    if cfg.wants("csv") {
        write_policy_csv(policy, out.create(&format!("{stem}.csv"))?)?;
    }
    if cfg.wants("ppm") {
        for a in policy.task().actions() {
            let name = policy.task().action_name(a);
            std::fs::write(out.path(&format!("{stem}_{name}.ppm")), policy_ppm(policy, a))?;
            if policy.ties().is_some() {
                std::fs::write(out.path(&format!("{stem}_ties_{name}.pgm")), tie_pgm(policy, a)?)?;
            }
        }
    }
    Ok(())
}

fn stop_summary(policy: &Policy) -> String {
    policy
        .task()
        .actions()
        .map(|a| {
            let stops = policy.table(a).iter().filter(|x| x.is_stop()).count();
            format!("{}={stops}", policy.task().action_name(a))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_solve(cfg: &Config, out: &Output, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (task, costs) = (cfg.task()?, cfg.costs()?);
    let (vf, policy) = solve(&task, &costs, cfg.solver.m, &cfg.solver()?)?;
    let report = policy
        .report
        .clone()
        .ok_or_else(|| CliError::Runtime("solver returned no convergence report".into()))?;
    if cfg.wants("csv") {
        write_value_csv(&vf, out.create("values.csv")?)?;
        write_convergence(out, "convergence.csv", &report)?;
    }
    write_policy_files(cfg, out, "policy", &policy)?;
    writeln!(
        stdout,
        "converged in {} iterations (final delta {:.3e}, {:.2} s) on {} grid points",
        report.iterations,
        report.final_delta,
        report.wall_time,
        policy.grid().len()
    )?;
    writeln!(stdout, "stop cells per fixation: {}", stop_summary(&policy))?;
    Ok(())
}

fn split<M>(run: ApproxRun<M>, wrap: fn(M) -> ApproxModel<f64>) -> (ApproxModel<f64>, SolveReport, bool) {
    (wrap(run.model), run.report, run.converged)
}

fn cmd_approx(cfg: &Config, out: &Output, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (task, costs) = (cfg.task()?, cfg.costs()?);
    let (model, report, converged) = match cfg.method()? {
        Method::Rbf => split(rbf_run(&task, &costs, &cfg.rbf()?)?, ApproxModel::Rbf),
        Method::Gpr => split(gpr_run(&task, &costs, &cfg.gpr()?)?, ApproxModel::Gpr),
    };
    let model_path = out.path("model.txt");
    write_model(&model_path, &model)?;
    write_convergence(out, "convergence.csv", &report)?;

    let (_, exact) = solve(&task, &costs, cfg.approx.eval_m, &cfg.solver()?)?;
    let (approx_policy, agreement) = agreement_with_exact(&exact, &task, &costs, &model)?;
    let mut w = csv::Writer::from_writer(out.create("agreement.csv")?);
    w.write_record(["fixation", "agreement"])?;
    for a in task.actions() {
        w.write_record([task.action_name(a).to_string(), agreement.per_fixation[a.0].to_string()])?;
    }
    w.write_record(["all".to_string(), agreement.overall.to_string()])?;
    w.flush()?;
    write_policy_files(cfg, out, "approx_policy", &approx_policy)?;

    writeln!(
        stdout,
        "{} sweeps, last change {:.3e} (tolerance {:.1e}), {:.2} s",
        report.iterations, report.final_delta, cfg.approx.tolerance, report.wall_time
    )?;
    writeln!(
        stdout,
        "agreement with exact policy on {} cells per fixation:",
        exact.grid().len()
    )?;
    for a in task.actions() {
        writeln!(stdout, "  {}: {:.4}", task.action_name(a), agreement.per_fixation[a.0])?;
    }
    writeln!(stdout, "  overall: {:.4}", agreement.overall)?;
    if !converged {
        return Err(CliError::NonConvergence(format!(
            "{} sweeps without reaching tolerance {:e} (last change {:e}); model written to {}",
            report.iterations,
            cfg.approx.tolerance,
            report.final_delta,
            model_path.display()
        )));
    }
    Ok(())
}

fn load_model(cfg: &Config, task: &Task) -> Result<ApproxModel<f64>, CliError> {
    let path = cfg.approx.model_file.as_deref().unwrap_or_default();
    let model: ApproxModel<f64> = read_model(path.as_ref()).map_err(|e| match e {
        cdac_core::Error::Io(io) => CliError::Config(format!("approx.model_file: cannot read {path}: {io}")),
        e => e.into(),
    })?;
    if model.num_actions() != task.num_actions() {
        return Err(CliError::Config(format!(
            "approx.model_file: model has {} fixations, the task has {}",
            model.num_actions(),
            task.num_actions()
        )));
    }
    Ok(model)
}

fn batch_config(cfg: &Config, task: &Task) -> Result<BatchConfig<f64>, CliError> {
    Ok(BatchConfig {
        trials: cfg.sim.trials,
        seed: cfg.sim.seed,
        prior: BeliefState::uniform(task.k()),
        initial: cfg.initial(task)?,
        max_steps: cfg.sim.max_steps,
    })
}

fn print_report(stdout: &mut dyn Write, label: &str, r: &BatchReport) -> Result<(), CliError> {
    writeln!(
        stdout,
        "{label:<12} accuracy {:.4} ± {:.4}  steps {:.3} ± {:.3}  switches {:.3} ± {:.3}  cost {:.4} ± {:.4}  truncated {}",
        r.accuracy.mean, r.accuracy.se, r.steps.mean, r.steps.se, r.switches.mean, r.switches.se, r.cost.mean, r.cost.se, r.truncated
    )?;
    Ok(())
}

fn cmd_simulate(cfg: &Config, out: &Output, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (task, costs) = (cfg.task()?, cfg.costs()?);
    let batch = batch_config(cfg, &task)?;
    let traces: Vec<EpisodeTrace<f64>> = match cfg.policy_source(&task)? {
        PolicySource::Cdac(lookup) => {
            let (vf, policy) = solve(&task, &costs, cfg.solver.m, &cfg.solver()?)?;
            match lookup {
                CdacLookup::Lookahead => run_traces(&ModelPolicy { model: &vf, costs }, &task, &costs, &batch)?,
                CdacLookup::NearestGridPoint => run_traces(&policy, &task, &costs, &batch)?,
            }
        }
        PolicySource::Baseline(kind, thr) => {
            let policy = ThresholdPolicy::new(kind, thr, task.k(), TieRule::UniformRandom)?;
            run_traces(&policy, &task, &costs, &batch)?
        }
        PolicySource::Model => {
            let model = load_model(cfg, &task)?;
            run_traces(&ModelPolicy { model: &model, costs }, &task, &costs, &batch)?
        }
    };
    let report = BatchReport::from_traces(&traces);
    if cfg.wants("csv") {
        write_batch_csv(&report, out.create("batch.csv")?)?;
        if cfg.sim.traces {
            write_trace_csv(&task, &traces, out.create("traces.csv")?)?;
        }
    }
    print_report(stdout, &cfg.sim.policy, &report)
}

fn cmd_compare(cfg: &Config, out: &Output, stdout: &mut dyn Write) -> Result<(), CliError> {
    let task = cfg.task()?;
    let policies = cfg.compare_policies(&task)?;
    let grid = cfg
        .switch_costs()?
        .into_iter()
        .map(|cs| cfg.costs_with(cs))
        .collect::<Result<Vec<_>, _>>()?;
    let cc = CompareConfig {
        trials: cfg.sim.trials,
        seed: cfg.sim.seed,
        initial: cfg.initial(&task)?,
        max_steps: cfg.sim.max_steps,
        grid_m: cfg.solver.m,
        solver: cfg.solver()?,
        cdac_lookup: cfg.lookup()?,
        calibration_trials: cfg.compare.calibration_trials,
        accuracy_tol: cfg.compare.accuracy_tol,
    };
    let rows = compare(&policies, &task, &grid, &cc)?;
    if cfg.wants("csv") {
        write_compare_csv(&rows, out.create("compare.csv")?)?;
    }
    for r in &rows {
        let thr = r.threshold.map(|t| format!(" thr {t:.4}")).unwrap_or_default();
        print_report(stdout, &format!("{} c_s={}{thr}", r.policy, r.c_s), &r.report)?;
        if let Some(w) = &r.warning {
            writeln!(stdout, "  warning: {w}")?;
        }
    }
    Ok(())
}

fn cmd_export_policy(cfg: &Config, out: &Output, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (task, costs) = (cfg.task()?, cfg.costs()?);
    let grid = Arc::new(SimplexGrid::new(cfg.solver.m)?);
    let policy = match cfg.policy_source(&task)? {
        PolicySource::Cdac(_) => solve(&task, &costs, cfg.solver.m, &cfg.solver()?)?.1,
        PolicySource::Baseline(kind, thr) => {
            let policy = ThresholdPolicy::new(kind, thr, task.k(), TieRule::ReportTies)?;
            baseline_policy_map(&policy, &task, grid)?
        }
        PolicySource::Model => policy_from_model(&task, &costs, &load_model(cfg, &task)?, grid)?,
    };
    write_policy_files(cfg, out, "policy", &policy)?;
    writeln!(
        stdout,
        "{} policy on {} grid points; stop cells per fixation: {}",
        cfg.sim.policy,
        policy.grid().len(),
        stop_summary(&policy)
    )?;
    Ok(())
}
