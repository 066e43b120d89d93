//! Monte-Carlo episodes and batch statistics for any fixation policy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{calibrate_threshold, BaselineKind, CalibrationConfig, ThresholdPolicy, TieRule};
use crate::error::{invalid, Result};
use crate::model::{BeliefState, CostParams, EpisodeState, FixationAction, Observation, TaskSpec};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_for};
use crate::solver::{q_factors, solve, PolicyAction, PolicyMap, SolverConfig, ValueModel};

const STREAM_TARGET: u64 = 1;
const STREAM_EPISODE: u64 = 2;

/// A closed-loop controller choosing to stop or where to look next.
pub trait SearchPolicy<T: Scalar>: Sync {
    fn decide(
        &self,
        task: &TaskSpec<T>,
        p: &BeliefState<T>,
        current: FixationAction,
        rng: &mut ChaCha8Rng,
    ) -> PolicyAction;
}

/// Grid policies act on the nearest grid point of the current belief.
impl<T: Scalar> SearchPolicy<T> for PolicyMap<T> {
    fn decide(&self, _: &TaskSpec<T>, p: &BeliefState<T>, current: FixationAction, _: &mut ChaCha8Rng) -> PolicyAction {
        self.lookup(current, p.probs())
    }
}

/// One-step lookahead on an arbitrary value model.
pub struct ModelPolicy<'a, T, M> {
    pub model: &'a M,
    pub costs: CostParams<T>,
}

impl<T: Scalar, M: ValueModel<T>> SearchPolicy<T> for ModelPolicy<'_, T, M> {
    fn decide(
        &self,
        task: &TaskSpec<T>,
        p: &BeliefState<T>,
        current: FixationAction,
        _: &mut ChaCha8Rng,
    ) -> PolicyAction {
        q_factors(task, &self.costs, self.model, current, p).decide()
    }
}

/// Draws an observation from the generative model with the target at `s`.
pub fn sample_observation<T: Scalar, R: Rng>(
    task: &TaskSpec<T>,
    s: usize,
    a: FixationAction,
    rng: &mut R,
) -> Observation {
    let mut bits = 0u32;
    let mut bit = 0;
    for (loc, level) in task.coverage(a).iter().enumerate() {
        let Some(level) = level else { continue };
        let beta = task.betas()[*level].as_f64();
        let q = if loc == s { beta } else { 1.0 - beta };
        if rng.random::<f64>() < q {
            bits |= 1 << bit;
        }
        bit += 1;
    }
    Observation::from_packed(bits, task.obs_arity())
}

/// Full record of one simulated search.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace<T> {
    pub seed: u64,
    pub target: usize,
    /// Initial fixation followed by the fixation of every observation.
    pub fixations: Vec<FixationAction>,
    pub observations: Vec<Observation>,
    /// Prior followed by the posterior after every observation.
    pub beliefs: Vec<BeliefState<T>>,
    pub decision: usize,
    pub steps: usize,
    pub n_switches: usize,
    pub cost: T,
    /// Hit the step cap and was forced to stop at the most likely location.
    pub truncated: bool,
}

impl<T: Scalar> EpisodeTrace<T> {
    pub fn correct(&self) -> bool {
        self.decision == self.target
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeConfig<T> {
    pub prior: BeliefState<T>,
    pub initial: FixationAction,
    pub max_steps: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn run_episode<T: Scalar, P: SearchPolicy<T> + ?Sized>(
    policy: &P,
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    prior: &BeliefState<T>,
    initial: FixationAction,
    target: usize,
    seed: u64,
    max_steps: usize,
) -> Result<EpisodeTrace<T>> {
    if max_steps == 0 {
        return Err(invalid("max_steps must be at least 1"));
    }
    if target >= task.k() || initial.0 >= task.num_actions() || prior.k() != task.k() {
        return Err(invalid("target, initial fixation or prior inconsistent with task"));
    }
    let mut rng = rand::SeedableRng::seed_from_u64(seed);
    let mut state = EpisodeState::new(prior.clone(), initial);
    let mut fixations = vec![initial];
    let mut observations = Vec::new();
    let mut beliefs = vec![prior.clone()];
    let (decision, truncated) = loop {
        if state.t >= max_steps {
            break (state.belief.argmax(), true);
        }
        match policy.decide(task, &state.belief, state.fixation, &mut rng) {
            PolicyAction::Stop(loc) => break (loc, false),
            PolicyAction::Continue(next) => {
                let x = sample_observation(task, target, next, &mut rng);
                state.advance(task, next, x)?;
                fixations.push(next);
                observations.push(x);
                beliefs.push(state.belief.clone());
            }
        }
    };
    Ok(EpisodeTrace {
        seed,
        target,
        fixations,
        observations,
        beliefs,
        decision,
        steps: state.t,
        n_switches: state.n_switches,
        cost: costs.trial_cost(state.t, state.n_switches, decision != target),
        truncated,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchConfig<T> {
    pub trials: usize,
    pub seed: u64,
    pub prior: BeliefState<T>,
    pub initial: FixationAction,
    pub max_steps: usize,
}

impl<T: Scalar> BatchConfig<T> {
    /// Uniform prior, 10 000 trials, step cap 1000.
    pub fn new(k: usize, initial: FixationAction, seed: u64) -> Self {
        Self {
            trials: 10_000,
            seed,
            prior: BeliefState::uniform(k),
            initial,
            max_steps: 1000,
        }
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }
}

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = if xs.len() > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchReport {
    pub trials: usize,
    pub accuracy: Estimate,
    pub steps: Estimate,
    pub switches: Estimate,
    pub cost: Estimate,
    pub truncated: usize,
}

impl BatchReport {
    pub fn from_traces<T: Scalar>(traces: &[EpisodeTrace<T>]) -> Self {
        let col = |f: &dyn Fn(&EpisodeTrace<T>) -> f64| traces.iter().map(f).collect::<Vec<f64>>();
        Self {
            trials: traces.len(),
            accuracy: Estimate::from_samples(&col(&|t| if t.correct() { 1.0 } else { 0.0 })),
            steps: Estimate::from_samples(&col(&|t| t.steps as f64)),
            switches: Estimate::from_samples(&col(&|t| t.n_switches as f64)),
            cost: Estimate::from_samples(&col(&|t| t.cost.as_f64())),
            truncated: traces.iter().filter(|t| t.truncated).count(),
        }
    }
}

/// Per-trial target and episode seed, derived from the master seed only.
pub fn trial_setup(master: u64, k: usize, index: usize) -> (usize, u64) {
    let target = rng_for(master, STREAM_TARGET, index as u64).random_range(0..k);
    (target, derive_seed(master, STREAM_EPISODE, index as u64))
}

/// All traces of a batch, in trial order.
pub fn run_traces<T: Scalar, P: SearchPolicy<T> + ?Sized>(
    policy: &P,
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    cfg: &BatchConfig<T>,
) -> Result<Vec<EpisodeTrace<T>>> {
    if cfg.trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let (target, seed) = trial_setup(cfg.seed, task.k(), i);
            run_episode(
                policy,
                task,
                costs,
                &cfg.prior,
                cfg.initial,
                target,
                seed,
                cfg.max_steps,
            )
        })
        .collect()
}

pub fn run_batch<T: Scalar, P: SearchPolicy<T> + ?Sized>(
    policy: &P,
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    cfg: &BatchConfig<T>,
) -> Result<BatchReport> {
    Ok(BatchReport::from_traces(&run_traces(policy, task, costs, cfg)?))
}

/// Policies that take part in a comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicySpec {
    Cdac,
    /// Threshold baseline; `None` calibrates against the C-DAC accuracy.
    Baseline {
        kind: BaselineKind,
        threshold: Option<f64>,
    },
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Cdac => "cdac",
            PolicySpec::Baseline { kind, .. } => kind.name(),
        }
    }
}

/// How a simulated C-DAC agent turns the solved grid into decisions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CdacLookup {
    /// Q-factors at the current belief with next-step values interpolated
    /// from the solved value function.
    #[default]
    Lookahead,
    /// Action stored at the nearest grid point of the current belief.
    NearestGridPoint,
}

impl CdacLookup {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "lookahead" => Some(CdacLookup::Lookahead),
            "nearest" | "nearest-grid-point" => Some(CdacLookup::NearestGridPoint),
            _ => None,
        }
    }
}

/// Solves C-DAC on an `m`-bin grid and simulates it with `lookup`.
pub fn run_cdac_batch<T: Scalar>(
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    m: usize,
    solver: &SolverConfig,
    lookup: CdacLookup,
    batch: &BatchConfig<T>,
) -> Result<BatchReport> {
    let (vf, policy) = solve(task, costs, m, solver)?;
    match lookup {
        CdacLookup::Lookahead => run_batch(
            &ModelPolicy {
                model: &vf,
                costs: *costs,
            },
            task,
            costs,
            batch,
        ),
        CdacLookup::NearestGridPoint => run_batch(&policy, task, costs, batch),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareConfig {
    pub trials: usize,
    pub seed: u64,
    pub initial: FixationAction,
    pub max_steps: usize,
    pub grid_m: usize,
    pub solver: SolverConfig,
    pub cdac_lookup: CdacLookup,
    pub calibration_trials: usize,
    pub accuracy_tol: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 0,
            initial: FixationAction(0),
            max_steps: 1000,
            grid_m: 201,
            solver: SolverConfig::default(),
            cdac_lookup: CdacLookup::default(),
            calibration_trials: 10_000,
            accuracy_tol: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub policy: String,
    pub c: f64,
    pub c_s: f64,
    pub threshold: Option<f64>,
    pub report: BatchReport,
    /// Set when baseline calibration saw non-monotone accuracy or could not
    /// match the reference within tolerance.
    pub warning: Option<String>,
}

/// Runs every policy under every cost setting. Baselines without a fixed
/// threshold are calibrated to the C-DAC accuracy of the same setting.
pub fn compare<T: Scalar>(
    policies: &[PolicySpec],
    task: &TaskSpec<T>,
    cost_grid: &[CostParams<T>],
    cfg: &CompareConfig,
) -> Result<Vec<ComparisonRow>> {
    if policies.len() < 2 {
        return Err(invalid("compare needs at least two policies"));
    }
    let needs_reference = policies
        .iter()
        .any(|p| matches!(p, PolicySpec::Baseline { threshold: None, .. }));
    if needs_reference && !policies.contains(&PolicySpec::Cdac) {
        return Err(invalid("calibrated baselines need the cdac policy as reference"));
    }
    let batch = BatchConfig {
        trials: cfg.trials,
        seed: cfg.seed,
        prior: BeliefState::uniform(task.k()),
        initial: cfg.initial,
        max_steps: cfg.max_steps,
    };
    let mut rows = Vec::new();
    for costs in cost_grid {
        let cdac_report = run_cdac_batch(task, costs, cfg.grid_m, &cfg.solver, cfg.cdac_lookup, &batch)?;
        for spec in policies {
            let (report, threshold, warning) = match *spec {
                PolicySpec::Cdac => (cdac_report.clone(), None, None),
                PolicySpec::Baseline { kind, threshold } => {
                    let (thr, warning) = match threshold {
                        Some(t) => (T::lit(t), None),
                        None => {
                            let cal = calibrate_threshold(
                                kind,
                                task,
                                costs,
                                cdac_report.accuracy.mean,
                                &CalibrationConfig {
                                    trials: cfg.calibration_trials,
                                    seed: cfg.seed,
                                    accuracy_tol: cfg.accuracy_tol,
                                    initial: cfg.initial,
                                    max_steps: cfg.max_steps,
                                    iterations: CalibrationConfig::DEFAULT_ITERATIONS,
                                },
                            )?;
                            (T::lit(cal.threshold), cal.warning)
                        }
                    };
                    let policy = ThresholdPolicy::new(kind, thr, task.k(), TieRule::UniformRandom)?;
                    (run_batch(&policy, task, costs, &batch)?, Some(thr.as_f64()), warning)
                }
            };
            rows.push(ComparisonRow {
                policy: spec.name().to_string(),
                c: costs.c().as_f64(),
                c_s: costs.c_s().as_f64(),
                threshold,
                report,
                warning,
            });
        }
    }
    Ok(rows)
}
