//! Greedy-MAP and Infomax fixation rules with a belief-threshold stop.
//!
//! Both baselines use the exact Bayesian update; they differ from C-DAC only
//! in how the next fixation is scored and in stopping at a fixed threshold.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::grid::SimplexGrid;
use crate::model::{entropy, BeliefState, CostParams, FixationAction, TaskSpec};
use crate::scalar::Scalar;
use crate::sim::{run_batch, BatchConfig, SearchPolicy};
use crate::solver::{PolicyAction, PolicyMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// Maximize the expected one-step-ahead maximum posterior.
    GreedyMap,
    /// Minimize the expected one-step-ahead posterior entropy.
    Infomax,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::GreedyMap => "greedy-map",
            BaselineKind::Infomax => "infomax",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "greedy-map" | "greedymap" | "greedy" => Some(BaselineKind::GreedyMap),
            "infomax" => Some(BaselineKind::Infomax),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TieRule {
    /// Report the whole tie set and act on its lowest index.
    ReportTies,
    /// Pick uniformly among tied actions with the episode's generator.
    UniformRandom,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdPolicy<T> {
    pub kind: BaselineKind,
    pub threshold: T,
    pub tie_rule: TieRule,
}

impl<T: Scalar> ThresholdPolicy<T> {
    /// `threshold` must lie in `(1/k, 1)`.
    pub fn new(kind: BaselineKind, threshold: T, k: usize, tie_rule: TieRule) -> Result<Self> {
        let lo = T::one() / T::lit(k as f64);
        if !(threshold > lo && threshold < T::one()) {
            return Err(invalid(format!("threshold {threshold} outside (1/{k}, 1)")));
        }
        Ok(Self {
            kind,
            threshold,
            tie_rule,
        })
    }
}

/// Expected maximum posterior after one observation at each fixation.
pub fn greedy_map_scores<T: Scalar>(task: &TaskSpec<T>, p: &BeliefState<T>) -> Vec<T> {
    task.actions()
        .map(|j| {
            task.branches(p, j)
                .into_iter()
                .filter_map(|b| b.posterior.map(|post| b.prob * post.max()))
                .sum()
        })
        .collect()
}

/// Expected posterior entropy after one observation at each fixation.
pub fn infomax_scores<T: Scalar>(task: &TaskSpec<T>, p: &BeliefState<T>) -> Vec<T> {
    task.actions()
        .map(|j| {
            task.branches(p, j)
                .into_iter()
                .filter_map(|b| b.posterior.map(|post| b.prob * entropy(&post)))
                .sum()
        })
        .collect()
}

/// Score-optimal fixations (all within the tie tolerance of the best), in
/// index order.
pub fn best_actions<T: Scalar>(kind: BaselineKind, task: &TaskSpec<T>, p: &BeliefState<T>) -> Vec<FixationAction> {
    // Orient both scores so that larger is better.
    let scores: Vec<T> = match kind {
        BaselineKind::GreedyMap => greedy_map_scores(task, p),
        BaselineKind::Infomax => infomax_scores(task, p).into_iter().map(|s| -s).collect(),
    };
    let best = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let tol = T::lit(T::TIE_TOL);
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= best - tol)
        .map(|(j, _)| FixationAction(j))
        .collect()
}

/// Outcome of one baseline decision, with the tie set it was chosen from.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineStep {
    pub action: PolicyAction,
    pub ties: Vec<FixationAction>,
}

/// Stops at the most likely location once `max p >= threshold`, otherwise
/// continues at a score-optimal fixation.
pub fn threshold_policy_step<T: Scalar, R: Rng + ?Sized>(
    policy: &ThresholdPolicy<T>,
    task: &TaskSpec<T>,
    p: &BeliefState<T>,
    rng: &mut R,
) -> BaselineStep {
    if p.max() >= policy.threshold {
        return BaselineStep {
            action: PolicyAction::Stop(p.argmax()),
            ties: Vec::new(),
        };
    }
    let ties = best_actions(policy.kind, task, p);
    let pick = match policy.tie_rule {
        TieRule::ReportTies => ties[0],
        TieRule::UniformRandom if ties.len() == 1 => ties[0],
        TieRule::UniformRandom => ties[rng.random_range(0..ties.len())],
    };
    BaselineStep {
        action: PolicyAction::Continue(pick),
        ties,
    }
}

impl<T: Scalar> SearchPolicy<T> for ThresholdPolicy<T> {
    fn decide(&self, task: &TaskSpec<T>, p: &BeliefState<T>, _: FixationAction, rng: &mut ChaCha8Rng) -> PolicyAction {
        threshold_policy_step(self, task, p, rng).action
    }
}

/// Baseline decisions over a grid, with the size of every continuation tie
/// set. Baselines ignore the current fixation, so all rows are identical.
pub fn baseline_policy_map<T: Scalar>(
    policy: &ThresholdPolicy<T>,
    task: &TaskSpec<T>,
    grid: Arc<SimplexGrid<T>>,
) -> Result<PolicyMap<T>> {
    let report = ThresholdPolicy {
        tie_rule: TieRule::ReportTies,
        ..*policy
    };
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(0);
    let steps: Vec<BaselineStep> = (0..grid.len())
        .map(|idx| threshold_policy_step(&report, task, &grid.belief(idx), &mut rng))
        .collect();
    let row: Vec<PolicyAction> = steps.iter().map(|s| s.action).collect();
    let ties: Vec<u8> = steps.iter().map(|s| s.ties.len() as u8).collect();
    let n = task.num_actions();
    PolicyMap::new(grid, task.clone(), None, vec![row; n]).map(|m| m.with_ties(vec![ties; n]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationConfig {
    pub trials: usize,
    pub seed: u64,
    pub accuracy_tol: f64,
    pub initial: FixationAction,
    pub max_steps: usize,
    /// Number of bisection steps.
    pub iterations: usize,
}

impl CalibrationConfig {
    pub const DEFAULT_ITERATIONS: usize = 18;
    /// Fewer trials leave the accuracy estimate too noisy to bisect on.
    pub const MIN_TRIALS: usize = 1000;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub threshold: f64,
    pub accuracy: f64,
    /// Achieved accuracy is within tolerance of the reference.
    pub matched: bool,
    pub warning: Option<String>,
    /// Every evaluated `(threshold, accuracy)` pair, in evaluation order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Bisects the stopping threshold so that simulated accuracy matches
/// `reference_accuracy`. The returned threshold is the largest evaluated one
/// whose accuracy does not exceed the reference.
pub fn calibrate_threshold<T: Scalar>(
    kind: BaselineKind,
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    reference_accuracy: f64,
    cfg: &CalibrationConfig,
) -> Result<Calibration> {
    let k = task.k() as f64;
    // References at or below chance cannot be matched by any threshold in
    // (1/k, 1); the search then reports the closest candidate with a warning.
    if !(0.0..=1.0).contains(&reference_accuracy) {
        return Err(invalid(format!(
            "reference accuracy {reference_accuracy} outside [0, 1]"
        )));
    }
    if cfg.trials < CalibrationConfig::MIN_TRIALS {
        return Err(invalid(format!(
            "calibration needs at least {} trials",
            CalibrationConfig::MIN_TRIALS
        )));
    }
    let batch = BatchConfig {
        trials: cfg.trials,
        seed: cfg.seed,
        prior: BeliefState::uniform(task.k()),
        initial: cfg.initial,
        max_steps: cfg.max_steps,
    };
    let accuracy_at = |thr: f64| -> Result<f64> {
        let policy = ThresholdPolicy::new(kind, T::lit(thr), task.k(), TieRule::UniformRandom)?;
        Ok(run_batch(&policy, task, costs, &batch)?.accuracy.mean)
    };

    let (mut lo, mut hi) = (1.0 / k, 1.0);
    let mut evaluations = Vec::with_capacity(cfg.iterations);
    let mut below: Option<(f64, f64)> = None;
    let mut above: Option<(f64, f64)> = None;
    for _ in 0..cfg.iterations.max(1) {
        let mid = 0.5 * (lo + hi);
        let acc = accuracy_at(mid)?;
        evaluations.push((mid, acc));
        if acc <= reference_accuracy {
            below = Some((mid, acc));
            lo = mid;
        } else {
            above = Some((mid, acc));
            hi = mid;
        }
    }

    // Binomial noise bound on accuracy differences between thresholds.
    let noise = 3.0 * (0.25 / cfg.trials as f64).sqrt();
    let mut sorted = evaluations.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let non_monotone = sorted.windows(2).any(|w| w[1].1 + noise < w[0].1);

    let (threshold, accuracy) = below.or(above).expect("at least one evaluation");
    let matched = (accuracy - reference_accuracy).abs() <= cfg.accuracy_tol;
    let mut warnings = Vec::new();
    if non_monotone {
        warnings.push("accuracy is not monotone in the threshold beyond sampling noise".to_string());
    }
    if !matched {
        warnings.push(format!(
            "best accuracy {accuracy:.4} misses reference {reference_accuracy:.4} by more than {}",
            cfg.accuracy_tol
        ));
    }
    Ok(Calibration {
        threshold,
        accuracy,
        matched,
        warning: (!warnings.is_empty()).then(|| warnings.join("; ")),
        evaluations,
    })
}
