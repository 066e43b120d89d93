//! Belief states, observation models and Bayesian updating.
//!
//! A task has `k` candidate target locations and a set of fixation actions.
//! Each fixation observes a subset of locations, each at an acuity level
//! `beta`. An observed location emits one Bernoulli bit with success
//! probability `beta` when it holds the target and `1 - beta` otherwise;
//! bits are conditionally independent given the target location.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Posterior over the `k` candidate target locations.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefState<T> {
    probs: Vec<T>,
}

impl<T: Scalar> BeliefState<T> {
    /// Validates a probability vector: entries in `[0, 1]`, sum within the
    /// scalar's simplex tolerance. The stored vector is renormalized.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("belief must have at least one entry"));
        }
        let tol = T::lit(T::SIMPLEX_TOL);
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < -tol || p > T::one() + tol {
                return Err(invalid(format!("belief entry {i} = {p} outside [0, 1]")));
            }
        }
        let sum: T = probs.iter().copied().sum();
        if (sum - T::one()).abs() > tol {
            return Err(invalid(format!("belief sums to {sum}, expected 1")));
        }
        Ok(Self::normalized(probs))
    }

    /// Normalizes an arbitrary nonnegative weight vector.
    pub fn from_weights(weights: Vec<T>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let sum: T = weights.iter().copied().sum();
        if sum <= T::zero() {
            return Err(Error::DegenerateModel("all posterior mass is zero".into()));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn uniform(k: usize) -> Self {
        let v = T::one() / T::lit(k as f64);
        Self { probs: vec![v; k] }
    }

    /// Point mass on `location`.
    pub fn certain(k: usize, location: usize) -> Self {
        let mut probs = vec![T::zero(); k];
        probs[location] = T::one();
        Self { probs }
    }

    fn normalized(mut probs: Vec<T>) -> Self {
        for p in probs.iter_mut() {
            *p = p.max(T::zero()).min(T::one());
        }
        let sum: T = probs.iter().copied().sum();
        for p in probs.iter_mut() {
            *p /= sum;
        }
        Self { probs }
    }

    pub(crate) fn from_raw(probs: Vec<T>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, i: usize) -> T {
        self.probs[i]
    }

    /// Most likely location; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> T {
        self.probs[self.argmax()]
    }

    /// Relabels locations: entry `i` moves to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut probs = vec![T::zero(); self.k()];
        for (i, &p) in self.probs.iter().enumerate() {
            probs[perm[i]] = p;
        }
        Self { probs }
    }
}

/// Index into a task's continuation-action set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FixationAction(pub usize);

impl FixationAction {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Binary observation vector, one bit per location the fixation covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Observation {
    bits: u32,
    arity: u8,
}

impl Observation {
    pub fn new(bits: &[u8]) -> Result<Self> {
        if bits.is_empty() || bits.len() > 16 {
            return Err(invalid("observation arity must be between 1 and 16"));
        }
        let mut packed = 0u32;
        for (j, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => packed |= 1 << j,
                _ => return Err(invalid(format!("observation bit {j} = {b} is not binary"))),
            }
        }
        Ok(Self {
            bits: packed,
            arity: bits.len() as u8,
        })
    }

    pub(crate) fn from_packed(bits: u32, arity: usize) -> Self {
        Self {
            bits,
            arity: arity as u8,
        }
    }

    /// All `2^arity` outcomes, in increasing packed order.
    pub fn all(arity: usize) -> impl Iterator<Item = Observation> {
        (0..1u32 << arity).map(move |b| Observation::from_packed(b, arity))
    }

    pub fn arity(&self) -> usize {
        self.arity as usize
    }

    pub fn bit(&self, j: usize) -> u8 {
        ((self.bits >> j) & 1) as u8
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.arity()).map(|j| self.bit(j)).collect()
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.arity() {
            write!(f, "{}", self.bit(j))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    /// Fixate one of three locations; stop only at the fixated one.
    Task1,
    /// Peripheral vision with seven fixations and four acuity levels.
    Task2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopRule {
    CurrentFixationOnly,
    AnyLocation,
}

const TASK1_NAMES: [&str; 3] = ["1", "2", "3"];
const TASK2_NAMES: [&str; 7] = ["l1", "l2", "l3", "l12", "l23", "l13", "l123"];

/// Observation model and action set of a search task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec<T> {
    kind: TaskKind,
    k: usize,
    betas: Vec<T>,
    /// Per action, per location: acuity level index into `betas`, or `None`
    /// when the location is not observed.
    coverage: Vec<Vec<Option<usize>>>,
    stop_rule: StopRule,
}

impl<T: Scalar> TaskSpec<T> {
    /// Three locations, fixation observes only itself at `beta1`, and the
    /// distractor parameter is `1 - beta1`. Requires `0.5 < beta1 <= 1`.
    pub fn task1(beta1: T) -> Result<Self> {
        if !(beta1 > T::lit(0.5) && beta1 <= T::one()) {
            return Err(invalid(format!("task1 requires 0.5 < beta1 <= 1, got {beta1}")));
        }
        let coverage = (0..3)
            .map(|a| (0..3).map(|loc| (loc == a).then_some(0)).collect())
            .collect();
        Ok(Self {
            kind: TaskKind::Task1,
            k: 3,
            betas: vec![beta1],
            coverage,
            stop_rule: StopRule::CurrentFixationOnly,
        })
    }

    /// Peripheral-vision task. Requires `1 > b1 > b2 > b3 > b4 >= 0.5`.
    pub fn task2(betas: [T; 4]) -> Result<Self> {
        let [b1, b2, b3, b4] = betas;
        let ok = T::one() > b1 && b1 > b2 && b2 > b3 && b3 > b4 && b4 >= T::lit(0.5);
        if !ok {
            return Err(invalid(format!(
                "task2 requires 1 > beta1 > beta2 > beta3 > beta4 >= 0.5, got ({b1}, {b2}, {b3}, {b4})"
            )));
        }
        // Level indices: 0 = fixated, 1 = adjacent midpoint, 2 = center, 3 = far.
        let coverage = vec![
            vec![Some(0), Some(3), Some(3)],
            vec![Some(3), Some(0), Some(3)],
            vec![Some(3), Some(3), Some(0)],
            vec![Some(1), Some(1), Some(3)],
            vec![Some(3), Some(1), Some(1)],
            vec![Some(1), Some(3), Some(1)],
            vec![Some(2), Some(2), Some(2)],
        ];
        Ok(Self {
            kind: TaskKind::Task2,
            k: 3,
            betas: betas.to_vec(),
            coverage,
            stop_rule: StopRule::AnyLocation,
        })
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn betas(&self) -> &[T] {
        &self.betas
    }

    pub fn stop_rule(&self) -> StopRule {
        self.stop_rule
    }

    pub fn num_actions(&self) -> usize {
        self.coverage.len()
    }

    pub fn actions(&self) -> impl Iterator<Item = FixationAction> {
        (0..self.num_actions()).map(FixationAction)
    }

    pub fn action_name(&self, a: FixationAction) -> &'static str {
        match self.kind {
            TaskKind::Task1 => TASK1_NAMES[a.0],
            TaskKind::Task2 => TASK2_NAMES[a.0],
        }
    }

    pub fn parse_action(&self, name: &str) -> Option<FixationAction> {
        let names: &[&str] = match self.kind {
            TaskKind::Task1 => &TASK1_NAMES,
            TaskKind::Task2 => &TASK2_NAMES,
        };
        let bare = name.trim().trim_start_matches('l');
        names
            .iter()
            .position(|n| n.trim_start_matches('l') == bare)
            .map(FixationAction)
    }

    /// The fixation that looks directly at `location`, if any.
    pub fn location_action(&self, location: usize) -> Option<FixationAction> {
        (location < self.k).then_some(FixationAction(location))
    }

    /// The location a fixation looks directly at (Task 1 actions and the
    /// first three Task 2 actions).
    pub fn fixated_location(&self, a: FixationAction) -> Option<usize> {
        (a.0 < self.k).then_some(a.0)
    }

    /// Number of bits each observation carries.
    pub fn obs_arity(&self) -> usize {
        match self.kind {
            TaskKind::Task1 => 1,
            TaskKind::Task2 => self.k,
        }
    }

    /// Acuity level of every location under fixation `a`.
    pub fn coverage(&self, a: FixationAction) -> &[Option<usize>] {
        &self.coverage[a.0]
    }

    fn check_action(&self, a: FixationAction) -> Result<()> {
        if a.0 >= self.num_actions() {
            return Err(invalid(format!(
                "action {} out of range (task has {})",
                a.0,
                self.num_actions()
            )));
        }
        Ok(())
    }

    fn check_belief(&self, p: &BeliefState<T>) -> Result<()> {
        if p.k() != self.k {
            return Err(invalid(format!(
                "belief has {} entries, task has {} locations",
                p.k(),
                self.k
            )));
        }
        Ok(())
    }

    /// `P(x | s, a)` without validation.
    pub(crate) fn lik(&self, s: usize, a: FixationAction, x: Observation) -> T {
        let mut out = T::one();
        let mut bit = 0;
        for (loc, level) in self.coverage[a.0].iter().enumerate() {
            let Some(level) = level else { continue };
            let beta = self.betas[*level];
            let q = if loc == s { beta } else { T::one() - beta };
            out *= if x.bit(bit) == 1 { q } else { T::one() - q };
            bit += 1;
        }
        out
    }

    /// Posterior branches for every observation outcome under fixation `a`:
    /// marginal probability and (when that probability is positive) the
    /// updated belief.
    pub(crate) fn branches(&self, p: &BeliefState<T>, a: FixationAction) -> Vec<Branch<T>> {
        Observation::all(self.obs_arity())
            .map(|x| {
                let numer: Vec<T> = (0..self.k)
                    .map(|i| {
                        if p.probs[i] == T::zero() {
                            T::zero()
                        } else {
                            self.lik(i, a, x) * p.probs[i]
                        }
                    })
                    .collect();
                let prob: T = numer.iter().copied().sum();
                let posterior =
                    (prob > T::zero()).then(|| BeliefState::from_raw(numer.into_iter().map(|v| v / prob).collect()));
                Branch {
                    obs: x,
                    prob,
                    posterior,
                }
            })
            .collect()
    }
}

/// One observation outcome of a fixation.
#[derive(Clone, Debug)]
pub struct Branch<T> {
    pub obs: Observation,
    pub prob: T,
    pub posterior: Option<BeliefState<T>>,
}

/// Time cost per observation and cost per fixation switch; errors cost 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostParams<T> {
    c: T,
    c_s: T,
}

impl<T: Scalar> CostParams<T> {
    pub fn new(c: T, c_s: T) -> Result<Self> {
        if !(c > T::zero() && c.is_finite()) {
            return Err(invalid(format!("time cost c must be > 0, got {c}")));
        }
        if !(c_s >= T::zero() && c_s.is_finite()) {
            return Err(invalid(format!("switch cost c_s must be >= 0, got {c_s}")));
        }
        Ok(Self { c, c_s })
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn c_s(&self) -> T {
        self.c_s
    }

    pub fn error_cost(&self) -> T {
        T::one()
    }

    /// Total trial cost `c * steps + c_s * switches + 1{error}`.
    pub fn trial_cost(&self, steps: usize, switches: usize, error: bool) -> T {
        let err = if error { T::one() } else { T::zero() };
        self.c * T::lit(steps as f64) + self.c_s * T::lit(switches as f64) + err
    }
}

/// Running state of an episode. The initial fixation is where the agent
/// starts; moving away from it counts as a switch, so `n_switches <= t`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeState<T> {
    pub belief: BeliefState<T>,
    pub fixation: FixationAction,
    pub t: usize,
    pub n_switches: usize,
}

impl<T: Scalar> EpisodeState<T> {
    pub fn new(belief: BeliefState<T>, fixation: FixationAction) -> Self {
        Self {
            belief,
            fixation,
            t: 0,
            n_switches: 0,
        }
    }

    /// Moves to `next`, observes `x` there and updates the belief.
    pub fn advance(&mut self, task: &TaskSpec<T>, next: FixationAction, x: Observation) -> Result<()> {
        self.belief = belief_update(task, &self.belief, next, x)?;
        if next != self.fixation {
            self.n_switches += 1;
        }
        self.fixation = next;
        self.t += 1;
        Ok(())
    }
}

/// Likelihood `P(x | s, a)` of observation `x` when the target is at `s`.
pub fn likelihood<T: Scalar>(task: &TaskSpec<T>, s: usize, a: FixationAction, x: Observation) -> Result<T> {
    task.check_action(a)?;
    if s >= task.k() {
        return Err(invalid(format!("target location {s} out of range")));
    }
    if x.arity() != task.obs_arity() {
        return Err(invalid(format!(
            "observation arity {} does not match task arity {}",
            x.arity(),
            task.obs_arity()
        )));
    }
    Ok(task.lik(s, a, x))
}

/// Bayes update of `p` after observing `x` under fixation `a`. Zero-prior
/// locations stay at zero.
pub fn belief_update<T: Scalar>(
    task: &TaskSpec<T>,
    p: &BeliefState<T>,
    a: FixationAction,
    x: Observation,
) -> Result<BeliefState<T>> {
    task.check_belief(p)?;
    let weights = (0..task.k())
        .map(|i| {
            let l = likelihood(task, i, a, x)?;
            Ok(if p.probs[i] == T::zero() {
                T::zero()
            } else {
                l * p.probs[i]
            })
        })
        .collect::<Result<Vec<T>>>()?;
    BeliefState::from_weights(weights)
}

/// Marginal distribution of the next observation under fixation `a`.
pub fn predictive_obs_dist<T: Scalar>(
    task: &TaskSpec<T>,
    p: &BeliefState<T>,
    a: FixationAction,
) -> Result<Vec<(Observation, T)>> {
    task.check_belief(p)?;
    task.check_action(a)?;
    Ok(Observation::all(task.obs_arity())
        .map(|x| {
            let prob = (0..task.k()).map(|i| p.probs[i] * task.lik(i, a, x)).sum();
            (x, prob)
        })
        .collect())
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy<T: Scalar>(p: &BeliefState<T>) -> T {
    let h: T = p.probs.iter().filter(|&&q| q > T::zero()).map(|&q| -q * q.ln()).sum();
    h.max(T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn obs(bits: &[u8]) -> Observation {
        Observation::new(bits).unwrap()
    }

    fn third() -> BeliefState<f64> {
        BeliefState::uniform(3)
    }

    #[test]
    fn task1_likelihood_values() {
        let task = TaskSpec::task1(0.9).unwrap();
        assert_abs_diff_eq!(likelihood(&task, 0, FixationAction(0), obs(&[1])).unwrap(), 0.9);
        assert_abs_diff_eq!(
            likelihood(&task, 1, FixationAction(0), obs(&[1])).unwrap(),
            0.1,
            epsilon = 1e-15
        );
    }

    #[test]
    fn task2_likelihood_is_product_of_bits() {
        let task = TaskSpec::task2([0.62, 0.6, 0.55, 0.5]).unwrap();
        let l123 = task.parse_action("l123").unwrap();
        // target bit 1 at 0.55, distractor bits 0 at 1 - 0.45
        let l = likelihood(&task, 0, l123, obs(&[1, 0, 0])).unwrap();
        assert_abs_diff_eq!(l, 0.55 * 0.55 * 0.55, epsilon = 1e-15);
        let l = likelihood(&task, 0, l123, obs(&[1, 1, 1])).unwrap();
        assert_abs_diff_eq!(l, 0.111375, epsilon = 1e-15);
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let task = TaskSpec::task1(0.9).unwrap();
        assert!(matches!(
            likelihood(&task, 0, FixationAction(0), obs(&[1, 0, 0])),
            Err(Error::InvalidInput(_))
        ));
        let task2 = TaskSpec::task2([0.62, 0.6, 0.55, 0.5]).unwrap();
        assert!(likelihood(&task2, 0, FixationAction(0), obs(&[1])).is_err());
    }

    #[test]
    fn update_examples() {
        let task = TaskSpec::task1(0.9).unwrap();
        let post = belief_update(&task, &third(), FixationAction(0), obs(&[1])).unwrap();
        let expect = [
            0.3 / 0.3666666666666667,
            0.0333333333333333 / 0.3666666666666667,
            0.0333333333333333 / 0.3666666666666667,
        ];
        for (a, b) in post.probs().iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(post.get(0), 0.8182, epsilon = 1e-4);
        assert_abs_diff_eq!(post.get(1), 0.0909, epsilon = 1e-4);

        let post = belief_update(&task, &third(), FixationAction(0), obs(&[0])).unwrap();
        assert_abs_diff_eq!(post.get(0), 0.0526, epsilon = 1e-4);
        assert_abs_diff_eq!(post.get(1), 0.4737, epsilon = 1e-4);
        assert_abs_diff_eq!(post.get(2), 0.4737, epsilon = 1e-4);
    }

    #[test]
    fn degenerate_belief_is_absorbing() {
        for beta in [0.6, 0.9, 1.0] {
            let task = TaskSpec::task1(beta).unwrap();
            let p = BeliefState::certain(3, 0);
            for a in task.actions() {
                for x in [0u8, 1] {
                    if let Ok(post) = belief_update(&task, &p, a, obs(&[x])) {
                        assert_eq!(post.probs(), &[1.0, 0.0, 0.0]);
                    }
                }
            }
        }
    }

    #[test]
    fn noise_free_impossible_observation_is_degenerate() {
        let task = TaskSpec::task1(1.0).unwrap();
        let p = BeliefState::certain(3, 0);
        let err = belief_update(&task, &p, FixationAction(0), obs(&[0])).unwrap_err();
        assert!(matches!(err, Error::DegenerateModel(_)));
    }

    #[test]
    fn predictive_examples() {
        let task = TaskSpec::task1(0.9).unwrap();
        let d = predictive_obs_dist(&task, &third(), FixationAction(0)).unwrap();
        let p1 = d.iter().find(|(x, _)| x.bit(0) == 1).unwrap().1;
        let p0 = d.iter().find(|(x, _)| x.bit(0) == 0).unwrap().1;
        assert_abs_diff_eq!(p1, 1.1 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p0, 1.9 / 3.0, epsilon = 1e-12);

        let d = predictive_obs_dist(&task, &BeliefState::certain(3, 0), FixationAction(0)).unwrap();
        assert_abs_diff_eq!(d.iter().find(|(x, _)| x.bit(0) == 1).unwrap().1, 0.9);

        let task2 = TaskSpec::task2([0.9, 0.8, 0.7, 0.6]).unwrap();
        let d = predictive_obs_dist(&task2, &third(), FixationAction(6)).unwrap();
        assert_eq!(d.len(), 8);
        assert_abs_diff_eq!(d.iter().map(|(_, p)| p).sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(entropy(&third()), 3f64.ln(), epsilon = 1e-12);
        assert_eq!(entropy(&BeliefState::<f64>::certain(3, 0)), 0.0);
        let half = BeliefState::new(vec![0.5, 0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(entropy(&half), 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn beta_bounds_enforced() {
        assert!(TaskSpec::task1(0.5).is_err());
        assert!(TaskSpec::task1(1.01).is_err());
        assert!(TaskSpec::task1(1.0).is_ok());
        assert!(TaskSpec::task2([1.0, 0.6, 0.55, 0.5]).is_err());
        assert!(TaskSpec::task2([0.62, 0.6, 0.6, 0.5]).is_err());
        assert!(TaskSpec::task2([0.62, 0.6, 0.55, 0.49]).is_err());
        assert!(TaskSpec::task2([0.62, 0.6, 0.55, 0.5]).is_ok());
    }

    #[test]
    fn cost_params_validation() {
        assert!(CostParams::new(0.0, 0.0).is_err());
        assert!(CostParams::new(0.1, -0.1).is_err());
        let c = CostParams::new(0.1, 0.2).unwrap();
        assert_abs_diff_eq!(c.trial_cost(3, 2, true), 1.7, epsilon = 1e-12);
    }

    #[test]
    fn belief_validation() {
        assert!(BeliefState::new(vec![0.5, 0.6, -0.1]).is_err());
        assert!(BeliefState::new(vec![0.5, 0.4, 0.0]).is_err());
        assert!(BeliefState::new(vec![0.2, 0.3, 0.5]).is_ok());
        assert_eq!(BeliefState::new(vec![0.4, 0.4, 0.2]).unwrap().argmax(), 0);
    }

    #[test]
    fn task2_coverage_matches_acuity_layout() {
        let task = TaskSpec::task2([0.9, 0.8, 0.7, 0.6]).unwrap();
        let l13 = task.parse_action("l13").unwrap();
        assert_eq!(task.coverage(l13), &[Some(1), Some(3), Some(1)]);
        assert_eq!(task.parse_action("l2"), Some(FixationAction(1)));
        assert_eq!(task.action_name(FixationAction(6)), "l123");
    }

    #[test]
    fn episode_counts_switches() {
        let task = TaskSpec::task1(0.9).unwrap();
        let mut st = EpisodeState::new(third(), FixationAction(0));
        st.advance(&task, FixationAction(0), obs(&[0])).unwrap();
        st.advance(&task, FixationAction(1), obs(&[1])).unwrap();
        assert_eq!((st.t, st.n_switches), (2, 1));
    }
}
