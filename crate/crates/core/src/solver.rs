//! Exact C-DAC policy by value iteration over the simplex grid.
//!
//! The recursion is written in incremental costs: stopping costs the
//! expected error, continuing at `j` from fixation `k` costs
//! `c + c_s 1{j != k} + E[V(p', j)]`. Costs already paid are common to all
//! actions and drop out of the argmin.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{Interpolation, SimplexGrid, Stencil, ValueFunction};
use crate::model::{BeliefState, CostParams, FixationAction, StopRule, TaskSpec};
use crate::scalar::Scalar;

/// Anything that can evaluate `V(p, a)` at an arbitrary belief.
pub trait ValueModel<T: Scalar>: Sync {
    fn num_actions(&self) -> usize;
    fn value(&self, a: FixationAction, p: &[T]) -> T;
}

impl<T: Scalar> ValueModel<T> for ValueFunction<T> {
    fn num_actions(&self) -> usize {
        ValueFunction::num_actions(self)
    }

    fn value(&self, a: FixationAction, p: &[T]) -> T {
        self.interpolate_raw(a, p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyAction {
    /// Stop and declare this location.
    Stop(usize),
    /// Take the next observation at this fixation.
    Continue(FixationAction),
}

impl PolicyAction {
    pub fn is_stop(&self) -> bool {
        matches!(self, PolicyAction::Stop(_))
    }
}

/// Location declared when stopping at `p` while fixating `a`.
pub fn stop_location<T: Scalar>(task: &TaskSpec<T>, p: &[T], a: FixationAction) -> usize {
    match task.stop_rule() {
        StopRule::CurrentFixationOnly => task
            .fixated_location(a)
            .expect("fixation-restricted stopping needs a location fixation"),
        StopRule::AnyLocation => argmax(p),
    }
}

fn argmax<T: Scalar>(p: &[T]) -> usize {
    let mut best = 0;
    for i in 1..p.len() {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

/// Expected error cost of stopping now.
pub fn stopping_cost<T: Scalar>(task: &TaskSpec<T>, p: &BeliefState<T>, a: FixationAction) -> T {
    stop_cost_raw(task, p.probs(), a)
}

fn stop_cost_raw<T: Scalar>(task: &TaskSpec<T>, p: &[T], a: FixationAction) -> T {
    T::one() - p[stop_location(task, p, a)]
}

/// `E[V(p', j)]` for every fixation `j`, expectation taken exactly over the
/// observation outcomes.
pub fn expected_next_values<T: Scalar, M: ValueModel<T> + ?Sized>(
    task: &TaskSpec<T>,
    model: &M,
    p: &BeliefState<T>,
) -> Vec<T> {
    task.actions()
        .map(|j| {
            task.branches(p, j)
                .into_iter()
                .filter_map(|b| b.posterior.map(|post| b.prob * model.value(j, post.probs())))
                .sum()
        })
        .collect()
}

/// Stopping and continuation Q-factors at one belief and fixation.
#[derive(Clone, Debug, PartialEq)]
pub struct QFactors<T> {
    pub current: FixationAction,
    pub stop: T,
    pub stop_location: usize,
    /// Indexed by the next fixation.
    pub cont: Vec<T>,
}

impl<T: Scalar> QFactors<T> {
    pub(crate) fn from_expected(
        task: &TaskSpec<T>,
        costs: &CostParams<T>,
        current: FixationAction,
        p: &[T],
        expected: &[T],
    ) -> Self {
        let cont = expected
            .iter()
            .enumerate()
            .map(|(j, &e)| {
                let switch = if j == current.0 { T::zero() } else { costs.c_s() };
                costs.c() + switch + e
            })
            .collect();
        Self {
            current,
            stop: stop_cost_raw(task, p, current),
            stop_location: stop_location(task, p, current),
            cont,
        }
    }

    /// Best continuation; ties prefer staying, then the lowest index.
    pub fn best_continuation(&self) -> (FixationAction, T) {
        let mut best = self.current.0;
        for (j, &q) in self.cont.iter().enumerate() {
            if q < self.cont[best] {
                best = j;
            }
        }
        (FixationAction(best), self.cont[best])
    }

    /// Stop when the stopping cost does not exceed the best continuation.
    pub fn decide(&self) -> PolicyAction {
        let (next, q) = self.best_continuation();
        if self.stop <= q {
            PolicyAction::Stop(self.stop_location)
        } else {
            PolicyAction::Continue(next)
        }
    }

    pub fn value(&self) -> T {
        self.stop.min(self.best_continuation().1)
    }
}

/// Q-factors at `p` for fixation `current`, next values read from `model`.
pub fn q_factors<T: Scalar, M: ValueModel<T> + ?Sized>(
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    model: &M,
    current: FixationAction,
    p: &BeliefState<T>,
) -> QFactors<T> {
    let expected = expected_next_values(task, model, p);
    QFactors::from_expected(task, costs, current, p.probs(), &expected)
}

/// `c + c_s 1{next != current} + E[V(p', next)]`.
pub fn continuation_q<T: Scalar>(
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    vf: &ValueFunction<T>,
    current: FixationAction,
    next: FixationAction,
    p: &BeliefState<T>,
) -> T {
    let expected: T = task
        .branches(p, next)
        .into_iter()
        .filter_map(|b| b.posterior.map(|post| b.prob * vf.interpolate_raw(next, post.probs())))
        .sum();
    let switch = if next == current { T::zero() } else { costs.c_s() };
    costs.c() + switch + expected
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iters: usize,
    pub interp: Interpolation,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iters: 1000,
            interp: Interpolation::Barycentric,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_delta: f64,
    pub wall_time: f64,
    /// Sup-norm change of every sweep.
    pub deltas: Vec<f64>,
}

/// Observation branches of every (grid point, fixation) pair with their
/// interpolation stencils. Beliefs off the lattice are never snapped.
struct Transitions<T> {
    num_actions: usize,
    offsets: Vec<u32>,
    entries: Vec<(T, Stencil<T>)>,
}

/// Observation branches per fixation of one grid point.
type PointBranches<T> = Vec<Vec<(T, Stencil<T>)>>;

impl<T: Scalar> Transitions<T> {
    fn build(task: &TaskSpec<T>, grid: &SimplexGrid<T>, interp: Interpolation) -> Self {
        let num_actions = task.num_actions();
        let per_point: Vec<PointBranches<T>> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let p = grid.belief(idx);
                task.actions()
                    .map(|j| {
                        task.branches(&p, j)
                            .into_iter()
                            .filter_map(|b| {
                                let post = b.posterior?;
                                let st = match interp {
                                    Interpolation::Barycentric => grid.stencil(post.probs()),
                                    Interpolation::NearestNeighbor => {
                                        let n = grid.nearest(post.probs()) as u32;
                                        Stencil {
                                            idx: [n, n, n],
                                            w: [T::one(), T::zero(), T::zero()],
                                        }
                                    }
                                };
                                Some((b.prob, st))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut offsets = Vec::with_capacity(grid.len() * num_actions + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for point in per_point {
            for branches in point {
                entries.extend(branches);
                offsets.push(entries.len() as u32);
            }
        }
        Self {
            num_actions,
            offsets,
            entries,
        }
    }

    #[inline]
    fn expected(&self, idx: usize, j: usize, table: &[T]) -> T {
        let slot = idx * self.num_actions + j;
        let range = self.offsets[slot] as usize..self.offsets[slot + 1] as usize;
        self.entries[range]
            .iter()
            .map(|(prob, st)| *prob * st.apply(table))
            .sum()
    }
}

/// Jacobi-style value iteration state, exposed for step-by-step inspection.
pub struct ValueIterator<T> {
    task: TaskSpec<T>,
    costs: CostParams<T>,
    grid: Arc<SimplexGrid<T>>,
    interp: Interpolation,
    transitions: Transitions<T>,
    stop: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
}

impl<T: Scalar> ValueIterator<T> {
    /// Starts from the stopping cost, an upper bound on the optimal value.
    pub fn new(
        task: &TaskSpec<T>,
        costs: &CostParams<T>,
        grid: Arc<SimplexGrid<T>>,
        interp: Interpolation,
    ) -> Result<Self> {
        if task.k() != 3 {
            return Err(invalid("the grid solver supports exactly three locations"));
        }
        let transitions = Transitions::build(task, &grid, interp);
        let stop: Vec<Vec<T>> = task
            .actions()
            .map(|a| grid.points().iter().map(|p| stop_cost_raw(task, p, a)).collect())
            .collect();
        Ok(Self {
            task: task.clone(),
            costs: *costs,
            grid,
            interp,
            transitions,
            values: stop.clone(),
            stop,
        })
    }

    fn expected_tables(&self) -> Vec<Vec<T>> {
        (0..self.task.num_actions())
            .map(|j| {
                let table = &self.values[j];
                (0..self.grid.len())
                    .into_par_iter()
                    .map(|idx| self.transitions.expected(idx, j, table))
                    .collect()
            })
            .collect()
    }

    /// One Bellman sweep; returns the sup-norm change.
    pub fn step(&mut self) -> f64 {
        let expected = self.expected_tables();
        let (c, c_s) = (self.costs.c(), self.costs.c_s());
        let num_actions = self.task.num_actions();
        let mut delta = 0.0f64;
        let mut next = Vec::with_capacity(num_actions);
        for a in 0..num_actions {
            let stop = &self.stop[a];
            let row: Vec<T> = (0..self.grid.len())
                .into_par_iter()
                .map(|idx| {
                    let mut best = stop[idx];
                    for (j, e) in expected.iter().enumerate() {
                        let q = c + if j == a { T::zero() } else { c_s } + e[idx];
                        if q < best {
                            best = q;
                        }
                    }
                    best
                })
                .collect();
            let d = row
                .par_iter()
                .zip(self.values[a].par_iter())
                .map(|(n, o)| (*n - *o).abs().as_f64())
                .reduce(|| 0.0, f64::max);
            delta = delta.max(d);
            next.push(row);
        }
        self.values = next;
        delta
    }

    pub fn values(&self) -> &[Vec<T>] {
        &self.values
    }

    pub fn value_function(&self) -> ValueFunction<T> {
        ValueFunction::new(self.grid.clone(), self.values.clone(), self.interp).expect("iterates stay finite")
    }

    /// Largest Bellman residual over the grid for the current table.
    pub fn residual(&self) -> f64 {
        let expected = self.expected_tables();
        let mut worst = 0.0f64;
        for a in 0..self.task.num_actions() {
            for idx in 0..self.grid.len() {
                let mut best = self.stop[a][idx];
                for (j, e) in expected.iter().enumerate() {
                    let q = self.costs.c() + if j == a { T::zero() } else { self.costs.c_s() } + e[idx];
                    best = best.min(q);
                }
                worst = worst.max((best - self.values[a][idx]).abs().as_f64());
            }
        }
        worst
    }

    fn policy(&self) -> Vec<Vec<PolicyAction>> {
        let expected = self.expected_tables();
        self.task
            .actions()
            .map(|a| {
                (0..self.grid.len())
                    .into_par_iter()
                    .map(|idx| {
                        let e: Vec<T> = expected.iter().map(|t| t[idx]).collect();
                        QFactors::from_expected(&self.task, &self.costs, a, &self.grid.point(idx), &e).decide()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Iterates the Bellman recursion from the stopping cost until the sup-norm
/// change drops to `config.tolerance`.
pub fn value_iteration<T: Scalar>(
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    grid: Arc<SimplexGrid<T>>,
    config: &SolverConfig,
) -> Result<(ValueFunction<T>, SolveReport)> {
    if !(config.tolerance > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let start = Instant::now();
    let mut it = ValueIterator::new(task, costs, grid, config.interp)?;
    let mut deltas = Vec::new();
    for _ in 0..config.max_iters {
        let delta = it.step();
        deltas.push(delta);
        if delta <= config.tolerance {
            let report = SolveReport {
                iterations: deltas.len(),
                final_delta: delta,
                wall_time: start.elapsed().as_secs_f64(),
                deltas,
            };
            return Ok((it.value_function(), report));
        }
    }
    Err(Error::NonConvergence {
        iterations: deltas.len(),
        last_delta: deltas.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Per-fixation stop/continue assignment of every grid point.
#[derive(Clone, Debug)]
pub struct PolicyMap<T> {
    grid: Arc<SimplexGrid<T>>,
    task: TaskSpec<T>,
    costs: Option<CostParams<T>>,
    actions: Vec<Vec<PolicyAction>>,
    /// Number of tied best continuations per (fixation, point); only
    /// populated by baselines that report ties.
    ties: Option<Vec<Vec<u8>>>,
    pub report: Option<SolveReport>,
}

impl<T: Scalar> PolicyMap<T> {
    pub fn new(
        grid: Arc<SimplexGrid<T>>,
        task: TaskSpec<T>,
        costs: Option<CostParams<T>>,
        actions: Vec<Vec<PolicyAction>>,
    ) -> Result<Self> {
        if actions.len() != task.num_actions() || actions.iter().any(|r| r.len() != grid.len()) {
            return Err(invalid("policy table shape does not match task and grid"));
        }
        Ok(Self {
            grid,
            task,
            costs,
            actions,
            ties: None,
            report: None,
        })
    }

    pub fn with_ties(mut self, ties: Vec<Vec<u8>>) -> Self {
        self.ties = Some(ties);
        self
    }

    pub fn grid(&self) -> &Arc<SimplexGrid<T>> {
        &self.grid
    }

    pub fn task(&self) -> &TaskSpec<T> {
        &self.task
    }

    pub fn costs(&self) -> Option<&CostParams<T>> {
        self.costs.as_ref()
    }

    pub fn ties(&self) -> Option<&[Vec<u8>]> {
        self.ties.as_deref()
    }

    pub fn action(&self, fixation: FixationAction, idx: usize) -> PolicyAction {
        self.actions[fixation.0][idx]
    }

    pub fn table(&self, fixation: FixationAction) -> &[PolicyAction] {
        &self.actions[fixation.0]
    }

    /// Action at the grid point nearest to `p`.
    pub fn lookup(&self, fixation: FixationAction, p: &[T]) -> PolicyAction {
        self.actions[fixation.0][self.grid.nearest(p)]
    }

    pub fn stop_count(&self, fixation: FixationAction) -> usize {
        self.actions[fixation.0].iter().filter(|a| a.is_stop()).count()
    }

    /// Fraction of (fixation, point) cells where both maps agree.
    pub fn agreement(&self, other: &PolicyMap<T>) -> Result<f64> {
        if self.grid.m() != other.grid.m() || self.actions.len() != other.actions.len() {
            return Err(invalid("policy maps are defined on different grids or tasks"));
        }
        let total = self.actions.len() * self.grid.len();
        let same = self
            .actions
            .iter()
            .zip(&other.actions)
            .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x == y).count())
            .sum::<usize>();
        Ok(same as f64 / total as f64)
    }

    /// Agreement restricted to one fixation.
    pub fn agreement_for(&self, other: &PolicyMap<T>, fixation: FixationAction) -> f64 {
        let a = &self.actions[fixation.0];
        let b = &other.actions[fixation.0];
        a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
    }
}

/// Policy implied by a value table: stop on ties, otherwise the best
/// continuation (staying preferred, then lowest index).
pub fn extract_policy<T: Scalar>(
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    vf: &ValueFunction<T>,
) -> Result<PolicyMap<T>> {
    let mut it = ValueIterator::new(task, costs, vf.grid().clone(), vf.interp())?;
    if vf.num_actions() != task.num_actions() {
        return Err(invalid("value function and task disagree on the action set"));
    }
    it.values = vf.tables().to_vec();
    let actions = it.policy();
    PolicyMap::new(vf.grid().clone(), task.clone(), Some(*costs), actions)
}

/// Greedy one-step-lookahead policy of any value model over a grid.
pub fn policy_from_model<T: Scalar, M: ValueModel<T>>(
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    model: &M,
    grid: Arc<SimplexGrid<T>>,
) -> Result<PolicyMap<T>> {
    let expected: Vec<Vec<T>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| expected_next_values(task, model, &grid.belief(idx)))
        .collect();
    let actions = task
        .actions()
        .map(|a| {
            (0..grid.len())
                .map(|idx| QFactors::from_expected(task, costs, a, &grid.point(idx), &expected[idx]).decide())
                .collect()
        })
        .collect();
    PolicyMap::new(grid, task.clone(), Some(*costs), actions)
}

/// Exact solve followed by policy extraction.
pub fn solve<T: Scalar>(
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    m: usize,
    config: &SolverConfig,
) -> Result<(ValueFunction<T>, PolicyMap<T>)> {
    let grid = Arc::new(SimplexGrid::new(m)?);
    let (vf, report) = value_iteration(task, costs, grid, config)?;
    let mut policy = extract_policy(task, costs, &vf)?;
    policy.report = Some(report);
    Ok((vf, policy))
}
