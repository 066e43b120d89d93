//! Approximate value iteration with low-dimensional value representations.
//!
//! Instead of a table over the whole grid, each sweep draws fresh beliefs
//! uniformly from the simplex, applies one Bellman backup at each of them
//! using the current approximation for the next-step values, and refits the
//! approximation to the backed-up targets.

pub mod gpr;
pub mod io;
pub mod rbf;
pub mod sampling;

use std::sync::Arc;
use std::time::Instant;

use nalgebra::RealField;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::SimplexGrid;
use crate::model::{BeliefState, CostParams, FixationAction, TaskSpec};
use crate::scalar::Scalar;
use crate::solver::{expected_next_values, policy_from_model, PolicyMap, QFactors, SolveReport, ValueModel};

pub use gpr::{
    gpr_predict, gpr_run, gpr_value_iteration, select_by_validation, select_hyperparameters, GprConfig, GprHyper,
    GprModel,
};
pub use rbf::{rbf_design, rbf_fit, rbf_run, rbf_value_iteration, uniform_centers, RbfConfig, RbfKernel, RbfModel};

/// Final model of an approximate solve and whether the convergence test
/// was met within the sweep budget.
#[derive(Clone, Debug)]
pub struct ApproxRun<M> {
    pub model: M,
    pub report: SolveReport,
    pub converged: bool,
}

impl<M> ApproxRun<M> {
    pub(crate) fn finish(model: M, deltas: Vec<f64>, tolerance: f64, start: Instant) -> Self {
        let final_delta = deltas.last().copied().unwrap_or(f64::INFINITY);
        Self {
            model,
            converged: final_delta <= tolerance,
            report: SolveReport {
                iterations: deltas.len(),
                final_delta,
                wall_time: start.elapsed().as_secs_f64(),
                deltas,
            },
        }
    }

    /// The model and report, or [`Error::NonConvergence`].
    pub fn into_result(self) -> Result<(M, SolveReport)> {
        if self.converged {
            Ok((self.model, self.report))
        } else {
            Err(Error::NonConvergence {
                iterations: self.report.iterations,
                last_delta: self.report.final_delta,
            })
        }
    }
}

/// Scalars usable with the dense linear algebra backend.
pub trait LinalgScalar: Scalar + RealField + Copy {}
impl<T: Scalar + RealField + Copy> LinalgScalar for T {}

/// Either fitted approximation.
#[derive(Clone, Debug)]
pub enum ApproxModel<T: LinalgScalar> {
    Rbf(RbfModel<T>),
    Gpr(GprModel<T>),
}

impl<T: LinalgScalar> ValueModel<T> for ApproxModel<T> {
    fn num_actions(&self) -> usize {
        match self {
            ApproxModel::Rbf(m) => m.num_actions(),
            ApproxModel::Gpr(m) => m.num_actions(),
        }
    }

    fn value(&self, a: FixationAction, p: &[T]) -> T {
        match self {
            ApproxModel::Rbf(m) => m.value(a, p),
            ApproxModel::Gpr(m) => m.value(a, p),
        }
    }
}

pub(crate) fn check_task<T: Scalar>(task: &TaskSpec<T>) -> Result<()> {
    if task.k() != 3 {
        return Err(invalid("approximate solvers support exactly three locations"));
    }
    Ok(())
}

/// One Bellman backup at every point, next values read from `model`.
/// Returns one target vector per fixation.
pub(crate) fn bellman_targets<T: Scalar, M: ValueModel<T>>(
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    model: &M,
    points: &[[T; 3]],
) -> Vec<Vec<T>> {
    let per_point: Vec<Vec<T>> = points
        .par_iter()
        .map(|p| {
            let belief = BeliefState::from_raw(p.to_vec());
            let expected = expected_next_values(task, model, &belief);
            task.actions()
                .map(|a| QFactors::from_expected(task, costs, a, p, &expected).value())
                .collect()
        })
        .collect();
    task.actions()
        .map(|a| per_point.iter().map(|row| row[a.0]).collect())
        .collect()
}

/// Stopping cost of every point under every fixation.
pub(crate) fn stop_targets<T: Scalar>(task: &TaskSpec<T>, points: &[[T; 3]]) -> Vec<Vec<T>> {
    task.actions()
        .map(|a| {
            points
                .iter()
                .map(|p| T::one() - p[crate::solver::stop_location(task, p, a)])
                .collect()
        })
        .collect()
}

/// Fraction of grid cells where the approximate policy matches the exact one.
#[derive(Clone, Debug, PartialEq)]
pub struct AgreementReport {
    pub per_fixation: Vec<f64>,
    pub overall: f64,
}

/// Greedy policy of `model` on the exact policy's grid and its agreement
/// with `exact`.
pub fn agreement_with_exact<T: Scalar, M: ValueModel<T>>(
    exact: &PolicyMap<T>,
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    model: &M,
) -> Result<(PolicyMap<T>, AgreementReport)> {
    let approx = policy_from_model(task, costs, model, Arc::clone(exact.grid()))?;
    let per_fixation = task.actions().map(|a| exact.agreement_for(&approx, a)).collect();
    let overall = exact.agreement(&approx)?;
    Ok((approx, AgreementReport { per_fixation, overall }))
}

/// Convenience: evaluation grid of `m` bins shared by exact and approximate
/// policies.
pub fn evaluation_grid<T: Scalar>(m: usize) -> Result<Arc<SimplexGrid<T>>> {
    Ok(Arc::new(SimplexGrid::new(m)?))
}
