//! Context-dependent active sensing as a belief-state MDP.
//!
//! The crate computes Bayes-risk-optimal fixation and stopping policies by
//! value iteration over a discretized belief simplex, implements the
//! Infomax and greedy-MAP baselines, approximates the value function with
//! radial basis functions or Gaussian-process regression, and simulates
//! policies to compare accuracy, search time and switch counts.
//!
//! Every numerical type is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiations.

// Negated comparisons reject NaN parameters.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod baselines;
pub mod error;
pub mod export;
pub mod grid;
pub mod model;
pub mod scalar;
pub mod seed;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{enumerate_points, interpolate, Interpolation, SimplexGrid, ValueFunction};
pub use model::{
    belief_update, entropy, likelihood, predictive_obs_dist, BeliefState, CostParams, EpisodeState, FixationAction,
    Observation, StopRule, TaskKind, TaskSpec,
};
pub use scalar::Scalar;
pub use sim::{
    run_batch, run_episode, BatchConfig, BatchReport, CdacLookup, CompareConfig, EpisodeTrace, SearchPolicy,
};
pub use solver::{
    continuation_q, extract_policy, solve, stopping_cost, value_iteration, PolicyAction, PolicyMap, SolveReport,
    SolverConfig, ValueModel,
};

pub type Belief = BeliefState<f64>;
pub type Task = TaskSpec<f64>;
pub type Costs = CostParams<f64>;
pub type Grid = SimplexGrid<f64>;
pub type Values = ValueFunction<f64>;
pub type Policy = PolicyMap<f64>;

pub type Belief32 = BeliefState<f32>;
pub type Task32 = TaskSpec<f32>;
pub type Costs32 = CostParams<f32>;
pub type Values32 = ValueFunction<f32>;
pub type Policy32 = PolicyMap<f32>;
