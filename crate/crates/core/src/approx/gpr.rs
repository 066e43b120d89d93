//! Gaussian-process regression of the value function (squared-exponential
//! kernel, zero prior mean).

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_traits::Float;

use super::rbf::dist2;
use super::sampling::sample_simplex;
use super::{bellman_targets, check_task, stop_targets, ApproxRun, LinalgScalar};
use crate::error::{invalid, Error, Result};
use crate::grid::SimplexGrid;
use crate::model::{CostParams, FixationAction, TaskSpec};
use crate::scalar::Scalar;
use crate::solver::{stop_location, SolveReport, ValueModel};

const STREAM_SELECT_TRAIN: u64 = 1 << 40;
const STREAM_SELECT_PROBE: u64 = (1 << 40) + 1;

/// Length scale, signal strength and noise strength.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GprHyper<T> {
    pub length_scale: T,
    pub signal: T,
    pub noise: T,
}

impl<T: Scalar> GprHyper<T> {
    pub fn new(length_scale: T, signal: T, noise: T) -> Result<Self> {
        if !(length_scale > T::zero() && signal > T::zero() && noise >= T::zero()) {
            return Err(invalid(format!(
                "gpr hyperparameters need length_scale > 0, signal > 0, noise >= 0; got ({length_scale}, {signal}, {noise})"
            )));
        }
        Ok(Self {
            length_scale,
            signal,
            noise,
        })
    }

    /// `s_f^2 exp(-r^2 / (2 l^2))`
    pub fn kernel(&self, r2: T) -> T {
        self.signal * self.signal * (-r2 / (T::lit(2.0) * self.length_scale * self.length_scale)).exp()
    }
}

#[derive(Clone, Debug)]
pub struct GprModel<T: LinalgScalar> {
    inputs: Vec<[T; 3]>,
    targets: Vec<Vec<T>>,
    hyper: GprHyper<T>,
    alphas: Vec<DVector<T>>,
    /// Diagonal jitter that made the kernel matrix factorizable.
    jitter: T,
}

impl<T: LinalgScalar> GprModel<T> {
    /// Factorizes `K + s_n^2 I` once and solves for every target vector.
    /// Escalating diagonal jitter is added when the factorization fails.
    pub fn fit(inputs: Vec<[T; 3]>, targets: Vec<Vec<T>>, hyper: GprHyper<T>) -> Result<Self> {
        let n = inputs.len();
        if n == 0 {
            return Err(invalid("gpr needs at least one training point"));
        }
        if targets.iter().any(|t| t.len() != n) {
            return Err(invalid("gpr targets and inputs differ in length"));
        }
        let gram = DMatrix::from_fn(n, n, |i, j| hyper.kernel(dist2(&inputs[i], &inputs[j])));
        let noise_var = hyper.noise * hyper.noise;
        let scale = hyper.signal * hyper.signal;
        let mut jitter = T::zero();
        let chol: Cholesky<T, Dyn> = loop {
            let mut k = gram.clone();
            for i in 0..n {
                k[(i, i)] += noise_var + jitter;
            }
            if let Some(c) = Cholesky::new(k) {
                break c;
            }
            jitter = if jitter == T::zero() {
                T::lit(1e-10) * scale
            } else {
                jitter * T::lit(10.0)
            };
            if jitter > T::lit(1e-4) * scale {
                let min_diag = (0..n).map(|i| gram[(i, i)].as_f64()).fold(f64::INFINITY, f64::min);
                return Err(Error::Numerical(format!(
                    "gpr kernel matrix ({n}x{n}, min diagonal {min_diag:e}, noise variance {}) is not positive definite after jitter {}",
                    noise_var.as_f64(),
                    jitter.as_f64()
                )));
            }
        };
        let alphas = targets
            .iter()
            .map(|t| chol.solve(&DVector::from_column_slice(t)))
            .collect();
        Ok(Self {
            inputs,
            targets,
            hyper,
            alphas,
            jitter,
        })
    }

    pub fn inputs(&self) -> &[[T; 3]] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<T>] {
        &self.targets
    }

    pub fn hyper(&self) -> GprHyper<T> {
        self.hyper
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn num_actions(&self) -> usize {
        self.alphas.len()
    }

    /// Posterior mean at `p`.
    pub fn value(&self, a: FixationAction, p: &[T]) -> T {
        let alpha = &self.alphas[a.0];
        self.inputs
            .iter()
            .zip(alpha.iter())
            .map(|(x, w)| self.hyper.kernel(dist2(p, x)) * *w)
            .sum()
    }
}

impl<T: LinalgScalar> ValueModel<T> for GprModel<T> {
    fn num_actions(&self) -> usize {
        GprModel::num_actions(self)
    }

    fn value(&self, a: FixationAction, p: &[T]) -> T {
        GprModel::value(self, a, p)
    }
}

/// Posterior mean for fixation `a` at every query point.
pub fn gpr_predict<T: LinalgScalar>(model: &GprModel<T>, a: FixationAction, queries: &[[T; 3]]) -> Vec<T> {
    queries.iter().map(|q| model.value(a, q)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GprConfig {
    /// Training beliefs drawn per sweep.
    pub points: usize,
    pub length_scale: f64,
    pub signal: f64,
    pub noise: f64,
    pub seed: u64,
    /// Stop once no probe prediction moves by more than this.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Bins of the fixed probe grid used for the convergence test.
    pub probe_m: usize,
}

impl Default for GprConfig {
    fn default() -> Self {
        Self {
            points: 200,
            length_scale: 1.0,
            signal: 1.0,
            noise: 0.1,
            seed: 0,
            tolerance: 1e-4,
            max_iters: 50,
            probe_m: 21,
        }
    }
}

impl GprConfig {
    pub fn hyper<T: Scalar>(&self) -> Result<GprHyper<T>> {
        GprHyper::new(T::lit(self.length_scale), T::lit(self.signal), T::lit(self.noise))
    }
}

/// Same sample/backup/refit loop as the RBF solver with the regressor
/// swapped; convergence is measured on a fixed probe grid. Running out of
/// sweeps is a [`Error::NonConvergence`] failure.
pub fn gpr_value_iteration<T: LinalgScalar>(
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    cfg: &GprConfig,
) -> Result<(GprModel<T>, SolveReport)> {
    gpr_run(task, costs, cfg)?.into_result()
}

/// Same loop as [`gpr_value_iteration`] but returns the last model even
/// when the sweep budget runs out.
pub fn gpr_run<T: LinalgScalar>(
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    cfg: &GprConfig,
) -> Result<ApproxRun<GprModel<T>>> {
    check_task(task)?;
    let hyper = cfg.hyper::<T>()?;
    if cfg.points == 0 || cfg.max_iters == 0 || !(cfg.tolerance > 0.0) {
        return Err(invalid("gpr needs points >= 1, max_iters >= 1 and tolerance > 0"));
    }
    let start = Instant::now();
    let probe = SimplexGrid::<T>::new(cfg.probe_m.max(2))?.points().to_vec();
    let predictions = |m: &GprModel<T>| -> Vec<Vec<T>> { task.actions().map(|a| gpr_predict(m, a, &probe)).collect() };

    let points = sample_simplex::<T>(cfg.seed, 0, cfg.points);
    let targets = stop_targets(task, &points);
    let mut model = GprModel::fit(points, targets, hyper)?;
    let mut previous = predictions(&model);

    let mut deltas = Vec::new();
    for it in 1..=cfg.max_iters {
        let points = sample_simplex::<T>(cfg.seed, it as u64, cfg.points);
        let targets = bellman_targets(task, costs, &model, &points);
        model = GprModel::fit(points, targets, hyper)?;
        let current = predictions(&model);
        let delta = current
            .iter()
            .flatten()
            .zip(previous.iter().flatten())
            .map(|(a, b)| Float::abs(*a - *b).as_f64())
            .fold(0.0, f64::max);
        previous = current;
        deltas.push(delta);
        if delta <= cfg.tolerance {
            break;
        }
    }
    Ok(ApproxRun::finish(model, deltas, cfg.tolerance, start))
}

/// Held-out squared error of every candidate; returns the index of the best
/// (first on ties) and all errors.
pub fn select_by_validation<T: LinalgScalar>(
    train_x: &[[T; 3]],
    train_y: &[Vec<T>],
    probe_x: &[[T; 3]],
    probe_y: &[Vec<T>],
    candidates: &[GprHyper<T>],
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(invalid("hyperparameter grid is empty"));
    }
    if train_y.len() != probe_y.len() {
        return Err(invalid("training and probe targets have different output counts"));
    }
    let errors = candidates
        .iter()
        .map(|h| {
            let model = GprModel::fit(train_x.to_vec(), train_y.to_vec(), *h)?;
            Ok(probe_y
                .iter()
                .enumerate()
                .map(|(a, ys)| {
                    gpr_predict(&model, FixationAction(a), probe_x)
                        .iter()
                        .zip(ys)
                        .map(|(p, y)| (*p - *y).as_f64().powi(2))
                        .sum::<f64>()
                })
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, e) in errors.iter().enumerate() {
        if *e < errors[best] {
            best = i;
        }
    }
    Ok((best, errors))
}

/// Value model equal to the stopping cost, the solvers' starting point.
struct StoppingCost<'a, T> {
    task: &'a TaskSpec<T>,
}

impl<T: Scalar> ValueModel<T> for StoppingCost<'_, T> {
    fn num_actions(&self) -> usize {
        self.task.num_actions()
    }

    fn value(&self, a: FixationAction, p: &[T]) -> T {
        T::one() - p[stop_location(self.task, p, a)]
    }
}

/// Grid search over `candidates`: each is trained on one exact Bellman
/// backup of the stopping cost at random beliefs and scored on the same
/// backup at held-out beliefs. Deterministic given `seed`.
pub fn select_hyperparameters<T: LinalgScalar>(
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    candidates: &[GprHyper<T>],
    n_train: usize,
    n_probe: usize,
    seed: u64,
) -> Result<GprHyper<T>> {
    check_task(task)?;
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let base = StoppingCost { task };
    let train_x = sample_simplex::<T>(seed, STREAM_SELECT_TRAIN, n_train);
    let probe_x = sample_simplex::<T>(seed, STREAM_SELECT_PROBE, n_probe);
    let train_y = bellman_targets(task, costs, &base, &train_x);
    let probe_y = bellman_targets(task, costs, &base, &probe_x);
    let (best, _) = select_by_validation(&train_x, &train_y, &probe_x, &probe_y, candidates)?;
    Ok(candidates[best])
}
