//! Radial-basis-function value approximation fitted by minimum-norm least
//! squares.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use super::sampling::sample_simplex;
use super::{bellman_targets, check_task, stop_targets, ApproxRun, LinalgScalar};
use crate::error::{invalid, Error, Result};
use crate::grid::SimplexGrid;
use crate::model::{CostParams, FixationAction, TaskSpec};
use crate::scalar::Scalar;
use crate::solver::{SolveReport, ValueModel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RbfKernel {
    /// `exp(-r^2 / (2 sigma^2)) / (sigma (2 pi)^(d/2))`
    Gaussian,
    /// `sqrt(1 + eps r^2)`
    Multiquadric(f64),
    /// `1 / (1 + eps r^2)`
    InverseQuadratic(f64),
    /// `r^2 ln r`, zero at `r = 0`
    ThinPlateSpline,
}

impl RbfKernel {
    /// Kernel value at squared distance `r2` in dimension `dim`.
    pub fn eval<T: Scalar>(&self, r2: T, sigma: T, dim: usize) -> T {
        match *self {
            RbfKernel::Gaussian => {
                let two_pi = T::lit(2.0 * std::f64::consts::PI);
                let norm = T::one() / (sigma * two_pi.powf(T::lit(dim as f64 / 2.0)));
                norm * (-r2 / (T::lit(2.0) * sigma * sigma)).exp()
            }
            RbfKernel::Multiquadric(eps) => (T::one() + T::lit(eps) * r2).sqrt(),
            RbfKernel::InverseQuadratic(eps) => T::one() / (T::one() + T::lit(eps) * r2),
            RbfKernel::ThinPlateSpline => {
                if r2 <= T::zero() {
                    T::zero()
                } else {
                    // r^2 ln r = r^2 ln(r^2) / 2
                    r2 * r2.ln() / T::lit(2.0)
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RbfKernel::Gaussian => "gaussian",
            RbfKernel::Multiquadric(_) => "multiquadric",
            RbfKernel::InverseQuadratic(_) => "inverse-quadratic",
            RbfKernel::ThinPlateSpline => "thin-plate-spline",
        }
    }

    pub fn epsilon(&self) -> f64 {
        match *self {
            RbfKernel::Multiquadric(e) | RbfKernel::InverseQuadratic(e) => e,
            _ => 0.0,
        }
    }

    pub fn from_name(name: &str, epsilon: f64) -> Option<Self> {
        match name.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "gaussian" => Some(RbfKernel::Gaussian),
            "multiquadric" => Some(RbfKernel::Multiquadric(epsilon)),
            "inverse-quadratic" => Some(RbfKernel::InverseQuadratic(epsilon)),
            "thin-plate-spline" | "tps" => Some(RbfKernel::ThinPlateSpline),
            _ => None,
        }
    }
}

pub(crate) fn dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum()
}

/// Design matrix with one row per point and one column per center.
pub fn rbf_design<T: LinalgScalar>(
    centers: &[[T; 3]],
    sigma: T,
    kernel: RbfKernel,
    points: &[[T; 3]],
) -> Result<DMatrix<T>> {
    if !(sigma > T::zero()) {
        return Err(invalid(format!("rbf bandwidth must be positive, got {sigma}")));
    }
    if centers.is_empty() {
        return Err(invalid("rbf needs at least one center"));
    }
    Ok(DMatrix::from_fn(points.len(), centers.len(), |i, j| {
        kernel.eval(dist2(&points[i], &centers[j]), sigma, 3)
    }))
}

/// Pseudoinverse of a design matrix, reusable across several target
/// vectors.
pub struct MinNormSolver<T: LinalgScalar> {
    pinv: DMatrix<T>,
}

impl<T: LinalgScalar> MinNormSolver<T> {
    /// Singular values below `rcond * sigma_max` are treated as zero; the
    /// default cutoff is `max(rows, cols) * machine epsilon`.
    pub fn new(design: &DMatrix<T>, rcond: Option<f64>) -> Result<Self> {
        let (r, c) = design.shape();
        if r == 0 || c == 0 {
            return Err(invalid("empty design matrix"));
        }
        let svd = design.clone().svd(true, true);
        let smax = svd
            .singular_values
            .iter()
            .copied()
            .fold(T::zero(), |a, b| if b > a { b } else { a });
        let rcond = match rcond {
            Some(v) => T::lit(v),
            None => T::lit(r.max(c) as f64) * <T as Float>::epsilon(),
        };
        let pinv = svd
            .pseudo_inverse(rcond * smax)
            .map_err(|e| Error::Numerical(format!("pseudoinverse failed: {e}")))?;
        Ok(Self { pinv })
    }

    pub fn solve(&self, targets: &DVector<T>) -> Result<DVector<T>> {
        if targets.len() != self.pinv.ncols() {
            return Err(invalid(format!(
                "{} targets for a design with {} rows",
                targets.len(),
                self.pinv.ncols()
            )));
        }
        Ok(&self.pinv * targets)
    }
}

/// Minimum-norm least-squares weights.
pub fn rbf_fit<T: LinalgScalar>(design: &DMatrix<T>, targets: &DVector<T>) -> Result<DVector<T>> {
    if design.nrows() != targets.len() {
        return Err(invalid("design rows and target length differ"));
    }
    MinNormSolver::new(design, None)?.solve(targets)
}

/// Centers spread uniformly over the simplex: a triangular lattice when `m`
/// is triangular, otherwise a lattice plus four symmetric interior points
/// (centroid and the centroids of the corner sub-triangles).
pub fn uniform_centers<T: Scalar>(m: usize) -> Result<Vec<[T; 3]>> {
    let third = T::lit(1.0 / 3.0);
    if m == 1 {
        return Ok(vec![[third; 3]]);
    }
    let lattice = |n: usize| -> Option<usize> { (2..=n + 1).find(|t| t * (t + 1) / 2 == n) };
    if let Some(t) = lattice(m) {
        return Ok(SimplexGrid::<T>::new(t)?.points().to_vec());
    }
    if m > 4 {
        if let Some(t) = lattice(m - 4) {
            let mut pts = SimplexGrid::<T>::new(t)?.points().to_vec();
            let (big, small) = (T::lit(2.0 / 3.0), T::lit(1.0 / 6.0));
            pts.extend([
                [third; 3],
                [big, small, small],
                [small, big, small],
                [small, small, big],
            ]);
            return Ok(pts);
        }
    }
    Err(invalid(format!(
        "no uniform center layout with {m} centers (use a triangular number or triangular + 4)"
    )))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbfModel<T: LinalgScalar> {
    pub centers: Vec<[T; 3]>,
    pub sigma: T,
    pub kernel: RbfKernel,
    /// One weight vector per fixation.
    pub weights: Vec<DVector<T>>,
}

impl<T: LinalgScalar> RbfModel<T> {
    pub fn features(&self, p: &[T]) -> impl Iterator<Item = T> + '_ {
        let p: [T; 3] = [p[0], p[1], p[2]];
        self.centers
            .iter()
            .map(move |c| self.kernel.eval(dist2(&p, c), self.sigma, 3))
    }

    pub fn num_actions(&self) -> usize {
        self.weights.len()
    }

    pub fn value(&self, a: FixationAction, p: &[T]) -> T {
        let w = &self.weights[a.0];
        self.features(p).zip(w.iter()).map(|(f, w)| f * *w).sum()
    }
}

impl<T: LinalgScalar> ValueModel<T> for RbfModel<T> {
    fn num_actions(&self) -> usize {
        RbfModel::num_actions(self)
    }

    fn value(&self, a: FixationAction, p: &[T]) -> T {
        RbfModel::value(self, a, p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbfConfig {
    pub centers: usize,
    pub sigma: f64,
    pub kernel: RbfKernel,
    /// Fresh beliefs drawn per sweep.
    pub samples: usize,
    pub seed: u64,
    /// Stop once no weight moves by more than this.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Weight magnitude treated as divergence.
    pub weight_bound: f64,
    pub rcond: Option<f64>,
}

impl Default for RbfConfig {
    fn default() -> Self {
        Self {
            centers: 45,
            sigma: 0.2,
            kernel: RbfKernel::Gaussian,
            samples: 1000,
            seed: 0,
            tolerance: 1e-4,
            max_iters: 50,
            weight_bound: 1e12,
            rcond: None,
        }
    }
}

impl RbfConfig {
    /// 49 Gaussian bases of unit bandwidth, 1000 samples per sweep.
    pub fn figure() -> Self {
        Self {
            centers: 49,
            sigma: 1.0,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.centers == 0 || self.samples == 0 {
            return Err(invalid("rbf needs at least one center and one sample"));
        }
        if !(self.sigma > 0.0) {
            return Err(invalid("rbf bandwidth must be positive"));
        }
        if !(self.tolerance > 0.0) || self.max_iters == 0 {
            return Err(invalid("rbf tolerance and max_iters must be positive"));
        }
        Ok(())
    }
}

fn fit_all<T: LinalgScalar>(design: &DMatrix<T>, targets: &[Vec<T>], rcond: Option<f64>) -> Result<Vec<DVector<T>>> {
    let solver = MinNormSolver::new(design, rcond)?;
    targets
        .iter()
        .map(|t| solver.solve(&DVector::from_column_slice(t)))
        .collect()
}

/// Sample, back up, refit until the weights stop moving. Running out of
/// sweeps is a [`Error::NonConvergence`] failure.
pub fn rbf_value_iteration<T: LinalgScalar>(
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    cfg: &RbfConfig,
) -> Result<(RbfModel<T>, SolveReport)> {
    let run = rbf_run(task, costs, cfg)?;
    run.into_result()
}

/// Same loop as [`rbf_value_iteration`] but returns the last model even
/// when the sweep budget runs out.
pub fn rbf_run<T: LinalgScalar>(
    task: &TaskSpec<T>,
    costs: &CostParams<T>,
    cfg: &RbfConfig,
) -> Result<ApproxRun<RbfModel<T>>> {
    check_task(task)?;
    cfg.validate()?;
    let start = Instant::now();
    let centers = uniform_centers::<T>(cfg.centers)?;
    let sigma = T::lit(cfg.sigma);

    let points = sample_simplex::<T>(cfg.seed, 0, cfg.samples);
    let design = rbf_design(&centers, sigma, cfg.kernel, &points)?;
    let weights = fit_all(&design, &stop_targets(task, &points), cfg.rcond)?;
    let mut model = RbfModel {
        centers,
        sigma,
        kernel: cfg.kernel,
        weights,
    };

    let mut deltas = Vec::new();
    for it in 1..=cfg.max_iters {
        let points = sample_simplex::<T>(cfg.seed, it as u64, cfg.samples);
        let targets = bellman_targets(task, costs, &model, &points);
        let design = rbf_design(&model.centers, sigma, cfg.kernel, &points)?;
        let weights = fit_all(&design, &targets, cfg.rcond)?;

        let mut delta = 0.0f64;
        for (new, old) in weights.iter().zip(&model.weights) {
            for (a, b) in new.iter().zip(old.iter()) {
                let (a, b) = (a.as_f64(), b.as_f64());
                if !a.is_finite() || a.abs() > cfg.weight_bound {
                    return Err(Error::Divergence(format!(
                        "rbf weight {a:e} exceeds bound {:e} at sweep {it}",
                        cfg.weight_bound
                    )));
                }
                delta = delta.max((a - b).abs());
            }
        }
        model.weights = weights;
        deltas.push(delta);
        if delta <= cfg.tolerance {
            break;
        }
    }
    Ok(ApproxRun::finish(model, deltas, cfg.tolerance, start))
}
