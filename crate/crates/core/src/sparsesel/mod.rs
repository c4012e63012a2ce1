//! Variable selection for high-dimensional varying-coefficient models.
//!
//! 1. Each predictor gets its own knots from a one-step fit of `y` on that
//!    predictor alone.
//! 2. A group lasso over the expanded blocks `x_j B_j(u)`, each group
//!    penalized by `(c_j' R_j c_j)^{1/2}` with `R_j` the empirical Gram matrix
//!    of the basis, screens predictors.
//! 3. An adaptive group lasso with weights `1 / norm_j` from step 2 (groups
//!    zeroed in step 2 are dropped) gives the final selection.
//!
//! Both penalties are tuned by BIC over 25-point log grids, using the residual
//! sum of squares of a least-squares refit on the selected groups and counting
//! only their coefficients. The first grid spans `[1e-3, 1] * lambda_max`;
//! the second runs from `lambda_max` down to `1e-3` times the smallest penalty
//! at which any surviving group enters on its own.

mod kernel;
mod solver;

pub use kernel::{group_kernel, GroupKernel, EIGEN_FLOOR};
pub use solver::{
    adaptive_group_lasso, adaptive_weights, group_lasso, kkt_residual, GroupLassoFit,
    GroupProblem, KktReport, SolverOptions, ZERO_NORM,
};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numcore::{log_grid, BSplineBasis};
use crate::vcmodel::{one_step_search, FitOptions, PredictorKnots};

pub const DEFAULT_PATH_POINTS: usize = 25;
pub const DEFAULT_MIN_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    /// Knot selection settings for step 1 (degree, `lambda0` grid, `alpha`, grid mode).
    pub fit: FitOptions,
    pub path_points: usize,
    /// Smallest penalty on each path as a fraction of `lambda_max`.
    pub min_ratio: f64,
    /// Scale each predictor to unit root mean square before penalizing.
    pub standardize: bool,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            fit: FitOptions::default(),
            path_points: DEFAULT_PATH_POINTS,
            min_ratio: DEFAULT_MIN_RATIO,
            standardize: true,
            tolerance: solver::DEFAULT_TOLERANCE,
            max_sweeps: solver::DEFAULT_MAX_SWEEPS,
        }
    }
}

/// Selection summary; serializes to the selection JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// 0-based indices of the selected predictors.
    pub active: Vec<usize>,
    /// Final-stage group norms in the standardized coordinates.
    pub group_norms: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub bic: f64,
    pub knots_per_predictor: Vec<usize>,
}

impl SelectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub report: SelectionReport,
    pub knots: PredictorKnots,
    pub first_stage: GroupLassoFit,
    pub second_stage: GroupLassoFit,
    /// Final coefficients `c_j` on the original predictor scale.
    pub coefficients: Vec<Vec<f64>>,
    /// Divisor applied to each predictor (`1` when not standardizing).
    pub scales: Vec<f64>,
}

/// Per-predictor knots from one-step fits of `y` on each predictor alone.
pub fn marginal_knots(
    dataset: &Dataset,
    opts: &FitOptions,
) -> Result<(PredictorKnots, Vec<BSplineBasis>)> {
    dataset.validate()?;
    let boundary = dataset.u_range();
    let per_predictor = (0..dataset.p())
        .into_par_iter()
        .map(|j| {
            let single = dataset.column_with_response(j, &dataset.y);
            let fit = one_step_search(&single, opts)?.fit;
            Ok(fit.knots.per_predictor.into_iter().next().unwrap())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let bases = per_predictor
        .iter()
        .map(|k| BSplineBasis::new(opts.degree, k.clone(), boundary))
        .collect::<Result<Vec<_>>>()?;
    Ok((PredictorKnots { per_predictor }, bases))
}

/// Column blocks `x_ij B_{j,k}(u_i)`, one per predictor.
pub fn expanded_blocks(
    bases: &[BSplineBasis],
    x: &DMatrix<f64>,
    u: &[f64],
) -> Result<Vec<DMatrix<f64>>> {
    if bases.len() != x.ncols() || u.len() != x.nrows() {
        return Err(Error::dims(format!(
            "{} bases, {} predictors, {} u values, {} rows",
            bases.len(),
            x.ncols(),
            u.len(),
            x.nrows()
        )));
    }
    let mut local = [0.0; crate::numcore::MAX_DEGREE + 1];
    Ok(bases
        .iter()
        .enumerate()
        .map(|(j, basis)| {
            let mut block = DMatrix::zeros(u.len(), basis.n_basis());
            for (i, &t) in u.iter().enumerate() {
                let s = basis.eval_local(t, &mut local);
                for (a, v) in local[..=basis.degree()].iter().enumerate() {
                    block[(i, s + a)] = v * x[(i, j)];
                }
            }
            block
        })
        .collect())
}

/// Root mean square of each column; zero columns keep scale 1.
pub fn column_scales(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|c| {
            let s = (c.norm_squared() / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect()
}

/// Decreasing `points`-long log grid on `[min_ratio * lambda_max, lambda_max]`.
fn penalty_grid(lambda_max: f64, points: usize, min_ratio: f64) -> Vec<f64> {
    if lambda_max <= 0.0 {
        return vec![0.0];
    }
    let mut g = log_grid(min_ratio * lambda_max, lambda_max, points);
    g.reverse();
    g
}

/// Decreasing log grid from the largest entry penalty down to `min_ratio`
/// times the smallest positive one.
fn adaptive_grid(entries: &[f64], points: usize, min_ratio: f64) -> Vec<f64> {
    let hi = entries.iter().copied().fold(0.0, f64::max);
    let lo = entries
        .iter()
        .copied()
        .filter(|&e| e > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !(hi > 0.0) {
        return vec![0.0];
    }
    let mut g = log_grid(min_ratio * lo, hi, points);
    g.reverse();
    g
}

/// Lowest-BIC fit; ties keep the larger penalty (earlier on the path).
fn best_by_bic(fits: Vec<GroupLassoFit>) -> GroupLassoFit {
    fits.into_iter()
        .reduce(|best, f| if f.bic < best.bic { f } else { best })
        .expect("path has at least one fit")
}

/// Full three-step pipeline.
pub fn select_variables(dataset: &Dataset, opts: &SelectOptions) -> Result<Selection> {
    check_options(opts)?;
    let (scaled, scales) = scale_predictors(dataset, opts.standardize)?;
    let (knots, _) = marginal_knots(&scaled, &opts.fit)?;
    penalized_selection(&scaled, scales, knots, opts)
}

/// Steps 2 and 3 with the knots given instead of selected.
pub fn select_with_knots(
    dataset: &Dataset,
    knots: &PredictorKnots,
    opts: &SelectOptions,
) -> Result<Selection> {
    check_options(opts)?;
    if knots.p() != dataset.p() {
        return Err(Error::dims(format!(
            "{} knot vectors for {} predictors",
            knots.p(),
            dataset.p()
        )));
    }
    let (scaled, scales) = scale_predictors(dataset, opts.standardize)?;
    penalized_selection(&scaled, scales, knots.clone(), opts)
}

fn check_options(opts: &SelectOptions) -> Result<()> {
    if opts.path_points == 0 {
        return Err(Error::invalid("penalty paths need at least one point"));
    }
    if !(opts.min_ratio > 0.0 && opts.min_ratio <= 1.0) {
        return Err(Error::invalid(format!(
            "min_ratio must be in (0, 1], got {}",
            opts.min_ratio
        )));
    }
    Ok(())
}

fn scale_predictors(dataset: &Dataset, standardize: bool) -> Result<(Dataset, Vec<f64>)> {
    dataset.validate()?;
    let scales = if standardize {
        column_scales(&dataset.x)
    } else {
        vec![1.0; dataset.p()]
    };
    let mut scaled = dataset.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.x.column_mut(j).unscale_mut(*s);
    }
    Ok((scaled, scales))
}

fn penalized_selection(
    scaled: &Dataset,
    scales: Vec<f64>,
    knots: PredictorKnots,
    opts: &SelectOptions,
) -> Result<Selection> {
    let n = scaled.n();
    let boundary = scaled.u_range();
    let bases = knots
        .per_predictor
        .iter()
        .map(|k| BSplineBasis::new(opts.fit.degree, k.clone(), boundary))
        .collect::<Result<Vec<_>>>()?;
    let blocks = expanded_blocks(&bases, &scaled.x, &scaled.u)?;
    let kernel = group_kernel(&bases, &scaled.u)?;
    let problem = GroupProblem::new(&blocks, &scaled.y, &kernel)?;
    let solver_opts = SolverOptions {
        tolerance: opts.tolerance,
        max_sweeps: opts.max_sweeps,
    };
    // paths stop once the model holds more than n/2 coefficients
    let max_df = n / 2;

    let unit = vec![1.0; problem.n_groups()];
    let grid1 = penalty_grid(problem.lambda_max(&unit), opts.path_points, opts.min_ratio);
    let first = best_by_bic(problem.path(&grid1, &unit, max_df, &solver_opts)?);

    // adaptive weights spread the groups' entry penalties over many decades,
    // so the second path reaches below the weakest surviving group's entry
    let weights = adaptive_weights(&first);
    let entries: Vec<f64> = problem.entry_penalties(&weights).into_iter().flatten().collect();
    let grid2 = adaptive_grid(&entries, opts.path_points, opts.min_ratio);
    let second = best_by_bic(problem.path(&grid2, &weights, max_df, &solver_opts)?);

    let coefficients = second
        .coefficients
        .iter()
        .zip(&scales)
        .map(|(c, s)| c.iter().map(|v| v / s).collect())
        .collect();
    let report = SelectionReport {
        active: second.active_set.clone(),
        group_norms: second.group_norms.clone(),
        lambda1: first.lambda,
        lambda2: second.lambda,
        bic: second.bic,
        knots_per_predictor: knots.counts(),
    };
    Ok(Selection {
        report,
        knots,
        first_stage: first,
        second_stage: second,
        coefficients,
        scales,
    })
}
