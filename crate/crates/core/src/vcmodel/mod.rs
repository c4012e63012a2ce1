//! Varying-coefficient fits with B-spline coefficients.
//!
//! `fit_one_step` shares one knot set across all predictors, choosing the
//! segmentation penalty by BIC. `fit_two_step` starts from that fit and
//! repeatedly re-selects the knots of a single predictor against the partial
//! residual, accepting the update with the lowest BIC while BIC keeps falling.

mod fit;
mod model;

pub use crate::data::Dataset;
pub use fit::{
    fit_one_step, fit_spline, fit_two_step, one_step_search, residual_without, two_step_from,
    two_step_search,
    OneStepResult, TwoStepReport,
};
pub use model::{bic, eval_coefficients, predict, PredictorKnots, VCFit, CURVE_GRID_POINTS};

use serde::{Deserialize, Serialize};

use crate::knotdp::{GridMode, DEFAULT_ALPHA};
use crate::numcore::log_grid;

pub const DEFAULT_DEGREE: usize = 3;
pub const DEFAULT_MAX_SWEEPS: usize = 10;

/// 25 log-spaced penalties on `[0.01, 100]`.
pub fn default_lambda0_grid() -> Vec<f64> {
    log_grid(0.01, 100.0, 25)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub degree: usize,
    pub lambda0_grid: Vec<f64>,
    pub alpha: f64,
    pub grid: GridMode,
    pub max_sweeps: usize,
    /// Start the two-step search from the zero model instead of the one-step fit.
    pub zero_init: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            degree: DEFAULT_DEGREE,
            lambda0_grid: default_lambda0_grid(),
            alpha: DEFAULT_ALPHA,
            grid: GridMode::Auto,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            zero_init: false,
        }
    }
}
