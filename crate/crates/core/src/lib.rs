//! Varying-coefficient regression with adaptively placed B-spline knots.
//!
//! The coefficients `beta_j(u)` of `y = sum_j beta_j(u) x_j + e` are modelled
//! as polynomial splines in the conditioner `u`. Knot locations come from a
//! penalized dynamic-programming segmentation of the data ordered by `u`
//! (piecewise-linear working model), and the number of knots is tuned by BIC.
//!
//! Modules:
//! - [`numcore`]: least squares and B-spline kernels.
//! - [`knotdp`]: segment cost tables and the penalized segmentation DP.
//! - [`vcmodel`]: one-step (global knots) and two-step (per-predictor knots) fits.
//! - [`sparsesel`]: marginal knots plus (adaptive) group lasso selection.
//! - [`simbench`]: longitudinal simulation designs and replication harnesses.
//! - [`io`]: panel CSV ingestion, preprocessing, lag scans and run configs.

pub mod data;
pub mod error;
pub mod io;
pub mod knotdp;
pub mod numcore;
pub mod simbench;
pub mod sparsesel;
pub mod vcmodel;

pub use data::Dataset;
pub use error::{Error, Result};
pub use knotdp::{GridMode, KnotSet};
pub use vcmodel::{FitOptions, PredictorKnots, VCFit};
