use super::generators::Truth;
use crate::error::{Error, Result};
use crate::numcore::BSplineBasis;
use crate::vcmodel::VCFit;

/// `mean_i (est_j(t_i) - truth_j(t_i))^2 / range_j^2` for `j < p`, where
/// `range_j` is the spread of the true coefficient over the observed times.
pub fn mse_with(
    p: usize,
    times: &[f64],
    estimate: impl Fn(usize, f64) -> f64,
    truth: impl Fn(usize, f64) -> f64,
) -> Result<Vec<f64>> {
    if times.is_empty() {
        return Err(Error::invalid("no observation times"));
    }
    (0..p)
        .map(|j| {
            let true_vals: Vec<f64> = times.iter().map(|&t| truth(j, t)).collect();
            let (lo, hi) = true_vals
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let range = hi - lo;
            if !(range > 0.0) {
                return Err(Error::Degenerate(format!(
                    "coefficient {j} is constant over the observed times"
                )));
            }
            let sse: f64 = times
                .iter()
                .zip(&true_vals)
                .map(|(&t, &b)| (estimate(j, t) - b).powi(2))
                .sum();
            Ok(sse / times.len() as f64 / (range * range))
        })
        .collect()
}

/// Normalized coefficient MSE of a fitted model against a simulation truth.
pub fn mse_beta(fit: &VCFit, truth: Truth, times: &[f64]) -> Result<Vec<f64>> {
    let bases: Vec<BSplineBasis> = fit.bases()?;
    mse_with(
        fit.p,
        times,
        |j, t| bases[j].eval_combination(&fit.coefficients[j], t),
        |j, t| truth.beta(j, t),
    )
}
