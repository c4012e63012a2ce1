//! Least-squares and B-spline kernels shared by every fitting routine.

mod bspline;
mod ols;

pub use bspline::{bspline_design, BSplineBasis, MAX_DEGREE};
pub use ols::{ols_fit, residual_sum_of_squares, DesignMatrix, OlsResult, PIVOT_TOLERANCE};

/// Population variance (denominator `n`).
pub fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// `count` points spaced evenly on a log scale from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}
