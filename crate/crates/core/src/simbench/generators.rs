use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::design::{correlated_normal, exp_correlation_factor, ErrorProcess, LongitudinalDesign};
use crate::data::Dataset;
use crate::error::Result;

/// Number of predictors in the high-dimensional design.
pub const WEI_P: usize = 500;

/// True coefficient functions of the two simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    /// Four predictors, all active.
    Tang,
    /// 500 predictors, the first six active.
    Wei,
}

impl Truth {
    pub fn p(self) -> usize {
        match self {
            Truth::Tang => 4,
            Truth::Wei => WEI_P,
        }
    }

    /// 0-based indices of predictors with nonzero coefficients.
    pub fn active(self) -> Vec<usize> {
        match self {
            Truth::Tang => (0..4).collect(),
            Truth::Wei => (0..6).collect(),
        }
    }

    /// `beta_j(t)` with 0-based `j`.
    pub fn beta(self, j: usize, t: f64) -> f64 {
        match self {
            Truth::Tang => match j {
                0 => 1.0 + 3.5 * (t - 3.0).sin(),
                1 => 2.0 - 5.0 * (0.75 * t - 0.25).cos(),
                2 => 4.0 - 0.04 * (t - 12.0).powi(2),
                3 => 1.0 + 0.125 * t + 4.6 * (1.0 - 0.1 * t).powi(3),
                _ => 0.0,
            },
            Truth::Wei => match j {
                0 => 15.0 + 20.0 * (PI * (t + 0.5) / 15.0).sin(),
                1 => 15.0 + 20.0 * (PI * (t + 0.5) / 15.0).cos(),
                2 => 2.0 - 3.0 * (PI * (t - 24.5) / 15.0).sin(),
                3 => 2.0 - 3.0 * (PI * (t - 24.5) / 15.0).cos(),
                4 => 6.0 - 0.2 * (t + 0.5).powi(2),
                5 => -4.0 + 5e-4 * (19.5 - t).powi(3),
                _ => 0.0,
            },
        }
    }
}

/// A generated dataset with its coefficient oracle.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub dataset: Dataset,
    pub truth: Truth,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn assemble(
    truth: Truth,
    times: &[Vec<f64>],
    rows: Vec<Vec<f64>>,
    errors: Vec<f64>,
) -> Result<Simulated> {
    let n = rows.len();
    let p = truth.p();
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let mut u = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for (id, ts) in times.iter().enumerate() {
        u.extend_from_slice(ts);
        ids.extend(std::iter::repeat_n(id, ts.len()));
    }
    let y = (0..n)
        .map(|i| {
            truth
                .active()
                .iter()
                .map(|&j| truth.beta(j, u[i]) * x[(i, j)])
                .sum::<f64>()
                + errors[i]
        })
        .collect();
    let dataset = Dataset::new(x, u, y)?.with_ids(ids)?;
    Ok(Simulated { dataset, truth })
}

/// Four-predictor longitudinal design with correlated errors.
pub fn simulate_tang(design: &LongitudinalDesign, errors: &ErrorProcess, seed: u64) -> Result<Simulated> {
    design.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = design.sample_times(&mut rng);
    let mut rows = Vec::new();
    let mut eps = Vec::new();
    for ts in &times {
        for &t in ts {
            let x2 = if rng.random_bool(0.6) { 1.0 } else { 0.0 };
            let x3 = 0.1 * t + 2.0 * rng.random::<f64>();
            let x4 = ((1.0 + x3) / (2.0 + x3)).sqrt() * normal(&mut rng);
            rows.push(vec![1.0, x2, x3, x4]);
        }
        eps.extend(errors.sample(ts, &mut rng));
    }
    assemble(Truth::Tang, &times, rows, eps)
}

/// 500-predictor design with six active coefficients.
pub fn simulate_wei(design: &LongitudinalDesign, errors: &ErrorProcess, seed: u64) -> Result<Simulated> {
    design.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = design.sample_times(&mut rng);
    let mut rows = Vec::new();
    let mut eps = Vec::new();
    for ts in &times {
        let k = ts.len();
        let mut block = vec![vec![0.0; WEI_P]; k];
        for (row, &t) in block.iter_mut().zip(ts) {
            let x1 = 0.05 + 0.1 * t + 2.0 * rng.random::<f64>();
            row[0] = x1;
            let sd = ((1.0 + x1) / (2.0 + x1)).sqrt();
            for v in &mut row[1..5] {
                *v = sd * normal(&mut rng);
            }
            row[5] = 3.0 * ((t + 0.5) / 30.0).exp() + normal(&mut rng);
        }
        // noise predictors: variance 4, correlation exp(-|t - s|) within the individual
        let chol = exp_correlation_factor(ts, 4.0, 1.0);
        for j in 6..WEI_P {
            let draw = correlated_normal(&chol, &mut rng);
            for (row, v) in block.iter_mut().zip(draw.iter()) {
                row[j] = *v;
            }
        }
        rows.extend(block);
        eps.extend(errors.sample(ts, &mut rng));
    }
    assemble(Truth::Wei, &times, rows, eps)
}
