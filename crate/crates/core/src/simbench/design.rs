use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Visit schedule shared by every individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalDesign {
    pub n_individuals: usize,
    /// Scheduled integer visit times.
    pub schedule: Vec<u32>,
    pub skip_prob: f64,
    /// Observed time is the scheduled time plus `Unif(0, jitter)`.
    pub jitter: f64,
}

impl LongitudinalDesign {
    /// Visits `0..=19`, each skipped with probability 0.6.
    pub fn tang(n_individuals: usize) -> Self {
        LongitudinalDesign {
            n_individuals,
            schedule: (0..20).collect(),
            skip_prob: 0.6,
            jitter: 1.0,
        }
    }

    /// Visits `0..=29`, each skipped with probability 0.6.
    pub fn wei(n_individuals: usize) -> Self {
        LongitudinalDesign {
            n_individuals,
            schedule: (0..30).collect(),
            ..Self::tang(n_individuals)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_individuals == 0 {
            return Err(Error::invalid("design needs at least one individual"));
        }
        if self.schedule.is_empty() {
            return Err(Error::invalid("visit schedule is empty"));
        }
        if !(0.0..1.0).contains(&self.skip_prob) {
            return Err(Error::invalid(format!(
                "skip probability must be in [0, 1), got {}",
                self.skip_prob
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::invalid(format!("invalid jitter {}", self.jitter)));
        }
        Ok(())
    }

    /// Observed times per individual, ascending. An individual who skips every
    /// visit is redrawn, so each has at least one observation.
    pub fn sample_times<R: Rng>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        (0..self.n_individuals)
            .map(|_| loop {
                let times: Vec<f64> = self
                    .schedule
                    .iter()
                    .filter_map(|&s| {
                        let keep = rng.random::<f64>() >= self.skip_prob;
                        let jitter = rng.random::<f64>() * self.jitter;
                        keep.then_some(f64::from(s) + jitter)
                    })
                    .collect();
                if !times.is_empty() {
                    break times;
                }
            })
            .collect()
    }
}

/// Error `v + e`: `v` Gaussian with covariance `process_var * exp(-|t - s| / scale)`
/// within an individual, `e` independent with variance `measurement_var`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProcess {
    pub measurement_var: f64,
    pub process_var: f64,
    pub correlation_scale: f64,
}

impl Default for ErrorProcess {
    fn default() -> Self {
        ErrorProcess {
            measurement_var: 4.0,
            process_var: 4.0,
            correlation_scale: 1.0,
        }
    }
}

impl ErrorProcess {
    pub fn sample<R: Rng>(&self, times: &[f64], rng: &mut R) -> Vec<f64> {
        let chol = exp_correlation_factor(times, self.process_var, self.correlation_scale);
        let v = correlated_normal(&chol, rng);
        let sd = self.measurement_var.sqrt();
        v.iter()
            .map(|vi| {
                let e: f64 = StandardNormal.sample(rng);
                vi + sd * e
            })
            .collect()
    }
}

/// Lower Cholesky factor of `var * exp(-|t_a - t_b| / scale)`.
pub fn exp_correlation_factor(times: &[f64], var: f64, scale: f64) -> DMatrix<f64> {
    let k = times.len();
    let cov = DMatrix::from_fn(k, k, |a, b| var * (-(times[a] - times[b]).abs() / scale).exp());
    // distinct times keep the matrix positive definite
    cov.cholesky()
        .expect("exponential covariance at distinct times is positive definite")
        .l()
}

/// `L z` for standard normal `z`.
pub fn correlated_normal<R: Rng>(chol: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(chol.nrows(), |_, _| StandardNormal.sample(rng));
    chol * z
}
