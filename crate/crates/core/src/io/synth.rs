use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::panel::PanelTable;
use crate::error::{Error, Result};

/// Daily panel whose response reacts to the predictors after a fixed lag.
///
/// `x_j(unit, t)` follows a stationary AR(1) with coefficient `ar`, and
/// `y(unit, t) = b_0(t) + sum_j b_j(t) x_j(unit, t - lag) + noise_sd * e`
/// with smooth seasonal coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanel {
    pub units: usize,
    pub days: usize,
    pub predictors: usize,
    pub lag: u32,
    pub ar: f64,
    pub noise_sd: f64,
}

impl Default for SyntheticPanel {
    fn default() -> Self {
        SyntheticPanel {
            units: 7,
            days: 120,
            predictors: 3,
            lag: 3,
            ar: 0.5,
            noise_sd: 0.5,
        }
    }
}

impl SyntheticPanel {
    /// `b_j(t)` with `j = 0` the intercept; `t` in days.
    pub fn coefficient(&self, j: usize, t: f64) -> f64 {
        let phase = 2.0 * PI * t / self.days as f64;
        match j {
            0 => 2.0 + 0.5 * phase.sin(),
            _ => {
                let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
                sign * (1.0 + 0.5 * (phase + j as f64).cos())
            }
        }
    }

    pub fn generate(&self, seed: u64) -> Result<PanelTable> {
        if self.units == 0 || self.days == 0 || self.predictors == 0 {
            return Err(Error::invalid("synthetic panel needs units, days and predictors"));
        }
        if !(self.ar.abs() < 1.0) || !(self.noise_sd >= 0.0) {
            return Err(Error::invalid("need |ar| < 1 and noise_sd >= 0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let lag = self.lag as usize;
        let span = self.days + lag;
        let innov = (1.0 - self.ar * self.ar).sqrt();
        let n = self.units * self.days;
        let mut x = vec![Vec::with_capacity(n); self.predictors];
        let (mut unit, mut t, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..self.units {
            // series index s covers days s - lag, so day d sits at s = d + lag
            let series: Vec<Vec<f64>> = (0..self.predictors)
                .map(|_| {
                    let mut v = Vec::with_capacity(span);
                    let mut cur = normal();
                    for _ in 0..span {
                        v.push(cur);
                        cur = self.ar * cur + innov * normal();
                    }
                    v
                })
                .collect();
            for d in 0..self.days {
                let day = d as f64;
                let mut signal = self.coefficient(0, day);
                for (j, s) in series.iter().enumerate() {
                    signal += self.coefficient(j + 1, day) * s[d];
                    x[j].push(s[d + lag]);
                }
                unit.push(k);
                t.push(day);
                y.push(signal + self.noise_sd * normal());
            }
        }
        PanelTable::new(
            Some("unit".into()),
            "t".into(),
            "y".into(),
            (1..=self.predictors).map(|j| format!("x{j}")).collect(),
            (0..self.units).map(|k| format!("u{k}")).collect(),
            unit,
            t,
            y,
            x,
        )
    }
}
