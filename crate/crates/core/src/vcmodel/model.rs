use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{BSplineBasis, MAX_DEGREE};

/// Points in exported coefficient curves.
pub const CURVE_GRID_POINTS: usize = 200;

/// Interior knots of each predictor's coefficient spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredictorKnots {
    pub per_predictor: Vec<Vec<f64>>,
}

impl PredictorKnots {
    pub fn shared(knots: Vec<f64>, p: usize) -> Self {
        PredictorKnots {
            per_predictor: vec![knots; p],
        }
    }

    pub fn p(&self) -> usize {
        self.per_predictor.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.per_predictor.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.per_predictor.iter().map(Vec::len).sum()
    }

    pub fn is_shared(&self) -> bool {
        self.per_predictor.windows(2).all(|w| w[0] == w[1])
    }
}

/// `n ln(rss / n) + df ln(n)`.
///
/// With `df = sum_j L_j + p (D + 1)` this is the shared-knot criterion
/// `p (L + D + 1) ln n` when every `L_j = L`, and the per-predictor variant
/// otherwise. A zero `rss` is floored at the smallest positive double.
pub fn bic(rss: f64, n: usize, df: usize) -> f64 {
    let nf = n as f64;
    nf * (rss.max(f64::MIN_POSITIVE) / nf).ln() + df as f64 * nf.ln()
}

/// Fitted varying-coefficient model. Serializes to the model JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VCFit {
    pub degree: usize,
    pub knots: PredictorKnots,
    pub boundary: (f64, f64),
    /// `coefficients[j][k]` multiplies `B_{j,k}`; length `L_j + degree + 1`.
    pub coefficients: Vec<Vec<f64>>,
    pub rss: f64,
    pub bic: f64,
    pub n: usize,
    pub p: usize,
}

impl VCFit {
    pub fn degrees_of_freedom(&self) -> usize {
        self.knots.total() + self.p * (self.degree + 1)
    }

    pub fn recompute_bic(&self) -> f64 {
        bic(self.rss, self.n, self.degrees_of_freedom())
    }

    pub fn bases(&self) -> Result<Vec<BSplineBasis>> {
        self.knots
            .per_predictor
            .iter()
            .map(|k| BSplineBasis::new(self.degree, k.clone(), self.boundary))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree > MAX_DEGREE {
            return Err(Error::invalid(format!("degree {} unsupported", self.degree)));
        }
        if self.knots.p() != self.p || self.coefficients.len() != self.p {
            return Err(Error::dims(format!(
                "model declares p = {} but has {} knot vectors and {} coefficient vectors",
                self.p,
                self.knots.p(),
                self.coefficients.len()
            )));
        }
        for (j, (k, c)) in self
            .knots
            .per_predictor
            .iter()
            .zip(&self.coefficients)
            .enumerate()
        {
            if c.len() != k.len() + self.degree + 1 {
                return Err(Error::dims(format!(
                    "predictor {j}: {} coefficients for {} knots",
                    c.len(),
                    k.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("predictor {j}: non-finite coefficient")));
            }
        }
        self.bases().map(|_| ())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let fit: VCFit = serde_json::from_str(text)?;
        fit.validate()?;
        Ok(fit)
    }

    /// `beta_j(u)`, with `u` clamped to the training range.
    pub fn beta(&self, j: usize, u: f64) -> Result<f64> {
        let basis = BSplineBasis::new(
            self.degree,
            self.knots.per_predictor[j].clone(),
            self.boundary,
        )?;
        Ok(basis.eval_combination(&self.coefficients[j], u))
    }

    /// `count` equally spaced points across the training range.
    pub fn curve_grid(&self, count: usize) -> Vec<f64> {
        let (lo, hi) = self.boundary;
        match count {
            0 => vec![],
            1 => vec![lo],
            _ => (0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect(),
        }
    }
}

/// `beta_j(u)` for every grid point (rows) and predictor (columns).
pub fn eval_coefficients(fit: &VCFit, u_grid: &[f64]) -> Result<DMatrix<f64>> {
    let bases = fit.bases()?;
    let mut out = DMatrix::zeros(u_grid.len(), fit.p);
    for (j, basis) in bases.iter().enumerate() {
        for (i, &u) in u_grid.iter().enumerate() {
            out[(i, j)] = basis.eval_combination(&fit.coefficients[j], u);
        }
    }
    Ok(out)
}

/// `y_hat_i = sum_j beta_j(u_i) x_ij`.
pub fn predict(fit: &VCFit, x_new: &DMatrix<f64>, u_new: &[f64]) -> Result<Vec<f64>> {
    if x_new.ncols() != fit.p {
        return Err(Error::dims(format!(
            "model has {} predictors, input has {}",
            fit.p,
            x_new.ncols()
        )));
    }
    if x_new.nrows() != u_new.len() {
        return Err(Error::dims(format!(
            "{} rows of x but {} values of u",
            x_new.nrows(),
            u_new.len()
        )));
    }
    let betas = eval_coefficients(fit, u_new)?;
    Ok((0..u_new.len())
        .map(|i| (0..fit.p).map(|j| betas[(i, j)] * x_new[(i, j)]).sum())
        .collect())
}
