use nalgebra::DMatrix;

use super::ols::DesignMatrix;
use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 3;

/// Clamped B-spline basis on `[lower, upper]`.
///
/// The boundary knots are repeated `degree + 1` times, so the basis has
/// `degree + interior_knots.len() + 1` functions and is a partition of unity
/// on the closed interval. Evaluation points outside the interval are clamped
/// to the nearest boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    degree: usize,
    interior_knots: Vec<f64>,
    lower: f64,
    upper: f64,
    knot_vector: Vec<f64>,
}

impl BSplineBasis {
    pub fn new(degree: usize, interior_knots: Vec<f64>, boundary: (f64, f64)) -> Result<Self> {
        let (lower, upper) = boundary;
        if degree > MAX_DEGREE {
            return Err(Error::invalid(format!(
                "spline degree {degree} outside 0..={MAX_DEGREE}"
            )));
        }
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::invalid(format!(
                "boundary ({lower}, {upper}) is not a proper interval"
            )));
        }
        for w in interior_knots.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::invalid("interior knots must be strictly increasing"));
            }
        }
        if interior_knots.iter().any(|&k| !(k > lower && k < upper)) {
            return Err(Error::invalid(format!(
                "interior knots must lie strictly inside ({lower}, {upper})"
            )));
        }
        let mut knot_vector = Vec::with_capacity(interior_knots.len() + 2 * (degree + 1));
        knot_vector.extend(std::iter::repeat(lower).take(degree + 1));
        knot_vector.extend_from_slice(&interior_knots);
        knot_vector.extend(std::iter::repeat(upper).take(degree + 1));
        Ok(BSplineBasis {
            degree,
            interior_knots,
            lower,
            upper,
            knot_vector,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn n_basis(&self) -> usize {
        self.degree + self.interior_knots.len() + 1
    }

    /// Full knot sequence including the repeated boundary knots.
    pub fn knot_vector(&self) -> &[f64] {
        &self.knot_vector
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.lower, self.upper)
    }

    /// Index `mu` of the knot span `[t_mu, t_mu+1)` holding `u`; the right
    /// boundary maps to the last non-degenerate span.
    fn span(&self, u: f64) -> usize {
        let last = self.n_basis() - 1;
        if u >= self.upper {
            return last;
        }
        // first index in interior knots strictly greater than u
        let pos = self.interior_knots.partition_point(|&k| k <= u);
        self.degree + pos
    }

    /// Non-zero basis values at `u`: returns the index of the first non-zero
    /// function and writes `degree + 1` values into `out`.
    pub fn eval_local(&self, u: f64, out: &mut [f64]) -> usize {
        let d = self.degree;
        let u = self.clamp(u);
        let mu = self.span(u);
        let t = &self.knot_vector;
        let mut left = [0.0; MAX_DEGREE + 1];
        let mut right = [0.0; MAX_DEGREE + 1];
        out[0] = 1.0;
        for j in 1..=d {
            left[j] = u - t[mu + 1 - j];
            right[j] = t[mu + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        mu - d
    }

    /// `(B_1(u), ..., B_{n_basis}(u))`.
    pub fn eval(&self, u: f64) -> Vec<f64> {
        let mut full = vec![0.0; self.n_basis()];
        let mut local = [0.0; MAX_DEGREE + 1];
        let start = self.eval_local(u, &mut local);
        full[start..start + self.degree + 1].copy_from_slice(&local[..self.degree + 1]);
        full
    }

    /// `sum_k coef[k] B_k(u)`.
    pub fn eval_combination(&self, coef: &[f64], u: f64) -> f64 {
        let mut local = [0.0; MAX_DEGREE + 1];
        let start = self.eval_local(u, &mut local);
        local[..=self.degree]
            .iter()
            .zip(&coef[start..start + self.degree + 1])
            .map(|(b, c)| b * c)
            .sum()
    }

    /// Support interval `[t_k, t_{k+degree+1}]` of the `k`-th function (0-based).
    pub fn support(&self, k: usize) -> (f64, f64) {
        (self.knot_vector[k], self.knot_vector[k + self.degree + 1])
    }
}

/// Expanded design with column block `j` holding `x_ij * B_{j,k}(u_i)`.
pub fn bspline_design(
    bases: &[BSplineBasis],
    x: &DMatrix<f64>,
    u: &[f64],
) -> Result<DesignMatrix> {
    if bases.len() != x.ncols() {
        return Err(Error::dims(format!(
            "{} bases for {} predictors",
            bases.len(),
            x.ncols()
        )));
    }
    if u.len() != x.nrows() {
        return Err(Error::dims(format!(
            "u has {} entries, x has {} rows",
            u.len(),
            x.nrows()
        )));
    }
    let n = u.len();
    let total: usize = bases.iter().map(BSplineBasis::n_basis).sum();
    let mut out = DMatrix::zeros(n, total);
    let mut offset = 0;
    let mut local = [0.0; MAX_DEGREE + 1];
    for (j, basis) in bases.iter().enumerate() {
        for i in 0..n {
            let xij = x[(i, j)];
            let start = basis.eval_local(u[i], &mut local);
            for (k, b) in local[..=basis.degree()].iter().enumerate() {
                out[(i, offset + start + k)] = xij * b;
            }
        }
        offset += basis.n_basis();
    }
    DesignMatrix::new(out)
}
