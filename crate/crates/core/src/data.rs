use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Observations `(X_i, u_i, y_i)`.
///
/// `x` is `n x p` (nalgebra, column-major). `individual_id` groups rows of a
/// longitudinal design; the fitting code ignores it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub individual_id: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, u: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let ds = Dataset {
            x,
            u,
            y,
            individual_id: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_ids(mut self, ids: Vec<usize>) -> Result<Self> {
        if ids.len() != self.n() {
            return Err(Error::dims(format!(
                "{} individual ids for {} rows",
                ids.len(),
                self.n()
            )));
        }
        self.individual_id = Some(ids);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.x.nrows() != n || self.u.len() != n {
            return Err(Error::dims(format!(
                "x has {} rows, u has {}, y has {}",
                self.x.nrows(),
                self.u.len(),
                n
            )));
        }
        if n == 0 {
            return Err(Error::invalid("dataset has no rows"));
        }
        if self.x.ncols() == 0 {
            return Err(Error::invalid("dataset has no predictors"));
        }
        if let Some(ids) = &self.individual_id {
            if ids.len() != n {
                return Err(Error::dims("individual_id length differs from y"));
            }
        }
        let finite = self.x.iter().all(|v| v.is_finite())
            && self.u.iter().all(|v| v.is_finite())
            && self.y.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(())
    }

    /// Single-predictor view `(x_j, u, response)`.
    pub fn column_with_response(&self, j: usize, response: &[f64]) -> Dataset {
        Dataset {
            x: DMatrix::from_column_slice(self.n(), 1, self.x.column(j).as_slice()),
            u: self.u.clone(),
            y: response.to_vec(),
            individual_id: self.individual_id.clone(),
        }
    }

    /// Rows reordered by `perm` (new row `i` is old row `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(perm.len(), self.p(), |i, j| self.x[(perm[i], j)]);
        Dataset {
            x,
            u: perm.iter().map(|&i| self.u[i]).collect(),
            y: perm.iter().map(|&i| self.y[i]).collect(),
            individual_id: self
                .individual_id
                .as_ref()
                .map(|ids| perm.iter().map(|&i| ids[i]).collect()),
        }
    }

    pub fn u_range(&self) -> (f64, f64) {
        self.u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}
