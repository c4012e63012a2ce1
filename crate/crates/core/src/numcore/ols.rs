use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot tolerance of the rank-revealing QR.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// Regressor matrix, stored column-major (`nalgebra::DMatrix`).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix(DMatrix<f64>);

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid(format!(
                "design must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design contains non-finite values"));
        }
        Ok(DesignMatrix(values))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsResult {
    pub coefficients: Vec<f64>,
    pub rss: f64,
    /// `rss / n_obs` (maximum-likelihood denominator).
    pub residual_variance: f64,
    pub rank: usize,
}

/// Minimum-norm least squares via Householder QR with column pivoting.
///
/// Columns whose remaining norm falls below `PIVOT_TOLERANCE` times the first
/// (largest) pivot are treated as dependent; the minimum-norm solution is then
/// recovered from a complete orthogonal decomposition.
pub fn ols_fit(design: &DesignMatrix, response: &[f64]) -> Result<OlsResult> {
    let m = design.rows();
    let n = design.cols();
    if response.len() != m {
        return Err(Error::dims(format!(
            "design has {m} rows but response has {} entries",
            response.len()
        )));
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("response contains non-finite values"));
    }

    let mut a = design.matrix().clone();
    let mut b = response.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = (0..n).map(|j| a.column(j).norm_squared()).collect();
    let steps = m.min(n);
    let mut rank = 0;
    let mut first_pivot = 0.0;
    let mut v = vec![0.0; m];

    for k in 0..steps {
        // remaining column norms are recomputed, not downdated, to avoid drift
        for (j, norm) in norms.iter_mut().enumerate().skip(k) {
            *norm = a.column(j).rows(k, m - k).norm_squared();
        }
        let (best, best_norm) = (k..n)
            .map(|j| (j, norms[j]))
            .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        let pivot = best_norm.sqrt();
        if k == 0 {
            first_pivot = pivot;
        }
        if pivot == 0.0 || pivot <= PIVOT_TOLERANCE * first_pivot {
            break;
        }
        if best != k {
            a.swap_columns(k, best);
            perm.swap(k, best);
            norms.swap(k, best);
        }

        // Householder reflector zeroing a[k+1.., k]
        let alpha = if a[(k, k)] >= 0.0 { -pivot } else { pivot };
        let len = m - k;
        for i in 0..len {
            v[i] = a[(k + i, k)];
        }
        v[0] -= alpha;
        let vnorm2: f64 = v[..len].iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k + 1..n {
                let mut col = a.column_mut(j);
                let dot: f64 = (0..len).map(|i| v[i] * col[k + i]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in 0..len {
                    col[k + i] -= f * v[i];
                }
            }
            let dot: f64 = (0..len).map(|i| v[i] * b[k + i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in 0..len {
                b[k + i] -= f * v[i];
            }
        }
        a[(k, k)] = alpha;
        for i in k + 1..m {
            a[(i, k)] = 0.0;
        }
        rank += 1;
    }

    let rss: f64 = b[rank..].iter().map(|x| x * x).sum();
    let mut z = vec![0.0; n];
    if rank == n {
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= a[(i, j)] * z[j];
            }
            z[i] = s / a[(i, i)];
        }
    } else if rank > 0 {
        // [R11 R12]^T = Q2 S, so the minimum-norm z solves S^T w = c, z = Q2 w
        let w_t = DMatrix::from_fn(n, rank, |i, j| if i >= j { a[(j, i)] } else { 0.0 });
        let qr = w_t.qr();
        let q2 = qr.q();
        let s = qr.r();
        let mut w = DVector::zeros(rank);
        for i in 0..rank {
            let mut acc = b[i];
            for j in 0..i {
                acc -= s[(j, i)] * w[j];
            }
            w[i] = acc / s[(i, i)];
        }
        let zz = q2 * w;
        z.copy_from_slice(zz.as_slice());
    }

    let mut coefficients = vec![0.0; n];
    for (k, &col) in perm.iter().enumerate() {
        coefficients[col] = z[k];
    }
    Ok(OlsResult {
        coefficients,
        rss,
        residual_variance: rss / m as f64,
        rank,
    })
}

/// Residual sum of squares of `response - design * coef`.
pub fn residual_sum_of_squares(design: &DMatrix<f64>, response: &[f64], coef: &[f64]) -> f64 {
    let fitted = design * DVector::from_column_slice(coef);
    response
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| (y - f) * (y - f))
        .sum()
}
