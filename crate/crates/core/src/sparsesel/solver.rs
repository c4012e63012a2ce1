use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::kernel::{kernel_roots, GroupKernel};
use crate::error::{Error, Result};
use crate::numcore::{ols_fit, DesignMatrix};
use crate::vcmodel::bic;

/// Group norms at or below this count as zero.
pub const ZERO_NORM: f64 = 1e-8;
pub const DEFAULT_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;

// gram eigenvalues below this fraction of the largest span the block's null space
const NULL_EIGEN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Converged once no block coefficient moves more than this in a full sweep.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupLassoFit {
    /// Spline coefficients `c_j` per group.
    pub coefficients: Vec<Vec<f64>>,
    pub lambda: f64,
    /// Per-group penalty weights; `INFINITY` pins a group at zero.
    pub weights: Vec<f64>,
    /// Groups with norm above `ZERO_NORM`.
    pub active_set: Vec<usize>,
    /// `(c_j' R_j c_j)^{1/2}` with the floored kernel.
    pub group_norms: Vec<f64>,
    /// `(1/n) rss + lambda * sum_j w_j * norm_j`.
    pub objective: f64,
    pub rss: f64,
    /// Residual sum of squares of the least-squares refit on the active groups.
    pub refit_rss: f64,
    /// `n ln(refit_rss / n) + sum_{j active} dim(c_j) ln n`; infinite once the
    /// active groups hold `n` or more coefficients.
    pub bic: f64,
    /// Cleared when `max_sweeps` ran out first; the fit is still returned.
    pub converged: bool,
    pub sweeps: usize,
    /// Objective at the start and after every sweep.
    pub objective_trace: Vec<f64>,
    pub(crate) theta: Vec<DVector<f64>>,
}

impl GroupLassoFit {
    pub fn degrees_of_freedom(&self) -> usize {
        self.active_set
            .iter()
            .map(|&j| self.coefficients[j].len())
            .sum()
    }
}

#[derive(Debug, Clone)]
struct Group {
    // design block in kernel-whitened coordinates, Z_j R_j^{-1/2}
    z: DMatrix<f64>,
    gram: DMatrix<f64>,
    gram_vals: Vec<f64>,
    gram_vecs: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
}

/// A group-lasso problem with blocks pre-whitened by their kernels, so that
/// the penalty is a plain Euclidean norm `||theta_j||` with `theta_j = R_j^{1/2} c_j`.
#[derive(Debug, Clone)]
pub struct GroupProblem {
    n: usize,
    y: DVector<f64>,
    groups: Vec<Group>,
}

impl GroupProblem {
    pub fn new(blocks: &[DMatrix<f64>], y: &[f64], kernel: &GroupKernel) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::invalid("empty response"));
        }
        if blocks.len() != kernel.len() {
            return Err(Error::dims(format!(
                "{} design blocks but {} kernel matrices",
                blocks.len(),
                kernel.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("response contains non-finite values"));
        }
        let mut groups = Vec::with_capacity(blocks.len());
        for (j, (block, r)) in blocks.iter().zip(&kernel.matrices).enumerate() {
            if block.nrows() != n {
                return Err(Error::dims(format!(
                    "block {j} has {} rows, response has {n}",
                    block.nrows()
                )));
            }
            if r.nrows() != block.ncols() || r.ncols() != block.ncols() {
                return Err(Error::dims(format!(
                    "block {j} has {} columns but kernel is {}x{}",
                    block.ncols(),
                    r.nrows(),
                    r.ncols()
                )));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("block {j} contains non-finite values")));
            }
            let roots = kernel_roots(r);
            let z = block * &roots.inv_sqrt;
            let gram = z.tr_mul(&z) / n as f64;
            let eig = SymmetricEigen::new((&gram + gram.transpose()) * 0.5);
            groups.push(Group {
                z,
                gram,
                gram_vals: eig.eigenvalues.iter().copied().collect(),
                gram_vecs: eig.eigenvectors,
                inv_sqrt: roots.inv_sqrt,
            });
        }
        Ok(GroupProblem {
            n,
            y: DVector::from_column_slice(y),
            groups,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.z.ncols()).collect()
    }

    /// Per-group `||(2/n) z_j' y|| / w_j`: the penalty below which group `j`
    /// leaves zero when all other groups are zero. `None` for unpenalized or
    /// excluded groups.
    pub fn entry_penalties(&self, weights: &[f64]) -> Vec<Option<f64>> {
        let scale = 2.0 / self.n as f64;
        self.groups
            .iter()
            .zip(weights)
            .map(|(g, &w)| {
                (w > 0.0 && w.is_finite()).then(|| scale * g.z.tr_mul(&self.y).norm() / w)
            })
            .collect()
    }

    /// Smallest `lambda` at which every penalized group is zero.
    pub fn lambda_max(&self, weights: &[f64]) -> f64 {
        self.entry_penalties(weights)
            .into_iter()
            .flatten()
            .fold(0.0, f64::max)
    }

    /// Block coordinate descent from `warm` (or zero).
    pub fn solve(
        &self,
        lambda: f64,
        weights: &[f64],
        warm: Option<&GroupLassoFit>,
        opts: &SolverOptions,
    ) -> Result<GroupLassoFit> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if weights.len() != self.groups.len() {
            return Err(Error::dims(format!(
                "{} weights for {} groups",
                weights.len(),
                self.groups.len()
            )));
        }
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::invalid("weights must be non-negative"));
        }
        let eligible: Vec<bool> = weights.iter().map(|w| w.is_finite()).collect();
        let mut theta: Vec<DVector<f64>> = match warm {
            Some(w) if w.theta.len() == self.groups.len() => w.theta.clone(),
            _ => self.groups.iter().map(|g| DVector::zeros(g.z.ncols())).collect(),
        };
        for (t, &ok) in theta.iter_mut().zip(&eligible) {
            if !ok {
                t.fill(0.0);
            }
        }
        let mut r = self.y.clone();
        for (g, t) in self.groups.iter().zip(&theta) {
            if t.iter().any(|v| *v != 0.0) {
                r.gemv(-1.0, &g.z, t, 1.0);
            }
        }

        let objective = |r: &DVector<f64>, theta: &[DVector<f64>]| {
            let pen: f64 = theta
                .iter()
                .zip(weights)
                .filter(|(_, w)| w.is_finite())
                .map(|(t, w)| w * t.norm())
                .sum();
            r.norm_squared() / self.n as f64 + lambda * pen
        };
        let mut trace = vec![objective(&r, &theta)];
        let mut sweeps = 0;
        let mut converged = false;
        let all: Vec<usize> = (0..self.groups.len()).filter(|&j| eligible[j]).collect();

        'outer: while sweeps < opts.max_sweeps {
            let delta = self.sweep(&all, lambda, weights, &mut theta, &mut r);
            sweeps += 1;
            push_checked(&mut trace, objective(&r, &theta));
            if delta < opts.tolerance {
                converged = true;
                break;
            }
            let active: Vec<usize> = all
                .iter()
                .copied()
                .filter(|&j| theta[j].iter().any(|v| *v != 0.0))
                .collect();
            loop {
                if sweeps >= opts.max_sweeps {
                    break 'outer;
                }
                let delta = self.sweep(&active, lambda, weights, &mut theta, &mut r);
                sweeps += 1;
                push_checked(&mut trace, objective(&r, &theta));
                if delta < opts.tolerance {
                    break;
                }
            }
        }

        Ok(self.assemble(lambda, weights, theta, &r, trace, converged, sweeps))
    }

    /// Warm-started solves along `lambdas` (in the given order). Stops early
    /// once the active groups hold more than `max_df` coefficients.
    pub fn path(
        &self,
        lambdas: &[f64],
        weights: &[f64],
        max_df: usize,
        opts: &SolverOptions,
    ) -> Result<Vec<GroupLassoFit>> {
        let mut fits: Vec<GroupLassoFit> = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            let fit = self.solve(lambda, weights, fits.last(), opts)?;
            let stop = fit.degrees_of_freedom() > max_df;
            fits.push(fit);
            if stop {
                break;
            }
        }
        Ok(fits)
    }

    /// One pass of exact block minimizations; returns the largest coefficient change.
    fn sweep(
        &self,
        order: &[usize],
        lambda: f64,
        weights: &[f64],
        theta: &mut [DVector<f64>],
        r: &mut DVector<f64>,
    ) -> f64 {
        let scale = 2.0 / self.n as f64;
        let mut max_delta: f64 = 0.0;
        for &j in order {
            let g = &self.groups[j];
            let old = &theta[j];
            // b = (2/n) z' (r + z theta_old)
            let b = g.z.tr_mul(r) * scale + &g.gram * old * 2.0;
            let new = block_update(g, &b, lambda * weights[j]);
            let delta = &new - old;
            let change = delta.amax();
            if change > 0.0 {
                r.gemv(-1.0, &g.z, &delta, 1.0);
                theta[j] = new;
            }
            max_delta = max_delta.max(change);
        }
        max_delta
    }

    /// Least-squares residual sum of squares of `y` on the listed groups.
    fn refit_rss(&self, active: &[usize]) -> f64 {
        if active.is_empty() {
            return self.y.norm_squared();
        }
        let cols: usize = active.iter().map(|&j| self.groups[j].z.ncols()).sum();
        let mut m = DMatrix::zeros(self.n, cols);
        let mut at = 0;
        for &j in active {
            let z = &self.groups[j].z;
            m.columns_mut(at, z.ncols()).copy_from(z);
            at += z.ncols();
        }
        // blocks were checked finite and shaped at construction
        let design = DesignMatrix::new(m).expect("finite active design");
        ols_fit(&design, self.y.as_slice())
            .expect("refit on validated blocks")
            .rss
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        lambda: f64,
        weights: &[f64],
        theta: Vec<DVector<f64>>,
        r: &DVector<f64>,
        objective_trace: Vec<f64>,
        converged: bool,
        sweeps: usize,
    ) -> GroupLassoFit {
        let group_norms: Vec<f64> = theta.iter().map(|t| t.norm()).collect();
        let coefficients = self
            .groups
            .iter()
            .zip(&theta)
            .map(|(g, t)| (&g.inv_sqrt * t).iter().copied().collect())
            .collect::<Vec<Vec<f64>>>();
        let active_set: Vec<usize> = (0..theta.len())
            .filter(|&j| group_norms[j] > ZERO_NORM)
            .collect();
        let rss = r.norm_squared();
        let df: usize = active_set.iter().map(|&j| theta[j].len()).sum();
        let refit_rss = self.refit_rss(&active_set);
        let bic = if df < self.n {
            bic(refit_rss, self.n, df)
        } else {
            f64::INFINITY
        };
        GroupLassoFit {
            coefficients,
            lambda,
            weights: weights.to_vec(),
            active_set,
            group_norms,
            objective: *objective_trace.last().unwrap(),
            rss,
            refit_rss,
            bic,
            converged,
            sweeps,
            objective_trace,
            theta,
        }
    }
}

fn push_checked(trace: &mut Vec<f64>, value: f64) {
    let prev = *trace.last().unwrap();
    debug_assert!(
        value <= prev + 1e-10 * prev.abs().max(1.0),
        "objective increased from {prev} to {value}"
    );
    trace.push(value);
}

/// Minimizer of `(1/n)||r_j - z theta||^2 + mu ||theta||` given `b = (2/n) z' r_j`.
fn block_update(g: &Group, b: &DVector<f64>, mu: f64) -> DVector<f64> {
    let k = b.len();
    if b.norm() <= mu {
        return DVector::zeros(k);
    }
    let top = g.gram_vals.iter().cloned().fold(0.0_f64, f64::max);
    if top <= 0.0 {
        return DVector::zeros(k);
    }
    let a = g.gram_vecs.tr_mul(b);
    let live: Vec<bool> = g.gram_vals.iter().map(|&v| v > NULL_EIGEN * top).collect();
    let coords: Vec<f64> = if mu == 0.0 {
        (0..k)
            .map(|i| if live[i] { a[i] / (2.0 * g.gram_vals[i]) } else { 0.0 })
            .collect()
    } else {
        let pairs: Vec<(f64, f64)> = (0..k)
            .filter(|&i| live[i])
            .map(|i| (a[i] * a[i], g.gram_vals[i]))
            .collect();
        let t = solve_norm(&pairs, mu);
        (0..k)
            .map(|i| if live[i] { a[i] * t / (2.0 * g.gram_vals[i] * t + mu) } else { 0.0 })
            .collect()
    };
    &g.gram_vecs * DVector::from_vec(coords)
}

/// Root `t > 0` of `sum a2 / (2 g t + mu)^2 = 1`, assuming `sum a2 > mu^2`.
///
/// Newton on `f(t)^{-1/2} - 1`, which is nearly linear in `t`, safeguarded by
/// the bracket implied by the extreme eigenvalues.
fn solve_norm(pairs: &[(f64, f64)], mu: f64) -> f64 {
    let a_norm = pairs.iter().map(|p| p.0).sum::<f64>().sqrt();
    let g_max = pairs.iter().map(|p| p.1).fold(0.0_f64, f64::max);
    let g_min = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let excess = (a_norm - mu).max(0.0);
    let mut lo = excess / (2.0 * g_max);
    let mut hi = excess / (2.0 * g_min);
    let phi = |t: f64| {
        let mut f = 0.0;
        let mut df = 0.0;
        for &(a2, g) in pairs {
            let d = 2.0 * g * t + mu;
            f += a2 / (d * d);
            df += -4.0 * g * a2 / (d * d * d);
        }
        let s = f.sqrt();
        (1.0 / s - 1.0, -0.5 * df / (f * s))
    };
    let mut t = lo;
    for _ in 0..200 {
        let (v, dv) = phi(t);
        if v == 0.0 {
            return t;
        }
        if v < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let mut next = t - v / dv;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * t.abs().max(f64::MIN_POSITIVE) {
            return next;
        }
        t = next;
    }
    t
}

/// Weights `1 / norm_j` from a first-stage fit; zero groups get `INFINITY`.
pub fn adaptive_weights(first_stage: &GroupLassoFit) -> Vec<f64> {
    first_stage
        .group_norms
        .iter()
        .map(|&nrm| if nrm > ZERO_NORM { 1.0 / nrm } else { f64::INFINITY })
        .collect()
}

/// Group lasso with unit weights at a single `lambda1`.
pub fn group_lasso(
    blocks: &[DMatrix<f64>],
    y: &[f64],
    kernel: &GroupKernel,
    lambda1: f64,
) -> Result<GroupLassoFit> {
    let problem = GroupProblem::new(blocks, y, kernel)?;
    let weights = vec![1.0; problem.n_groups()];
    problem.solve(lambda1, &weights, None, &SolverOptions::default())
}

/// Second-stage fit with weights from `first_stage` on the same blocks.
pub fn adaptive_group_lasso(
    blocks: &[DMatrix<f64>],
    y: &[f64],
    kernel: &GroupKernel,
    lambda2: f64,
    first_stage: &GroupLassoFit,
) -> Result<GroupLassoFit> {
    if first_stage.group_norms.len() != blocks.len() {
        return Err(Error::dims(format!(
            "first stage has {} groups, design has {}",
            first_stage.group_norms.len(),
            blocks.len()
        )));
    }
    let problem = GroupProblem::new(blocks, y, kernel)?;
    problem.solve(
        lambda2,
        &adaptive_weights(first_stage),
        None,
        &SolverOptions::default(),
    )
}

/// Optimality-condition violations of a fit, measured in the original
/// coefficients `c_j` against the floored kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Largest `||grad_j + lambda w_j R_j c_j / norm_j||` over nonzero groups.
    pub active: f64,
    /// Largest `max(0, ||R_j^{-1/2} grad_j|| - lambda w_j)` over zero groups.
    pub inactive: f64,
    /// Largest block gradient norm, for scaling.
    pub gradient: f64,
}

impl KktReport {
    pub fn max_violation(&self) -> f64 {
        self.active.max(self.inactive)
    }
}

/// KKT residuals recomputed from the raw blocks, response and kernels.
pub fn kkt_residual(
    blocks: &[DMatrix<f64>],
    y: &[f64],
    kernel: &GroupKernel,
    fit: &GroupLassoFit,
) -> Result<KktReport> {
    if blocks.len() != fit.coefficients.len() || kernel.len() != blocks.len() {
        return Err(Error::dims("fit, blocks and kernel disagree on group count"));
    }
    let n = y.len();
    let mut r = DVector::from_column_slice(y);
    for (z, c) in blocks.iter().zip(&fit.coefficients) {
        r -= z * DVector::from_column_slice(c);
    }
    let mut report = KktReport {
        active: 0.0,
        inactive: 0.0,
        gradient: 0.0,
    };
    for (j, (z, c)) in blocks.iter().zip(&fit.coefficients).enumerate() {
        let w = fit.weights[j];
        if !w.is_finite() {
            continue;
        }
        let roots = kernel_roots(&kernel.matrices[j]);
        let rf = &roots.sqrt * &roots.sqrt;
        let grad = z.tr_mul(&r) * (-2.0 / n as f64);
        report.gradient = report.gradient.max(grad.norm());
        let c = DVector::from_column_slice(c);
        let norm = c.dot(&(&rf * &c)).max(0.0).sqrt();
        if norm > 0.0 {
            let res = &grad + &rf * &c * (fit.lambda * w / norm);
            report.active = report.active.max(res.norm());
        } else {
            let dual = (&roots.inv_sqrt * &grad).norm();
            report.inactive = report.inactive.max(dual - fit.lambda * w);
        }
    }
    Ok(report)
}
