use std::collections::HashMap;

use log::debug;

use super::model::{bic, PredictorKnots, VCFit};
use super::FitOptions;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::knotdp::KnotSelector;
use crate::numcore::{bspline_design, ols_fit, BSplineBasis};

/// Least-squares spline fit for fixed knots.
pub fn fit_spline(dataset: &Dataset, knots: &PredictorKnots, degree: usize) -> Result<VCFit> {
    dataset.validate()?;
    let boundary = dataset.u_range();
    fit_spline_on(dataset, knots, degree, boundary)
}

fn fit_spline_on(
    dataset: &Dataset,
    knots: &PredictorKnots,
    degree: usize,
    boundary: (f64, f64),
) -> Result<VCFit> {
    let p = dataset.p();
    let n = dataset.n();
    if knots.p() != p {
        return Err(Error::dims(format!("{} knot vectors for {p} predictors", knots.p())));
    }
    let bases = knots
        .per_predictor
        .iter()
        .map(|k| BSplineBasis::new(degree, k.clone(), boundary))
        .collect::<Result<Vec<_>>>()?;
    let cols: usize = bases.iter().map(BSplineBasis::n_basis).sum();
    if cols > n {
        return Err(Error::OverParameterized { rows: n, cols });
    }
    let design = bspline_design(&bases, &dataset.x, &dataset.u)?;
    let ols = ols_fit(&design, &dataset.y)?;
    let mut coefficients = Vec::with_capacity(p);
    let mut offset = 0;
    for b in &bases {
        coefficients.push(ols.coefficients[offset..offset + b.n_basis()].to_vec());
        offset += b.n_basis();
    }
    let df = knots.total() + p * (degree + 1);
    Ok(VCFit {
        degree,
        knots: knots.clone(),
        boundary,
        coefficients,
        rss: ols.rss,
        bic: bic(ols.rss, n, df),
        n,
        p,
    })
}

#[derive(Debug, Clone)]
pub struct OneStepResult {
    pub fit: VCFit,
    pub lambda0: f64,
    /// `(lambda0, knot count, bic)` for every grid point that produced a fit.
    pub path: Vec<(f64, usize, f64)>,
}

/// Global knots for every `lambda0` in the grid; keeps the lowest-BIC fit,
/// preferring fewer knots on ties.
pub fn one_step_search(dataset: &Dataset, opts: &FitOptions) -> Result<OneStepResult> {
    if opts.lambda0_grid.is_empty() {
        return Err(Error::invalid("lambda0 grid is empty"));
    }
    if let Some(bad) = opts.lambda0_grid.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(Error::invalid(format!("lambda0 grid value {bad} is not positive")));
    }
    dataset.validate()?;
    let boundary = dataset.u_range();
    let selector = KnotSelector::new(dataset, opts.alpha, opts.grid)?;
    let p = dataset.p();
    let mut cache: HashMap<Vec<u64>, Option<VCFit>> = HashMap::new();
    let mut best: Option<(VCFit, f64)> = None;
    let mut path = Vec::new();
    for &lambda0 in &opts.lambda0_grid {
        let ks = selector.select(lambda0);
        let key: Vec<u64> = ks.knots.iter().map(|k| k.to_bits()).collect();
        let entry = match cache.get(&key) {
            Some(e) => e.clone(),
            None => {
                let knots = PredictorKnots::shared(ks.knots.clone(), p);
                let fit = match fit_spline_on(dataset, &knots, opts.degree, boundary) {
                    Ok(f) => Some(f),
                    Err(Error::OverParameterized { .. }) => None,
                    Err(e) => return Err(e),
                };
                cache.insert(key, fit.clone());
                fit
            }
        };
        let Some(fit) = entry else { continue };
        path.push((lambda0, ks.len(), fit.bic));
        let better = match &best {
            None => true,
            Some((b, _)) => {
                fit.bic < b.bic || (fit.bic == b.bic && fit.knots.total() < b.knots.total())
            }
        };
        if better {
            best = Some((fit, lambda0));
        }
    }
    let (fit, lambda0) = best.ok_or_else(|| {
        Error::invalid("no knot set in the lambda0 grid gives an identifiable spline fit")
    })?;
    Ok(OneStepResult { fit, lambda0, path })
}

pub fn fit_one_step(dataset: &Dataset, opts: &FitOptions) -> Result<VCFit> {
    Ok(one_step_search(dataset, opts)?.fit)
}

/// `r_i = y_i - sum_{j' != j} beta_j'(u_i) x_ij'` (`j` is 0-based).
pub fn residual_without(dataset: &Dataset, fit: &VCFit, j: usize) -> Result<Vec<f64>> {
    if j >= fit.p || fit.p != dataset.p() {
        return Err(Error::dims(format!(
            "predictor {j} out of range for a {}-predictor model on {} columns",
            fit.p,
            dataset.p()
        )));
    }
    let bases = fit.bases()?;
    let mut r = dataset.y.clone();
    for (jj, basis) in bases.iter().enumerate() {
        if jj == j {
            continue;
        }
        let coef = &fit.coefficients[jj];
        for (i, ri) in r.iter_mut().enumerate() {
            *ri -= basis.eval_combination(coef, dataset.u[i]) * dataset.x[(i, jj)];
        }
    }
    Ok(r)
}

#[derive(Debug, Clone)]
pub struct TwoStepReport {
    pub fit: VCFit,
    /// BIC of the starting model followed by each accepted update.
    pub bic_trace: Vec<f64>,
    /// Predictor whose knots changed at each accepted update.
    pub accepted: Vec<usize>,
    pub sweeps: usize,
}

/// Predictor-specific knots by BIC-driven single-predictor updates.
pub fn two_step_search(dataset: &Dataset, opts: &FitOptions) -> Result<TwoStepReport> {
    dataset.validate()?;
    let start = if opts.zero_init {
        let p = dataset.p();
        let n = dataset.n();
        let rss: f64 = dataset.y.iter().map(|v| v * v).sum();
        VCFit {
            degree: opts.degree,
            knots: PredictorKnots::shared(Vec::new(), p),
            boundary: dataset.u_range(),
            coefficients: vec![vec![0.0; opts.degree + 1]; p],
            rss,
            bic: bic(rss, n, 0),
            n,
            p,
        }
    } else {
        one_step_search(dataset, opts)?.fit
    };
    two_step_from(dataset, opts, start, !opts.zero_init)
}

/// Two-step updates starting from `start`. `fitted` states that `start` is the
/// least-squares fit of its own knots, so re-proposing them can be skipped.
pub fn two_step_from(
    dataset: &Dataset,
    opts: &FitOptions,
    start: VCFit,
    fitted: bool,
) -> Result<TwoStepReport> {
    dataset.validate()?;
    let boundary = dataset.u_range();
    let p = dataset.p();
    if start.p != p || start.n != dataset.n() || start.boundary != boundary {
        return Err(Error::dims("starting fit does not belong to this dataset"));
    }
    let mut current = start;
    let mut fitted = fitted;
    let mut bic_trace = vec![current.bic];
    let mut accepted = Vec::new();
    let mut sweeps = 0;

    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut best: Option<(usize, VCFit)> = None;
        for j in 0..p {
            let r = residual_without(dataset, &current, j)?;
            let sub = dataset.column_with_response(j, &r);
            let proposal = match one_step_search(&sub, opts) {
                Ok(res) => res.fit.knots.per_predictor.into_iter().next().unwrap(),
                Err(Error::InvalidInput(msg)) => {
                    debug!("predictor {j}: knot update skipped ({msg})");
                    continue;
                }
                Err(e) => return Err(e),
            };
            if fitted && proposal == current.knots.per_predictor[j] {
                continue;
            }
            let mut knots = current.knots.clone();
            knots.per_predictor[j] = proposal;
            let cand = match fit_spline_on(dataset, &knots, opts.degree, boundary) {
                Ok(f) => f,
                Err(Error::OverParameterized { .. }) => continue,
                Err(e) => return Err(e),
            };
            debug!("sweep {sweeps} predictor {j}: bic {} -> {}", current.bic, cand.bic);
            if best.as_ref().map_or(true, |(_, b)| cand.bic < b.bic) {
                best = Some((j, cand));
            }
        }
        match best {
            Some((j, cand)) if cand.bic < current.bic => {
                assert!(cand.bic < *bic_trace.last().unwrap());
                bic_trace.push(cand.bic);
                accepted.push(j);
                current = cand;
                fitted = true;
            }
            _ => break,
        }
    }
    Ok(TwoStepReport {
        fit: current,
        bic_trace,
        accepted,
        sweeps,
    })
}

pub fn fit_two_step(dataset: &Dataset, opts: &FitOptions) -> Result<VCFit> {
    Ok(two_step_search(dataset, opts)?.fit)
}
