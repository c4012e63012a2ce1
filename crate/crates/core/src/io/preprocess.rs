use nalgebra::DMatrix;

use super::panel::{key, PanelTable};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Days in the forward rolling window of the response.
pub const ROLLING_WINDOW: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PreprocessOptions {
    /// Replace `y(t)` by the mean of `y(t), .., y(t + ROLLING_WINDOW - 1)`.
    pub rolling_mean: bool,
    /// Natural log of the (averaged) response.
    pub log_response: bool,
    /// Center and scale every predictor to mean 0, variance 1.
    pub standardize: bool,
    /// Prepend a column of ones (never standardized).
    pub intercept: bool,
}

/// Row accounting and predictor scaling from preprocessing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PreprocessReport {
    /// Rows without a complete forward window.
    pub dropped_window: usize,
    /// Rows whose response was not positive under the log transform.
    pub dropped_log: usize,
    /// Per input predictor; empty unless standardizing.
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

/// Transformed response per row, `None` where it is undefined.
///
/// The rolling window is an exact-time join on the unit's own rows at
/// `t, t + 1, .., t + 6`; a row lacking any of them has no value.
pub fn response_series(table: &PanelTable, opts: &PreprocessOptions) -> Result<(Vec<Option<f64>>, PreprocessReport)> {
    let mut report = PreprocessReport::default();
    let mut out: Vec<Option<f64>> = table.y.iter().map(|&v| Some(v)).collect();
    if opts.rolling_mean {
        table.check_unique_times()?;
        let index = table.time_index();
        for (i, slot) in out.iter_mut().enumerate() {
            let mut sum = 0.0;
            let mut complete = true;
            for d in 0..ROLLING_WINDOW {
                match index.get(&(table.unit[i], key(table.t[i] + d as f64))) {
                    Some(&r) => sum += table.y[r],
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            *slot = complete.then(|| sum / ROLLING_WINDOW as f64);
            if !complete {
                report.dropped_window += 1;
            }
        }
    }
    if opts.log_response {
        for slot in out.iter_mut() {
            if let Some(v) = *slot {
                if v > 0.0 {
                    *slot = Some(v.ln());
                } else {
                    *slot = None;
                    report.dropped_log += 1;
                }
            }
        }
        if report.dropped_log > 0 {
            log::warn!("dropped {} rows with non-positive response before log", report.dropped_log);
        }
    }
    Ok((out, report))
}

/// Dataset from the listed rows: predictors at those rows (standardized over
/// them when requested), `u = t`, and the given responses.
pub(crate) fn assemble(
    table: &PanelTable,
    rows: &[usize],
    y: Vec<f64>,
    opts: &PreprocessOptions,
    report: &mut PreprocessReport,
) -> Result<Dataset> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Data("no rows left after preprocessing".into()));
    }
    let offset = usize::from(opts.intercept);
    let mut x = DMatrix::zeros(n, table.p() + offset);
    if opts.intercept {
        x.column_mut(0).fill(1.0);
    }
    report.means.clear();
    report.sds.clear();
    for (j, col) in table.x.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
        let (mean, sd) = if opts.standardize {
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            if !(var > 0.0) {
                return Err(Error::Data(format!(
                    "predictor '{}' is constant and cannot be standardized",
                    table.predictor_names[j]
                )));
            }
            report.means.push(mean);
            report.sds.push(var.sqrt());
            (mean, var.sqrt())
        } else {
            (0.0, 1.0)
        };
        for (r, v) in vals.iter().enumerate() {
            x[(r, j + offset)] = (v - mean) / sd;
        }
    }
    let u = rows.iter().map(|&i| table.t[i]).collect();
    let ids = rows.iter().map(|&i| table.unit[i]).collect();
    Dataset::new(x, u, y)?.with_ids(ids)
}

/// Response transforms, then predictor scaling over the surviving rows.
pub fn preprocess(table: &PanelTable, opts: &PreprocessOptions) -> Result<(Dataset, PreprocessReport)> {
    let (series, mut report) = response_series(table, opts)?;
    let (rows, y): (Vec<usize>, Vec<f64>) = series
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .unzip();
    let ds = assemble(table, &rows, y, opts, &mut report)?;
    Ok((ds, report))
}

/// Pearson correlations between predictors (population moments).
pub fn predictor_correlations(table: &PanelTable) -> DMatrix<f64> {
    let n = table.n() as f64;
    let centered: Vec<Vec<f64>> = table
        .x
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let p = table.p();
    DMatrix::from_fn(p, p, |a, b| {
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
        let (ca, cb) = (&centered[a], &centered[b]);
        dot(ca, cb) / (dot(ca, ca) * dot(cb, cb)).sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_unit(y: Vec<f64>, x: Vec<Vec<f64>>) -> PanelTable {
        let n = y.len();
        PanelTable::new(
            Some("unit".into()),
            "t".into(),
            "y".into(),
            (1..=x.len()).map(|j| format!("x{j}")).collect(),
            vec!["a".into()],
            vec![0; n],
            (0..n).map(|i| i as f64).collect(),
            y,
            x,
        )
        .unwrap()
    }

    #[test]
    fn constant_response_survives_rolling_mean() {
        let t = single_unit(vec![3.0; 12], vec![(0..12).map(f64::from).collect()]);
        let opts = PreprocessOptions { rolling_mean: true, ..Default::default() };
        let (ds, rep) = preprocess(&t, &opts).unwrap();
        assert_eq!(ds.y, vec![3.0; 6]);
        assert_eq!(rep.dropped_window, 6);
    }

    #[test]
    fn rolling_mean_matches_hand_values() {
        let y = vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0];
        let t = single_unit(y, vec![vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]]);
        let opts = PreprocessOptions { rolling_mean: true, ..Default::default() };
        let (ds, _) = preprocess(&t, &opts).unwrap();
        // (1+2+..+64)/7, then each next window doubles
        assert_eq!(ds.y, vec![127.0 / 7.0, 254.0 / 7.0, 508.0 / 7.0, 1016.0 / 7.0]);
        assert_eq!(ds.u, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn gap_breaks_the_window() {
        let mut t = single_unit(vec![1.0; 9], vec![vec![0.0; 9]]);
        t.t[8] = 20.0;
        let opts = PreprocessOptions { rolling_mean: true, ..Default::default() };
        let (ds, _) = preprocess(&t, &opts).unwrap();
        assert_eq!(ds.u, vec![0.0, 1.0]);
    }

    #[test]
    fn log_drops_non_positive() {
        let t = single_unit(vec![1.0, -2.0, 0.0, std::f64::consts::E], vec![vec![1.0, 2.0, 3.0, 4.0]]);
        let opts = PreprocessOptions { log_response: true, ..Default::default() };
        let (ds, rep) = preprocess(&t, &opts).unwrap();
        assert_eq!(rep.dropped_log, 2);
        assert_eq!(ds.y, vec![0.0, 1.0]);
    }

    #[test]
    fn standardized_columns_and_untouched_intercept() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 10.0 + 3.0).collect();
        let b: Vec<f64> = (0..50).map(|i| (i * i) as f64).collect();
        let t = single_unit(vec![0.0; 50], vec![a, b]);
        let opts = PreprocessOptions { standardize: true, intercept: true, ..Default::default() };
        let (ds, rep) = preprocess(&t, &opts).unwrap();
        assert_eq!(ds.p(), 3);
        assert!(ds.x.column(0).iter().all(|&v| v == 1.0));
        for j in 1..3 {
            let c = ds.x.column(j);
            let m = c.sum() / 50.0;
            let v = c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 50.0;
            assert!(m.abs() < 1e-12, "{m}");
            assert!((v - 1.0).abs() < 1e-12, "{v}");
        }
        assert_eq!(rep.means.len(), 2);
    }

    #[test]
    fn constant_predictor_cannot_be_standardized() {
        let t = single_unit(vec![0.0; 5], vec![vec![2.0; 5]]);
        let opts = PreprocessOptions { standardize: true, ..Default::default() };
        assert!(matches!(preprocess(&t, &opts), Err(Error::Data(_))));
    }

    #[test]
    fn correlations_of_affine_copies() {
        let a: Vec<f64> = (0..20).map(|i| (i as f64).sqrt()).collect();
        let b: Vec<f64> = a.iter().map(|v| -3.0 * v + 1.0).collect();
        let c = predictor_correlations(&single_unit(vec![0.0; 20], vec![a, b]));
        assert!((c[(0, 1)] + 1.0).abs() < 1e-12);
        assert!((c[(0, 0)] - 1.0).abs() < 1e-12);
    }
}
