use std::ops::RangeInclusive;

use super::config::FitMode;
use super::panel::{key, PanelTable};
use super::preprocess::{assemble, response_series, PreprocessOptions};
use crate::error::{Error, Result};
use crate::knotdp::min_segment_size;
use crate::vcmodel::{fit_one_step, fit_two_step, FitOptions};

/// Largest lag a scan accepts.
pub const MAX_LAG: u32 = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct LagScanOptions {
    pub preprocess: PreprocessOptions,
    pub fit: FitOptions,
    pub mode: FitMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagRow {
    pub tau: u32,
    pub n: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LagScan {
    pub rows: Vec<LagRow>,
    /// Lags with too few aligned rows to segment.
    pub skipped: Vec<u32>,
}

impl LagScan {
    /// Lag with the smallest RMSE; the earliest on ties.
    pub fn best(&self) -> Option<LagRow> {
        self.rows
            .iter()
            .copied()
            .reduce(|a, b| if b.rmse < a.rmse { b } else { a })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["tau", "n", "rmse"])?;
        for r in &self.rows {
            w.write_record([r.tau.to_string(), r.n.to_string(), r.rmse.to_string()])?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Data(e.to_string()))?)
            .map_err(|e| Error::Data(e.to_string()))
    }
}

/// For each lag `tau`, pairs predictors at `(unit, t)` with the processed
/// response at `(unit, t + tau)` by exact time, fits the model, and records
/// the residual RMSE `sqrt(rss / n)`.
pub fn lag_scan(table: &PanelTable, opts: &LagScanOptions, taus: RangeInclusive<u32>) -> Result<LagScan> {
    if *taus.end() > MAX_LAG && !taus.is_empty() {
        return Err(Error::invalid(format!("lags above {MAX_LAG} are not supported")));
    }
    if opts.mode == FitMode::Select {
        return Err(Error::invalid("lag scans fit one-step or two-step models"));
    }
    let mut scan = LagScan::default();
    if taus.is_empty() {
        return Ok(scan);
    }
    table.check_unique_times()?;
    let (series, mut report) = response_series(table, &opts.preprocess)?;
    let index = table.time_index();
    let p = table.p() + usize::from(opts.preprocess.intercept);
    for tau in taus {
        let (rows, y): (Vec<usize>, Vec<f64>) = (0..table.n())
            .filter_map(|i| {
                let target = index.get(&(table.unit[i], key(table.t[i] + f64::from(tau))))?;
                series[*target].map(|v| (i, v))
            })
            .unzip();
        let m_s = min_segment_size(rows.len(), p, opts.fit.alpha);
        if rows.len() < 2 * m_s {
            log::warn!("lag {tau}: {} aligned rows, below 2 * {m_s}; skipped", rows.len());
            scan.skipped.push(tau);
            continue;
        }
        let ds = assemble(table, &rows, y, &opts.preprocess, &mut report)?;
        let fit = match opts.mode {
            FitMode::OneStep => fit_one_step(&ds, &opts.fit)?,
            _ => fit_two_step(&ds, &opts.fit)?,
        };
        scan.rows.push(LagRow {
            tau,
            n: ds.n(),
            rmse: (fit.rss / ds.n() as f64).sqrt(),
        });
    }
    Ok(scan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::preprocess::preprocess;
    use crate::io::synth::SyntheticPanel;

    fn options(mode: FitMode) -> LagScanOptions {
        LagScanOptions {
            preprocess: PreprocessOptions {
                standardize: true,
                intercept: true,
                ..Default::default()
            },
            fit: FitOptions::default(),
            mode,
        }
    }

    #[test]
    fn lag_zero_matches_plain_fit() {
        let table = SyntheticPanel { units: 3, days: 60, ..Default::default() }.generate(1).unwrap();
        let opts = options(FitMode::OneStep);
        let scan = lag_scan(&table, &opts, 0..=0).unwrap();
        let (ds, _) = preprocess(&table, &opts.preprocess).unwrap();
        let fit = fit_one_step(&ds, &opts.fit).unwrap();
        let rmse = (fit.rss / ds.n() as f64).sqrt();
        assert_eq!(scan.rows.len(), 1);
        assert!((scan.rows[0].rmse - rmse).abs() < 1e-12);
        assert_eq!(scan.rows[0].n, table.n());
    }

    #[test]
    fn empty_range_gives_empty_table() {
        let table = SyntheticPanel::default().generate(1).unwrap();
        #[allow(clippy::reversed_empty_ranges)]
        let scan = lag_scan(&table, &options(FitMode::OneStep), 5..=4).unwrap();
        assert!(scan.rows.is_empty() && scan.skipped.is_empty());
        assert_eq!(scan.to_csv().unwrap(), "tau,n,rmse\n");
    }

    #[test]
    fn planted_lag_recovered() {
        let table = SyntheticPanel::default().generate(11).unwrap();
        let scan = lag_scan(&table, &options(FitMode::OneStep), 0..=6).unwrap();
        assert_eq!(scan.best().unwrap().tau, 3);
        // each lag loses one day per unit
        assert_eq!(scan.rows[2].n, table.n() - 2 * 7);
    }

    #[test]
    fn lags_beyond_the_data_are_skipped() {
        let table = SyntheticPanel { units: 1, days: 40, ..Default::default() }.generate(2).unwrap();
        let scan = lag_scan(&table, &options(FitMode::OneStep), 35..=36).unwrap();
        assert!(scan.rows.is_empty());
        assert_eq!(scan.skipped, vec![35, 36]);
    }

    #[test]
    fn rejects_selection_mode_and_long_lags() {
        let table = SyntheticPanel::default().generate(1).unwrap();
        assert!(lag_scan(&table, &options(FitMode::Select), 0..=1).is_err());
        assert!(lag_scan(&table, &options(FitMode::OneStep), 0..=61).is_err());
    }
}
