use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{ErrorProcess, LongitudinalDesign};
use super::generators::{simulate_tang, simulate_wei};
use super::metrics::mse_beta;
use super::replicate_seed;
use crate::error::{Error, Result};
use crate::knotdp::GridMode;
use crate::sparsesel::{select_variables, select_with_knots, SelectOptions, Selection};
use crate::vcmodel::{one_step_search, two_step_from, FitOptions, PredictorKnots};

/// Knot counts tried by the equidistant baseline.
pub const EQUIDISTANT_MAX_KNOTS: usize = 10;

fn grid_fit_options() -> FitOptions {
    FitOptions {
        grid: GridMode::On,
        ..FitOptions::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Config {
    pub reps: usize,
    /// Individuals per replicate.
    pub n: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Table1Config {
    /// Quantile-grid knot candidates, other settings at their defaults.
    pub fn new(reps: usize, n: usize, seed: u64) -> Self {
        Table1Config {
            reps,
            n,
            seed,
            fit: grid_fit_options(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Replicate {
    pub rep: usize,
    pub seed: u64,
    pub observations: usize,
    pub one_step_mse: Vec<f64>,
    pub two_step_mse: Vec<f64>,
    /// Shared knot count of the one-step fit.
    pub one_step_knots: usize,
    pub two_step_knots: Vec<usize>,
}

/// Mean and sample standard deviation per coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl MethodSummary {
    fn from_rows(rows: &[&[f64]]) -> Self {
        let p = rows.first().map_or(0, |r| r.len());
        let m = rows.len() as f64;
        let mean: Vec<f64> = (0..p)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m)
            .collect();
        let sd = (0..p)
            .map(|j| {
                if rows.len() < 2 {
                    return 0.0;
                }
                let ss: f64 = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum();
                (ss / (m - 1.0)).sqrt()
            })
            .collect();
        MethodSummary { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Summary {
    pub reps: usize,
    pub n: usize,
    pub one_step: MethodSummary,
    pub two_step: MethodSummary,
    pub one_step_knots_mean: f64,
    pub two_step_knots_mean: Vec<f64>,
    pub replicates: Vec<Table1Replicate>,
}

fn run_table1_replicate(cfg: &Table1Config, rep: usize) -> Result<Table1Replicate> {
    let seed = replicate_seed(cfg.seed, rep as u64);
    let sim = simulate_tang(
        &LongitudinalDesign::tang(cfg.n),
        &ErrorProcess::default(),
        seed,
    )?;
    let ds = &sim.dataset;
    let one = one_step_search(ds, &cfg.fit)?.fit;
    let two = two_step_from(ds, &cfg.fit, one.clone(), true)?.fit;
    Ok(Table1Replicate {
        rep,
        seed,
        observations: ds.n(),
        one_step_mse: mse_beta(&one, sim.truth, &ds.u)?,
        two_step_mse: mse_beta(&two, sim.truth, &ds.u)?,
        one_step_knots: one.knots.per_predictor[0].len(),
        two_step_knots: two.knots.counts(),
    })
}

/// Replicated one-step versus two-step coefficient errors on the four-predictor design.
pub fn run_table1(cfg: &Table1Config) -> Result<Table1Summary> {
    if cfg.reps == 0 {
        return Err(Error::invalid("at least one replicate is required"));
    }
    let replicates = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_table1_replicate(cfg, rep))
        .collect::<Result<Vec<_>>>()?;
    let one: Vec<&[f64]> = replicates.iter().map(|r| r.one_step_mse.as_slice()).collect();
    let two: Vec<&[f64]> = replicates.iter().map(|r| r.two_step_mse.as_slice()).collect();
    let m = replicates.len() as f64;
    let p = replicates[0].two_step_knots.len();
    Ok(Table1Summary {
        reps: cfg.reps,
        n: cfg.n,
        one_step: MethodSummary::from_rows(&one),
        two_step: MethodSummary::from_rows(&two),
        one_step_knots_mean: replicates.iter().map(|r| r.one_step_knots as f64).sum::<f64>() / m,
        two_step_knots_mean: (0..p)
            .map(|j| replicates.iter().map(|r| r.two_step_knots[j] as f64).sum::<f64>() / m)
            .collect(),
        replicates,
    })
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w)?;
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Data(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

impl Table1Summary {
    /// One row per method: MSE means and sds (times 100) and mean knot counts.
    pub fn summary_csv(&self) -> Result<String> {
        let p = self.one_step.mean.len();
        csv_string(|w| {
            let mut header = vec!["method".to_string()];
            header.extend((1..=p).map(|j| format!("mse{j}_x100")));
            header.extend((1..=p).map(|j| format!("sd{j}_x100")));
            header.extend((1..=p).map(|j| format!("knots{j}")));
            w.write_record(&header)?;
            let rows = [
                ("one-step", &self.one_step, vec![self.one_step_knots_mean; p]),
                ("two-step", &self.two_step, self.two_step_knots_mean.clone()),
            ];
            for (name, s, knots) in rows {
                let mut rec = vec![name.to_string()];
                rec.extend(s.mean.iter().map(|v| (v * 100.0).to_string()));
                rec.extend(s.sd.iter().map(|v| (v * 100.0).to_string()));
                rec.extend(knots.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
            Ok(())
        })
    }

    /// One row per replicate and method.
    pub fn raw_csv(&self) -> Result<String> {
        let p = self.one_step.mean.len();
        csv_string(|w| {
            let mut header: Vec<String> = ["rep", "seed", "observations", "method"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            header.extend((1..=p).map(|j| format!("mse{j}")));
            header.extend((1..=p).map(|j| format!("knots{j}")));
            w.write_record(&header)?;
            for r in &self.replicates {
                let methods = [
                    ("one-step", &r.one_step_mse, vec![r.one_step_knots; p]),
                    ("two-step", &r.two_step_mse, r.two_step_knots.clone()),
                ];
                for (name, mse, knots) in methods {
                    let mut rec = vec![
                        r.rep.to_string(),
                        r.seed.to_string(),
                        r.observations.to_string(),
                        name.to_string(),
                    ];
                    rec.extend(mse.iter().map(f64::to_string));
                    rec.extend(knots.iter().map(usize::to_string));
                    w.write_record(&rec)?;
                }
            }
            Ok(())
        })
    }
}

/// How the selection pipeline obtains its knots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnotStrategy {
    /// Per-predictor knots from marginal one-step fits.
    #[default]
    Adaptive,
    /// `L` shared knots at the `m / (L + 1)` quantiles of `u`, `L` chosen by BIC.
    Equidistant,
}

impl std::str::FromStr for KnotStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(KnotStrategy::Adaptive),
            "equidistant" => Ok(KnotStrategy::Equidistant),
            other => Err(Error::invalid(format!("unknown knot strategy '{other}'"))),
        }
    }
}

impl std::fmt::Display for KnotStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KnotStrategy::Adaptive => "adaptive",
            KnotStrategy::Equidistant => "equidistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Config {
    pub reps: usize,
    /// Individuals per replicate, one summary row each.
    pub n_list: Vec<usize>,
    pub seed: u64,
    pub strategy: KnotStrategy,
    pub select: SelectOptions,
}

impl Table2Config {
    pub fn new(reps: usize, n_list: Vec<usize>, seed: u64) -> Self {
        Table2Config {
            reps,
            n_list,
            seed,
            strategy: KnotStrategy::Adaptive,
            select: SelectOptions {
                fit: grid_fit_options(),
                ..SelectOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Replicate {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub selected: usize,
    pub false_negatives: usize,
    pub false_positives: usize,
}

impl Table2Replicate {
    pub fn exact(&self) -> bool {
        self.false_negatives == 0 && self.false_positives == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub n: usize,
    pub reps: usize,
    pub selected_mean: f64,
    pub no_false_negative_pct: f64,
    pub exact_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Summary {
    pub strategy: KnotStrategy,
    pub rows: Vec<Table2Row>,
    pub replicates: Vec<Table2Replicate>,
}

/// Value at probability `q` of ascending `sorted` (linear interpolation).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `L` knots at the `m / (L + 1)` quantiles of `u`.
pub fn equidistant_knots(u: &[f64], count: usize) -> Vec<f64> {
    let mut sorted = u.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut knots: Vec<f64> = (1..=count)
        .map(|m| quantile(&sorted, m as f64 / (count + 1) as f64))
        .collect();
    knots.dedup();
    knots
}

/// Selection with shared equidistant knots, the knot count chosen by final BIC.
pub fn select_equidistant(
    dataset: &crate::data::Dataset,
    opts: &SelectOptions,
) -> Result<Selection> {
    let mut best: Option<Selection> = None;
    for count in 1..=EQUIDISTANT_MAX_KNOTS {
        let knots = PredictorKnots::shared(equidistant_knots(&dataset.u, count), dataset.p());
        let sel = select_with_knots(dataset, &knots, opts)?;
        if best.as_ref().is_none_or(|b| sel.report.bic < b.report.bic) {
            best = Some(sel);
        }
    }
    Ok(best.expect("at least one knot count"))
}

fn run_table2_replicate(cfg: &Table2Config, n: usize, rep: usize) -> Result<Table2Replicate> {
    let seed = replicate_seed(cfg.seed, rep as u64);
    let sim = simulate_wei(&LongitudinalDesign::wei(n), &ErrorProcess::default(), seed)?;
    let sel = match cfg.strategy {
        KnotStrategy::Adaptive => select_variables(&sim.dataset, &cfg.select)?,
        KnotStrategy::Equidistant => select_equidistant(&sim.dataset, &cfg.select)?,
    };
    let truth = sim.truth.active();
    let active = &sel.report.active;
    Ok(Table2Replicate {
        n,
        rep,
        seed,
        selected: active.len(),
        false_negatives: truth.iter().filter(|j| !active.contains(j)).count(),
        false_positives: active.iter().filter(|j| !truth.contains(j)).count(),
    })
}

/// Replicated variable selection on the 500-predictor design.
pub fn run_table2(cfg: &Table2Config) -> Result<Table2Summary> {
    if cfg.reps == 0 {
        return Err(Error::invalid("at least one replicate is required"));
    }
    if cfg.n_list.is_empty() {
        return Err(Error::invalid("no sample sizes given"));
    }
    let mut rows = Vec::new();
    let mut replicates = Vec::new();
    for &n in &cfg.n_list {
        let reps = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| run_table2_replicate(cfg, n, rep))
            .collect::<Result<Vec<_>>>()?;
        let m = reps.len() as f64;
        rows.push(Table2Row {
            n,
            reps: reps.len(),
            selected_mean: reps.iter().map(|r| r.selected as f64).sum::<f64>() / m,
            no_false_negative_pct: 100.0
                * reps.iter().filter(|r| r.false_negatives == 0).count() as f64
                / m,
            exact_pct: 100.0 * reps.iter().filter(|r| r.exact()).count() as f64 / m,
        });
        replicates.extend(reps);
    }
    Ok(Table2Summary {
        strategy: cfg.strategy,
        rows,
        replicates,
    })
}

impl Table2Summary {
    pub fn summary_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record([
                "knots",
                "n",
                "reps",
                "selected_mean",
                "no_false_negative_pct",
                "exact_pct",
            ])?;
            for r in &self.rows {
                w.write_record([
                    self.strategy.to_string(),
                    r.n.to_string(),
                    r.reps.to_string(),
                    r.selected_mean.to_string(),
                    r.no_false_negative_pct.to_string(),
                    r.exact_pct.to_string(),
                ])?;
            }
            Ok(())
        })
    }

    pub fn raw_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record([
                "n",
                "rep",
                "seed",
                "selected",
                "false_negatives",
                "false_positives",
                "exact",
            ])?;
            for r in &self.replicates {
                w.write_record([
                    r.n.to_string(),
                    r.rep.to_string(),
                    r.seed.to_string(),
                    r.selected.to_string(),
                    r.false_negatives.to_string(),
                    r.false_positives.to_string(),
                    r.exact().to_string(),
                ])?;
            }
            Ok(())
        })
    }
}
