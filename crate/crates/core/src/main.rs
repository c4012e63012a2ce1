use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vcspline::io::{
    ingest_csv, lag_scan, predictor_correlations, preprocess, write_atomic, FitMode, LagScanOptions,
    PanelTable, RunConfig, SyntheticPanel,
};
use vcspline::simbench::{
    run_table1, run_table2, simulate_tang, simulate_wei, ErrorProcess, KnotStrategy,
    LongitudinalDesign, Table1Config, Table2Config,
};
use vcspline::sparsesel::select_variables;
use vcspline::vcmodel::{eval_coefficients, fit_one_step, fit_two_step, predict, VCFit, CURVE_GRID_POINTS};
use vcspline::Error;

/// Varying-coefficient regression with adaptively selected spline knots.
#[derive(Parser, Debug)]
#[command(name = "vcspline", version, about)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a simulated longitudinal dataset as CSV.
    Simulate {
        design: Design,
        /// Number of individuals.
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit a one-step or two-step model; writes model JSON and coefficient curves.
    Fit {
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Predict responses for a CSV from a saved model.
    Predict {
        input: PathBuf,
        /// Model JSON written by `fit`.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Select predictors with the two-stage group lasso; writes selection JSON.
    Select {
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a simulation benchmark; writes a summary CSV.
    Bench {
        table: BenchTable,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Individuals per replicate; a comma-separated list for table2
        /// (default 200 for table1, 50,100 for table2).
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        /// Knot strategy for table2.
        #[arg(long, default_value = "adaptive")]
        knots: String,
        /// Per-replicate CSV.
        #[arg(long)]
        raw: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Residual RMSE of lagged fits (response at t + tau on predictors at t).
    Lagscan {
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Pearson correlations between the predictors of a CSV.
    Correlate {
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate a synthetic daily panel with a planted response lag.
    Panel {
        #[arg(long, default_value_t = 7)]
        units: usize,
        #[arg(long, default_value_t = 120)]
        days: usize,
        /// Number of predictor series.
        #[arg(long, default_value_t = 3)]
        n_predictors: usize,
        #[arg(long, default_value_t = 3)]
        lag: u32,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Design {
    Tang,
    Wei,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BenchTable {
    Table1,
    Table2,
}

/// Settings shared by all commands; each overrides the same key of `--config`.
#[derive(Args, Debug, Default)]
struct RunArgs {
    /// File of `key = value` lines; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Coefficient-curve CSV for `fit` (default: beside `--out`).
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    /// Spline degree.
    #[arg(long)]
    degree: Option<String>,
    /// Minimum segment exponent: segments hold at least n^alpha rows.
    #[arg(long)]
    alpha: Option<String>,
    /// Segmentation penalty grid `lo:hi:points` (log-spaced).
    #[arg(long)]
    lambda0: Option<String>,
    /// Knot candidates: auto, on (quantile grid) or off (every gap).
    #[arg(long)]
    grid: Option<String>,
    /// Maximum sweeps of the two-step search.
    #[arg(long)]
    max_sweeps: Option<String>,
    /// Start the two-step search from the zero model.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    zero_init: Option<String>,
    /// Points of the group-lasso penalty grids.
    #[arg(long)]
    penalty_points: Option<String>,
    /// Relative lower end of the group-lasso penalty grids.
    #[arg(long)]
    penalty_min_ratio: Option<String>,
    /// one-step or two-step.
    #[arg(long)]
    mode: Option<String>,
    /// Center and scale predictors to mean 0, variance 1.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    standardize: Option<String>,
    /// Prepend a column of ones.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    intercept: Option<String>,
    /// Replace the response by its forward 7-day mean.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    rolling_mean: Option<String>,
    /// Take the natural log of the response.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    log_response: Option<String>,
    #[arg(long)]
    lag_min: Option<String>,
    #[arg(long)]
    lag_max: Option<String>,
    /// Unit id column; empty for a single unit.
    #[arg(long)]
    col_unit: Option<String>,
    #[arg(long)]
    col_t: Option<String>,
    #[arg(long)]
    col_y: Option<String>,
    /// Comma-separated predictor columns (default: all other columns).
    #[arg(long)]
    predictors: Option<String>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let paths = [("out", &self.out), ("curves", &self.curves)];
        for (key, value) in paths {
            if let Some(v) = value {
                cfg.set(key, &v.display().to_string())?;
            }
        }
        let values = [
            ("seed", &self.seed),
            ("degree", &self.degree),
            ("alpha", &self.alpha),
            ("lambda0", &self.lambda0),
            ("grid", &self.grid),
            ("max_sweeps", &self.max_sweeps),
            ("zero_init", &self.zero_init),
            ("penalty_points", &self.penalty_points),
            ("penalty_min_ratio", &self.penalty_min_ratio),
            ("mode", &self.mode),
            ("standardize", &self.standardize),
            ("intercept", &self.intercept),
            ("rolling_mean", &self.rolling_mean),
            ("log_response", &self.log_response),
            ("lag_min", &self.lag_min),
            ("lag_max", &self.lag_max),
            ("col_unit", &self.col_unit),
            ("col_t", &self.col_t),
            ("col_y", &self.col_y),
            ("predictors", &self.predictors),
        ];
        for (key, value) in values {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn require_seed(cfg: &RunConfig) -> Result<u64, Failure> {
    cfg.seed
        .ok_or_else(|| Failure::Usage("--seed is required for this command".into()))
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_table(input: &Path, cfg: &RunConfig) -> Result<PanelTable, Failure> {
    let (table, report) = ingest_csv(input, &cfg.column_mapping())?;
    if report.dropped_missing + report.dropped_unparseable > 0 {
        eprintln!(
            "read {} rows, kept {} ({} missing, {} unparseable)",
            report.rows_read, report.kept, report.dropped_missing, report.dropped_unparseable
        );
    }
    Ok(table)
}

/// Column names of the model's predictors, intercept first when added.
fn predictor_labels(table: &PanelTable, cfg: &RunConfig) -> Vec<String> {
    let mut names = Vec::new();
    if cfg.intercept {
        names.push("intercept".to_string());
    }
    names.extend(table.predictor_names.iter().cloned());
    names
}

fn curves_csv(fit: &VCFit, names: &[String]) -> Result<String, Error> {
    let grid = fit.curve_grid(CURVE_GRID_POINTS);
    let betas = eval_coefficients(fit, &grid)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["u".to_string()];
    header.extend(names.iter().map(|n| format!("beta_{n}")));
    w.write_record(&header)?;
    for (i, u) in grid.iter().enumerate() {
        let mut rec = vec![u.to_string()];
        rec.extend(betas.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

fn default_curves_path(out: &Path) -> PathBuf {
    out.with_extension("curves.csv")
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { design, n, run } => {
            let cfg = run.config().map_err(usage)?;
            let seed = require_seed(&cfg)?;
            let errors = ErrorProcess::default();
            let sim = match design {
                Design::Tang => simulate_tang(&LongitudinalDesign::tang(n), &errors, seed),
                Design::Wei => simulate_wei(&LongitudinalDesign::wei(n), &errors, seed),
            }
            .map_err(usage)?;
            let table = PanelTable::from_dataset(&sim.dataset)?;
            emit(cfg.out.as_deref(), &table.to_csv_string()?)
        }
        Command::Fit { input, run } => {
            let cfg = run.config().map_err(usage)?;
            let table = load_table(&input, &cfg)?;
            let (ds, _) = preprocess(&table, &cfg.preprocess_options())?;
            let fit = match cfg.mode {
                FitMode::OneStep => fit_one_step(&ds, &cfg.fit_options())?,
                FitMode::TwoStep => fit_two_step(&ds, &cfg.fit_options())?,
                FitMode::Select => {
                    return Err(Failure::Usage("use the `select` command for selection".into()))
                }
            };
            emit(cfg.out.as_deref(), &(fit.to_json()? + "\n"))?;
            let curves = cfg.curves.clone().or_else(|| cfg.out.as_deref().map(default_curves_path));
            if let Some(path) = curves {
                write_atomic(path, curves_csv(&fit, &predictor_labels(&table, &cfg))?.as_bytes())?;
            }
            Ok(())
        }
        Command::Predict { input, model, run } => {
            let cfg = run.config().map_err(usage)?;
            let fit = VCFit::from_json(&std::fs::read_to_string(&model).map_err(Error::from)?)?;
            let table = load_table(&input, &cfg)?;
            let (ds, _) = preprocess(&table, &cfg.preprocess_options())?;
            let yhat = predict(&fit, &ds.x, &ds.u)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["unit", "t", "y", "fitted"]).map_err(Error::from)?;
            let ids = ds.individual_id.clone().unwrap_or_default();
            for i in 0..ds.n() {
                w.write_record([
                    table.unit_labels[ids[i]].clone(),
                    ds.u[i].to_string(),
                    ds.y[i].to_string(),
                    yhat[i].to_string(),
                ])
                .map_err(Error::from)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
            emit(cfg.out.as_deref(), &String::from_utf8_lossy(&bytes))
        }
        Command::Select { input, run } => {
            let cfg = run.config().map_err(usage)?;
            let table = load_table(&input, &cfg)?;
            let (ds, _) = preprocess(&table, &cfg.preprocess_options())?;
            let sel = select_variables(&ds, &cfg.select_options())?;
            emit(cfg.out.as_deref(), &(sel.report.to_json()? + "\n"))
        }
        Command::Bench { table, reps, n, knots, raw, run } => {
            let cfg = run.config().map_err(usage)?;
            let seed = require_seed(&cfg)?;
            if reps == 0 || n.contains(&0) {
                return Err(Failure::Usage("--reps and --n must be positive".into()));
            }
            let (summary, raw_text) = match table {
                BenchTable::Table1 => {
                    let n = match n.as_slice() {
                        [] => 200,
                        [one] => *one,
                        _ => return Err(Failure::Usage("table1 takes a single --n".into())),
                    };
                    let s = run_table1(&Table1Config::new(reps, n, seed))?;
                    (s.summary_csv()?, s.raw_csv()?)
                }
                BenchTable::Table2 => {
                    let n = if n.is_empty() { vec![50, 100] } else { n };
                    let mut bench = Table2Config::new(reps, n, seed);
                    bench.strategy = knots.parse::<KnotStrategy>().map_err(usage)?;
                    let s = run_table2(&bench)?;
                    (s.summary_csv()?, s.raw_csv()?)
                }
            };
            if let Some(path) = raw {
                write_atomic(path, raw_text.as_bytes())?;
            }
            emit(cfg.out.as_deref(), &summary)
        }
        Command::Lagscan { input, run } => {
            let cfg = run.config().map_err(usage)?;
            if cfg.mode == FitMode::Select {
                return Err(Failure::Usage("lagscan fits one-step or two-step models".into()));
            }
            let table = load_table(&input, &cfg)?;
            let opts = LagScanOptions {
                preprocess: cfg.preprocess_options(),
                fit: cfg.fit_options(),
                mode: cfg.mode,
            };
            let scan = lag_scan(&table, &opts, cfg.lag_min..=cfg.lag_max)?;
            for tau in &scan.skipped {
                eprintln!("lag {tau} skipped: too few aligned rows");
            }
            emit(cfg.out.as_deref(), &scan.to_csv()?)
        }
        Command::Correlate { input, run } => {
            let cfg = run.config().map_err(usage)?;
            let table = load_table(&input, &cfg)?;
            let c = predictor_correlations(&table);
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec![String::new()];
            header.extend(table.predictor_names.iter().cloned());
            w.write_record(&header).map_err(Error::from)?;
            for (a, name) in table.predictor_names.iter().enumerate() {
                let mut rec = vec![name.clone()];
                rec.extend(c.row(a).iter().map(|v| v.to_string()));
                w.write_record(&rec).map_err(Error::from)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
            emit(cfg.out.as_deref(), &String::from_utf8_lossy(&bytes))
        }
        Command::Panel { units, days, n_predictors, lag, run } => {
            let cfg = run.config().map_err(usage)?;
            let seed = require_seed(&cfg)?;
            let panel = SyntheticPanel { units, days, predictors: n_predictors, lag, ..SyntheticPanel::default() };
            let table = panel.generate(seed).map_err(usage)?;
            emit(cfg.out.as_deref(), &table.to_csv_string()?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
