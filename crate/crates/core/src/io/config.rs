use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::lagscan::MAX_LAG;
use super::panel::ColumnMapping;
use super::preprocess::PreprocessOptions;
use crate::error::{Error, Result};
use crate::knotdp::{GridMode, DEFAULT_ALPHA};
use crate::numcore::log_grid;
use crate::sparsesel::SelectOptions;
use crate::vcmodel::{FitOptions, DEFAULT_DEGREE, DEFAULT_MAX_SWEEPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMode {
    OneStep,
    #[default]
    TwoStep,
    Select,
}

impl FromStr for FitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-step" => Ok(FitMode::OneStep),
            "two-step" => Ok(FitMode::TwoStep),
            "select" => Ok(FitMode::Select),
            other => Err(Error::invalid(format!("unknown mode '{other}'"))),
        }
    }
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMode::OneStep => "one-step",
            FitMode::TwoStep => "two-step",
            FitMode::Select => "select",
        })
    }
}

/// `points` log-spaced values on `[lo, hi]`, written `lo:hi:points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        log_grid(self.lo, self.hi, self.points)
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let bad = || Error::invalid(format!("grid '{s}' is not lo:hi:points"));
        let [lo, hi, points] = parts.as_slice() else {
            return Err(bad());
        };
        let spec = GridSpec {
            lo: lo.parse().map_err(|_| bad())?,
            hi: hi.parse().map_err(|_| bad())?,
            points: points.parse().map_err(|_| bad())?,
        };
        if !(spec.lo > 0.0 && spec.lo <= spec.hi && spec.hi.is_finite()) || spec.points == 0 {
            return Err(Error::invalid(format!(
                "grid '{s}' needs 0 < lo <= hi and at least one point"
            )));
        }
        Ok(spec)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.points)
    }
}

/// Settings shared by the command-line tools.
///
/// Text form: one `key = value` per line, `#` starts a comment. Keys match
/// the long flag names with `-` replaced by `_`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub degree: usize,
    pub alpha: f64,
    pub lambda0: GridSpec,
    pub grid: GridMode,
    pub max_sweeps: usize,
    pub zero_init: bool,
    /// Points of the group-lasso penalty grids.
    pub penalty_points: usize,
    /// Relative lower end of the group-lasso penalty grids.
    pub penalty_min_ratio: f64,
    pub mode: FitMode,
    pub standardize: bool,
    pub intercept: bool,
    pub rolling_mean: bool,
    pub log_response: bool,
    pub lag_min: u32,
    pub lag_max: u32,
    pub seed: Option<u64>,
    pub col_unit: Option<String>,
    pub col_t: String,
    pub col_y: String,
    pub predictors: Option<Vec<String>>,
    pub out: Option<PathBuf>,
    pub curves: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mapping = ColumnMapping::default();
        let select = SelectOptions::default();
        RunConfig {
            degree: DEFAULT_DEGREE,
            alpha: DEFAULT_ALPHA,
            lambda0: GridSpec { lo: 0.01, hi: 100.0, points: 25 },
            grid: GridMode::Auto,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            zero_init: false,
            penalty_points: select.path_points,
            penalty_min_ratio: select.min_ratio,
            mode: FitMode::default(),
            standardize: false,
            intercept: false,
            rolling_mean: false,
            log_response: false,
            lag_min: 0,
            lag_max: 21,
            seed: None,
            col_unit: mapping.unit,
            col_t: mapping.t,
            col_y: mapping.y,
            predictors: None,
            out: None,
            curves: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::invalid(format!("bad value '{value}' for '{key}'"))),
    }
}

fn optional(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "degree" => self.degree = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "lambda0" => self.lambda0 = value.parse()?,
            "grid" => self.grid = value.parse()?,
            "max_sweeps" => self.max_sweeps = parse(key, value)?,
            "zero_init" => self.zero_init = parse_bool(key, value)?,
            "penalty_points" => self.penalty_points = parse(key, value)?,
            "penalty_min_ratio" => self.penalty_min_ratio = parse(key, value)?,
            "mode" => self.mode = value.parse()?,
            "standardize" => self.standardize = parse_bool(key, value)?,
            "intercept" => self.intercept = parse_bool(key, value)?,
            "rolling_mean" => self.rolling_mean = parse_bool(key, value)?,
            "log_response" => self.log_response = parse_bool(key, value)?,
            "lag_min" => self.lag_min = parse(key, value)?,
            "lag_max" => self.lag_max = parse(key, value)?,
            "seed" => self.seed = Some(parse(key, value)?),
            "col_unit" => self.col_unit = optional(value),
            "col_t" => self.col_t = value.to_string(),
            "col_y" => self.col_y = value.to_string(),
            "predictors" => {
                self.predictors = optional(value)
                    .map(|v| v.split(',').map(|s| s.trim().to_string()).collect())
            }
            "out" => self.out = optional(value).map(PathBuf::from),
            "curves" => self.curves = optional(value).map(PathBuf::from),
            other => return Err(Error::invalid(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected key = value", no + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.merge_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        RunConfig::from_text(&std::fs::read_to_string(path)?)
    }

    /// Text form that `from_text` reads back to an equal config.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("degree = {}", self.degree),
            format!("alpha = {}", self.alpha),
            format!("lambda0 = {}", self.lambda0),
            format!("grid = {}", self.grid),
            format!("max_sweeps = {}", self.max_sweeps),
            format!("zero_init = {}", self.zero_init),
            format!("penalty_points = {}", self.penalty_points),
            format!("penalty_min_ratio = {}", self.penalty_min_ratio),
            format!("mode = {}", self.mode),
            format!("standardize = {}", self.standardize),
            format!("intercept = {}", self.intercept),
            format!("rolling_mean = {}", self.rolling_mean),
            format!("log_response = {}", self.log_response),
            format!("lag_min = {}", self.lag_min),
            format!("lag_max = {}", self.lag_max),
            format!("col_unit = {}", self.col_unit.as_deref().unwrap_or("")),
            format!("col_t = {}", self.col_t),
            format!("col_y = {}", self.col_y),
            format!("predictors = {}", self.predictors.as_ref().map(|p| p.join(",")).unwrap_or_default()),
            format!("out = {}", self.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            format!("curves = {}", self.curves.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
        ];
        if let Some(seed) = self.seed {
            lines.push(format!("seed = {seed}"));
        }
        lines.join("\n") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree > crate::numcore::MAX_DEGREE {
            return Err(Error::invalid(format!("degree {} unsupported", self.degree)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must lie in (0, 1)"));
        }
        if self.penalty_points == 0 {
            return Err(Error::invalid("penalty grids need at least one point"));
        }
        if !(self.penalty_min_ratio > 0.0 && self.penalty_min_ratio <= 1.0) {
            return Err(Error::invalid("penalty_min_ratio must lie in (0, 1]"));
        }
        if self.lag_max > MAX_LAG {
            return Err(Error::invalid(format!("lag_max above {MAX_LAG}")));
        }
        Ok(())
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            degree: self.degree,
            lambda0_grid: self.lambda0.values(),
            alpha: self.alpha,
            grid: self.grid,
            max_sweeps: self.max_sweeps,
            zero_init: self.zero_init,
        }
    }

    pub fn select_options(&self) -> SelectOptions {
        SelectOptions {
            fit: self.fit_options(),
            path_points: self.penalty_points,
            min_ratio: self.penalty_min_ratio,
            ..SelectOptions::default()
        }
    }

    pub fn preprocess_options(&self) -> PreprocessOptions {
        PreprocessOptions {
            rolling_mean: self.rolling_mean,
            log_response: self.log_response,
            standardize: self.standardize,
            intercept: self.intercept,
        }
    }

    pub fn column_mapping(&self) -> ColumnMapping {
        ColumnMapping {
            unit: self.col_unit.clone(),
            t: self.col_t.clone(),
            y: self.col_y.clone(),
            predictors: self.predictors.clone(),
        }
    }
}
