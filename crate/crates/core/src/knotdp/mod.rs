//! Knot selection as penalized segmentation of the `u`-ordered sample.
//!
//! Within each segment the working model is `y = a'X + b'(uX) + e`. A
//! segmentation `S` scores `sum_s |s| log(sigma_s^2) + lambda |S|` with
//! `lambda = lambda0 * ln(n)`; the optimum is found exactly by a forward
//! recursion over segment end points followed by a backtrace. Knots are the
//! midpoints between the last observation of one segment and the first of
//! the next.
//!
//! Indexing: rows are 0-based and a segment is the half-open range
//! `[start, end)`. A split position `s` is the number of rows before the
//! split, so the resulting knot is `0.5 * (u[s - 1] + u[s])`.

mod cost;
mod dp;

pub use cost::{segment_loss, split_positions, GivensAccumulator, SegmentCostTable};
pub use dp::{dp_backtrace, dp_forward, DpTables};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numcore::variance;

/// Relative floor on segment residual variance, times `var(y)`.
pub const VAR_FLOOR_FACTOR: f64 = 1e-12;
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Above this many observations `GridMode::Auto` restricts splits to the quantile grid.
pub const GRID_AUTO_THRESHOLD: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    /// Grid on for `n > GRID_AUTO_THRESHOLD`.
    #[default]
    Auto,
    On,
    Off,
}

impl GridMode {
    pub fn enabled(self, n: usize) -> bool {
        match self {
            GridMode::Auto => n > GRID_AUTO_THRESHOLD,
            GridMode::On => true,
            GridMode::Off => false,
        }
    }
}

impl std::fmt::Display for GridMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GridMode::Auto => "auto",
            GridMode::On => "on",
            GridMode::Off => "off",
        })
    }
}

impl std::str::FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(GridMode::Auto),
            "on" => Ok(GridMode::On),
            "off" => Ok(GridMode::Off),
            other => Err(Error::invalid(format!("unknown grid mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotSet {
    pub knots: Vec<f64>,
    pub lambda0: f64,
    pub alpha: f64,
    pub min_segment: usize,
}

impl KnotSet {
    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }
}

/// Smallest admissible segment: `max(ceil(n^alpha), 2p + 3)`.
pub fn min_segment_size(n: usize, p: usize, alpha: f64) -> usize {
    let by_rate = (n as f64).powf(alpha).ceil() as usize;
    by_rate.max(2 * p + 3)
}

/// Stable ascending order of `u`.
pub fn sort_permutation(u: &[f64]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..u.len()).collect();
    perm.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
    perm
}

#[derive(Debug, Clone)]
pub struct SortedData {
    pub data: Dataset,
    /// `data` row `i` is input row `perm[i]`.
    pub perm: Vec<usize>,
}

/// Stable sort of the rows by `u`; requires room for at least two segments.
pub fn order_by_u(dataset: &Dataset, min_segment: usize) -> Result<SortedData> {
    dataset.validate()?;
    if dataset.n() < 2 * min_segment {
        return Err(Error::invalid(format!(
            "{} observations cannot hold two segments of {min_segment}",
            dataset.n()
        )));
    }
    let perm = sort_permutation(&dataset.u);
    Ok(SortedData {
        data: dataset.permuted(&perm),
        perm,
    })
}

/// Cost table built once per dataset, reusable across many penalties.
#[derive(Debug, Clone)]
pub struct KnotSelector {
    sorted_u: Vec<f64>,
    table: SegmentCostTable,
    alpha: f64,
}

impl KnotSelector {
    pub fn new(dataset: &Dataset, alpha: f64, grid: GridMode) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must be in (0, 1), got {alpha}")));
        }
        let m_s = min_segment_size(dataset.n(), dataset.p(), alpha);
        let mut sel = Self::with_min_segment(dataset, m_s, grid.enabled(dataset.n()))?;
        sel.alpha = alpha;
        Ok(sel)
    }

    /// Explicit minimum segment size, bypassing the `n^alpha` rule.
    pub fn with_min_segment(dataset: &Dataset, min_segment: usize, grid: bool) -> Result<Self> {
        dataset.validate()?;
        let n = dataset.n();
        if min_segment == 0 || n < min_segment {
            return Err(Error::invalid(format!(
                "{n} observations admit no segment of size {min_segment}"
            )));
        }
        let perm = sort_permutation(&dataset.u);
        let sorted = dataset.permuted(&perm);
        let positions = split_positions(&sorted.u, min_segment, grid);
        let table = SegmentCostTable::build(&sorted, min_segment, positions)?;
        Ok(KnotSelector {
            sorted_u: sorted.u,
            table,
            alpha: f64::NAN,
        })
    }

    pub fn n(&self) -> usize {
        self.sorted_u.len()
    }

    pub fn min_segment(&self) -> usize {
        self.table.min_segment()
    }

    pub fn table(&self) -> &SegmentCostTable {
        &self.table
    }

    pub fn sorted_u(&self) -> &[f64] {
        &self.sorted_u
    }

    pub fn select(&self, lambda0: f64) -> KnotSet {
        let lambda = lambda0 * (self.n() as f64).ln();
        let tables = dp_forward(&self.table, lambda);
        KnotSet {
            knots: dp_backtrace(&self.sorted_u, &tables),
            lambda0,
            alpha: self.alpha,
            min_segment: self.table.min_segment(),
        }
    }
}

/// Penalized-DP knots for one `lambda0`.
pub fn select_knots(
    dataset: &Dataset,
    lambda0: f64,
    alpha: f64,
    grid: GridMode,
) -> Result<KnotSet> {
    if !(lambda0 > 0.0) || !lambda0.is_finite() {
        return Err(Error::invalid(format!("lambda0 must be positive, got {lambda0}")));
    }
    Ok(KnotSelector::new(dataset, alpha, grid)?.select(lambda0))
}

pub(crate) fn variance_floor(y: &[f64]) -> f64 {
    (VAR_FLOOR_FACTOR * variance(y)).max(f64::MIN_POSITIVE)
}
