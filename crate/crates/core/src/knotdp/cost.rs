use nalgebra::DMatrix;
use rayon::prelude::*;

use super::variance_floor;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numcore::{ols_fit, DesignMatrix};

/// Residual sum of squares of a growing least-squares problem, updated one
/// row at a time by Givens rotations into an upper-triangular factor.
#[derive(Debug, Clone)]
pub struct GivensAccumulator {
    k: usize,
    r: Vec<f64>,
    qty: Vec<f64>,
    col_scale: Vec<f64>,
    row: Vec<f64>,
    rss: f64,
    rows: usize,
}

// entries below this fraction of a column's largest magnitude are treated as
// exact cancellation when rotating a new row in
const ROW_DROP_TOL: f64 = 1e-11;

impl GivensAccumulator {
    pub fn new(k: usize) -> Self {
        GivensAccumulator {
            k,
            r: vec![0.0; k * k],
            qty: vec![0.0; k],
            col_scale: vec![0.0; k],
            row: vec![0.0; k],
            rss: 0.0,
            rows: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn rss(&self) -> f64 {
        self.rss
    }

    pub fn add_row(&mut self, z: &[f64], y: f64) {
        let k = self.k;
        self.rows += 1;
        self.row.copy_from_slice(z);
        for (s, v) in self.col_scale.iter_mut().zip(z) {
            *s = s.max(v.abs());
        }
        let mut yy = y;
        for j in 0..k {
            let xj = self.row[j];
            if xj == 0.0 || xj.abs() <= ROW_DROP_TOL * self.col_scale[j] {
                continue;
            }
            let base = j * k;
            let rjj = self.r[base + j];
            if rjj == 0.0 {
                self.r[base + j..base + k].copy_from_slice(&self.row[j..k]);
                self.qty[j] = yy;
                return;
            }
            let h = rjj.hypot(xj);
            let c = rjj / h;
            let s = xj / h;
            self.r[base + j] = h;
            for l in j + 1..k {
                let a = self.r[base + l];
                let b = self.row[l];
                self.r[base + l] = c * a + s * b;
                self.row[l] = c * b - s * a;
            }
            let a = self.qty[j];
            self.qty[j] = c * a + s * yy;
            yy = c * yy - s * a;
        }
        self.rss += yy * yy;
    }
}

/// Regressors `(x_i, u_i x_i)` of the piecewise-linear working model.
fn working_row(data: &Dataset, i: usize, out: &mut [f64]) {
    let p = data.p();
    let u = data.u[i];
    for j in 0..p {
        let x = data.x[(i, j)];
        out[j] = x;
        out[p + j] = u * x;
    }
}

/// `len * ln(max(sigma^2, var_floor))` for rows `[start, end)` of `sorted`,
/// where `sigma^2` is the ML residual variance of `y ~ (X, uX)`. Computed by a
/// direct pivoted-QR solve; the cost table uses the streaming equivalent.
pub fn segment_loss(sorted: &Dataset, start: usize, end: usize, var_floor: f64) -> Result<f64> {
    if start >= end || end > sorted.n() {
        return Err(Error::invalid(format!(
            "segment [{start}, {end}) outside 0..{}",
            sorted.n()
        )));
    }
    let p = sorted.p();
    let len = end - start;
    let mut row = vec![0.0; 2 * p];
    let mut z = DMatrix::zeros(len, 2 * p);
    for i in start..end {
        working_row(sorted, i, &mut row);
        for (c, v) in row.iter().enumerate() {
            z[(i - start, c)] = *v;
        }
    }
    let fit = ols_fit(&DesignMatrix::new(z)?, &sorted.y[start..end])?;
    Ok(len as f64 * fit.residual_variance.max(var_floor).ln())
}

/// Admissible split positions, always including `0` and `n`.
///
/// Interior positions need `min_segment` rows on either side and a strict
/// increase `u[s-1] < u[s]`, so every knot separates distinct `u` values. With
/// `grid` set, interior positions come from the `m / floor(sqrt(n))` quantiles
/// (moved forward past ties).
pub fn split_positions(sorted_u: &[f64], min_segment: usize, grid: bool) -> Vec<usize> {
    let n = sorted_u.len();
    let valid = |s: usize| s >= min_segment && s + min_segment <= n && sorted_u[s - 1] < sorted_u[s];
    let mut out = vec![0];
    if grid {
        let k = (n as f64).sqrt().floor() as usize;
        for m in 1..k {
            let mut s = m * n / k;
            while s < n && s > 0 && sorted_u[s - 1] == sorted_u[s] {
                s += 1;
            }
            if s > 0 && s < n && valid(s) && *out.last().unwrap() < s {
                out.push(s);
            }
        }
    } else {
        out.extend((1..n).filter(|&s| valid(s)));
    }
    if n > 0 {
        out.push(n);
    }
    out
}

/// Cached `l(start, end)` for every pair of split positions.
#[derive(Debug, Clone)]
pub struct SegmentCostTable {
    n: usize,
    min_segment: usize,
    positions: Vec<usize>,
    // cost of [positions[a], positions[c]) at c * (c - 1) / 2 + a, a < c
    cost: Vec<f64>,
    var_floor: f64,
}

impl SegmentCostTable {
    /// `sorted` must be ordered by `u`; `positions` as from [`split_positions`].
    pub fn build(sorted: &Dataset, min_segment: usize, positions: Vec<usize>) -> Result<Self> {
        let n = sorted.n();
        if positions.first() != Some(&0) || positions.last() != Some(&n) {
            return Err(Error::invalid("split positions must start at 0 and end at n"));
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("split positions must be strictly increasing"));
        }
        let var_floor = variance_floor(&sorted.y);
        let k = 2 * sorted.p();
        let b = positions.len();
        let columns: Vec<Vec<f64>> = (1..b)
            .into_par_iter()
            .map(|c| {
                let mut acc = GivensAccumulator::new(k);
                let mut row = vec![0.0; k];
                let mut col = vec![f64::INFINITY; c];
                let end = positions[c];
                let mut next = end;
                for a in (0..c).rev() {
                    let start = positions[a];
                    while next > start {
                        next -= 1;
                        working_row(sorted, next, &mut row);
                        acc.add_row(&row, sorted.y[next]);
                    }
                    let len = end - start;
                    if len >= min_segment {
                        let sigma2 = acc.rss() / len as f64;
                        col[a] = len as f64 * sigma2.max(var_floor).ln();
                    }
                }
                col
            })
            .collect();
        let cost = columns.into_iter().flatten().collect();
        Ok(SegmentCostTable {
            n,
            min_segment,
            positions,
            cost,
            var_floor,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn min_segment(&self) -> usize {
        self.min_segment
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn var_floor(&self) -> f64 {
        self.var_floor
    }

    /// Cost between position indices `a < c`; infinite when inadmissible.
    pub fn cost(&self, a: usize, c: usize) -> f64 {
        debug_assert!(a < c && c < self.positions.len());
        self.cost[c * (c - 1) / 2 + a]
    }

    /// Cost of rows `[start, end)` if both are split positions.
    pub fn cost_between(&self, start: usize, end: usize) -> Option<f64> {
        let a = self.positions.binary_search(&start).ok()?;
        let c = self.positions.binary_search(&end).ok()?;
        (a < c).then(|| self.cost(a, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sorted(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        u.sort_by(f64::total_cmp);
        let x = DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
        let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Dataset::new(x, u, y).unwrap()
    }

    #[test]
    fn exact_fit_is_floored() {
        let n = 10;
        let u: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let x = DMatrix::from_fn(n, 1, |i, _| 1.0 + (i % 3) as f64);
        let y: Vec<f64> = (0..n).map(|i| (2.0 - 3.0 * u[i]) * x[(i, 0)]).collect();
        let ds = Dataset::new(x, u, y).unwrap();
        let floor = variance_floor(&ds.y);
        let loss = segment_loss(&ds, 0, n, floor).unwrap();
        assert!((loss - n as f64 * floor.ln()).abs() < 1e-9);
        let table = SegmentCostTable::build(&ds, 3, vec![0, n]).unwrap();
        assert!((table.cost(0, 1) - loss).abs() < 1e-9);
    }

    #[test]
    fn simple_regression_oracle() {
        // p = 1, X = 1: regression of y on (1, u)
        let ds = random_sorted(25, 1, 17);
        let (start, end) = (3, 19);
        let us = &ds.u[start..end];
        let ys = &ds.y[start..end];
        let m = us.len() as f64;
        let mu = us.iter().sum::<f64>() / m;
        let my = ys.iter().sum::<f64>() / m;
        let sxy: f64 = us.iter().zip(ys).map(|(a, b)| (a - mu) * (b - my)).sum();
        let sxx: f64 = us.iter().map(|a| (a - mu) * (a - mu)).sum();
        let slope = sxy / sxx;
        let mse = us
            .iter()
            .zip(ys)
            .map(|(a, b)| {
                let r = b - my - slope * (a - mu);
                r * r
            })
            .sum::<f64>()
            / m;
        let expected = m * mse.ln();
        let floor = variance_floor(&ds.y);
        assert!((segment_loss(&ds, start, end, floor).unwrap() - expected).abs() < 1e-10);
        let table = SegmentCostTable::build(&ds, 5, (0..=25).collect()).unwrap();
        assert!((table.cost_between(start, end).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn streaming_matches_direct() {
        for seed in 0..5 {
            let ds = random_sorted(40, 3, seed);
            let m_s = 9;
            let table = SegmentCostTable::build(&ds, m_s, (0..=40).collect()).unwrap();
            for start in 0..40 {
                for end in start + 1..=40 {
                    let c = table.cost_between(start, end).unwrap();
                    if end - start < m_s {
                        assert!(c.is_infinite());
                    } else {
                        let d = segment_loss(&ds, start, end, table.var_floor()).unwrap();
                        assert!((c - d).abs() < 1e-9 * d.abs().max(1.0), "{start}..{end}: {c} vs {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn collinear_window_matches_direct() {
        // x2 identical to x1 on every row: rank 2 of 4 working columns
        let n = 30;
        let u: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let x = DMatrix::from_element(n, 2, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ds = Dataset::new(x, u, y).unwrap();
        let table = SegmentCostTable::build(&ds, 7, vec![0, n]).unwrap();
        let d = segment_loss(&ds, 0, n, table.var_floor()).unwrap();
        assert!((table.cost(0, 1) - d).abs() < 1e-9 * d.abs());
    }

    #[test]
    fn splitting_never_increases_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..20 {
            let ds = random_sorted(60, 2, 1000 + seed);
            let floor = variance_floor(&ds.y);
            let a = rng.random_range(0..20);
            let c = rng.random_range(a + 30..=60);
            let b = rng.random_range(a + 10..=c - 10);
            let whole = segment_loss(&ds, a, c, floor).unwrap();
            let parts = segment_loss(&ds, a, b, floor).unwrap() + segment_loss(&ds, b, c, floor).unwrap();
            assert!(whole >= parts - 1e-9, "{whole} < {parts}");
        }
    }

    #[test]
    fn split_positions_respect_ties_and_margins() {
        let u = [0.0, 1.0, 1.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(split_positions(&u, 2, false), vec![0, 4, 5, 6, 8]);
        let u: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(
            split_positions(&u, 10, true),
            vec![0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100]
        );
    }
}
