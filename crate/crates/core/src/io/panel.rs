use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Cells read as missing rather than malformed.
const MISSING_TOKENS: [&str; 5] = ["", "NA", "na", "NaN", "nan"];

/// Which header columns hold the unit id, time, response and predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMapping {
    /// `None` treats every row as one unit.
    pub unit: Option<String>,
    pub t: String,
    pub y: String,
    /// `None` takes every other column, in header order.
    pub predictors: Option<Vec<String>>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            unit: Some("unit".into()),
            t: "t".into(),
            y: "y".into(),
            predictors: None,
        }
    }
}

/// Row counts from an ingestion pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows_read: usize,
    pub kept: usize,
    /// Rows with an empty or `NA` mapped cell.
    pub dropped_missing: usize,
    /// Rows with a mapped cell that is not a finite decimal number.
    pub dropped_unparseable: usize,
}

/// Panel observations `(unit, t, y, x_1..x_p)`.
///
/// Invariants: all values finite; rows grouped by unit in order of first
/// appearance and sorted by `t` within a unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTable {
    pub unit_name: Option<String>,
    pub t_name: String,
    pub y_name: String,
    pub predictor_names: Vec<String>,
    /// Unit labels; `unit[i]` indexes into this.
    pub unit_labels: Vec<String>,
    pub unit: Vec<usize>,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    /// One vector per predictor.
    pub x: Vec<Vec<f64>>,
}

impl PanelTable {
    /// Builds a table from raw rows, sorting them into unit/time order.
    pub fn new(
        unit_name: Option<String>,
        t_name: String,
        y_name: String,
        predictor_names: Vec<String>,
        unit_labels: Vec<String>,
        unit: Vec<usize>,
        t: Vec<f64>,
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = t.len();
        if unit.len() != n || y.len() != n || x.iter().any(|c| c.len() != n) {
            return Err(Error::dims("panel columns differ in length"));
        }
        if x.len() != predictor_names.len() {
            return Err(Error::dims(format!(
                "{} predictor columns for {} names",
                x.len(),
                predictor_names.len()
            )));
        }
        if unit.iter().any(|&k| k >= unit_labels.len()) {
            return Err(Error::invalid("unit index out of range"));
        }
        let finite = t.iter().chain(&y).chain(x.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("panel contains non-finite values"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| unit[a].cmp(&unit[b]).then(t[a].total_cmp(&t[b])));
        let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        Ok(PanelTable {
            unit_name,
            t_name,
            y_name,
            predictor_names,
            unit_labels,
            unit: order.iter().map(|&i| unit[i]).collect(),
            t: pick(&t),
            y: pick(&y),
            x: x.iter().map(|c| pick(c)).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn p(&self) -> usize {
        self.x.len()
    }

    /// Row ranges `[start, end)` of each unit, in unit order.
    pub fn unit_ranges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.n() {
            if i == self.n() || self.unit[i] != self.unit[start] {
                out.push((start, i));
                start = i;
            }
        }
        out
    }

    /// Errors if some unit has two rows at the same time.
    pub fn check_unique_times(&self) -> Result<()> {
        for i in 1..self.n() {
            if self.unit[i] == self.unit[i - 1] && self.t[i] == self.t[i - 1] {
                return Err(Error::Data(format!(
                    "unit '{}' has more than one row at t = {}",
                    self.unit_labels[self.unit[i]],
                    self.t[i]
                )));
            }
        }
        Ok(())
    }

    /// Row index of `(unit, t)` for exact-time joins.
    pub fn time_index(&self) -> HashMap<(usize, u64), usize> {
        (0..self.n())
            .map(|i| ((self.unit[i], key(self.t[i])), i))
            .collect()
    }

    /// Unprocessed dataset: `x` as stored, `u = t`, individuals = units.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let x = DMatrix::from_fn(self.n(), self.p(), |i, j| self.x[j][i]);
        Dataset::new(x, self.t.clone(), self.y.clone())?.with_ids(self.unit.clone())
    }

    /// Table from a dataset; units are named by individual id (or all `0`).
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let n = ds.n();
        let ids = ds.individual_id.clone().unwrap_or_else(|| vec![0; n]);
        let n_units = ids.iter().copied().max().map_or(0, |m| m + 1);
        PanelTable::new(
            Some("unit".into()),
            "t".into(),
            "y".into(),
            (1..=ds.p()).map(|j| format!("x{j}")).collect(),
            (0..n_units).map(|k| k.to_string()).collect(),
            ids,
            ds.u.clone(),
            ds.y.clone(),
            ds.x.column_iter().map(|c| c.iter().copied().collect()).collect(),
        )
    }

    /// CSV with shortest round-trip decimal formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = Vec::new();
        if let Some(u) = &self.unit_name {
            header.push(u);
        }
        header.push(&self.t_name);
        header.push(&self.y_name);
        header.extend(self.predictor_names.iter().map(String::as_str));
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if self.unit_name.is_some() {
                rec.push(self.unit_labels[self.unit[i]].clone());
            }
            rec.push(self.t[i].to_string());
            rec.push(self.y[i].to_string());
            rec.extend(self.x.iter().map(|c| c[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Data(e.to_string()))
    }
}

pub(crate) fn key(t: f64) -> u64 {
    // +0.0 and -0.0 join as the same time
    (t + 0.0).to_bits()
}

/// Reads a panel CSV from `path`.
pub fn ingest_csv(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<(PanelTable, IngestReport)> {
    let file = std::fs::File::open(path.as_ref())?;
    ingest_reader(file, mapping)
}

/// Reads a panel CSV. Rows with a missing mapped cell are dropped; rows with
/// a malformed number are dropped and logged. A missing header or mapped
/// column is fatal.
pub fn ingest_reader<R: Read>(input: R, mapping: &ColumnMapping) -> Result<(PanelTable, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.iter().all(String::is_empty) {
        return Err(Error::Data("missing header row".into()));
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column '{name}' not in header")))
    };
    let unit_col = mapping.unit.as_deref().map(find).transpose()?;
    let t_col = find(&mapping.t)?;
    let y_col = find(&mapping.y)?;
    let predictor_names: Vec<String> = match &mapping.predictors {
        Some(names) => names.clone(),
        None => header
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != unit_col && *i != t_col && *i != y_col)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    if predictor_names.is_empty() {
        return Err(Error::Data("no predictor columns".into()));
    }
    let x_cols = predictor_names
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<usize>>>()?;

    let mut report = IngestReport::default();
    let mut labels: Vec<String> = Vec::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();
    let (mut unit, mut t, mut y) = (Vec::new(), Vec::new(), Vec::new());
    let mut x: Vec<Vec<f64>> = vec![Vec::new(); x_cols.len()];
    let numeric: Vec<usize> = [t_col, y_col].into_iter().chain(x_cols.iter().copied()).collect();

    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        report.rows_read += 1;
        let cell = |c: usize| record.get(c).map(str::trim).unwrap_or("");
        let unit_cell = unit_col.map(cell);
        if unit_cell.is_some_and(str::is_empty) || numeric.iter().any(|&c| MISSING_TOKENS.contains(&cell(c))) {
            report.dropped_missing += 1;
            continue;
        }
        let parsed: Option<Vec<f64>> = numeric
            .iter()
            .map(|&c| cell(c).parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let Some(values) = parsed else {
            log::warn!("row {}: unparseable numeric cell, row rejected", line + 2);
            report.dropped_unparseable += 1;
            continue;
        };
        let label = unit_cell.unwrap_or("0").to_string();
        let next = labels.len();
        let k = *label_index.entry(label.clone()).or_insert_with(|| {
            labels.push(label);
            next
        });
        unit.push(k);
        t.push(values[0]);
        y.push(values[1]);
        for (col, v) in x.iter_mut().zip(&values[2..]) {
            col.push(*v);
        }
    }
    report.kept = t.len();
    if report.dropped_missing > 0 {
        log::info!("dropped {} rows with missing values", report.dropped_missing);
    }
    let table = PanelTable::new(
        mapping.unit.clone(),
        mapping.t.clone(),
        mapping.y.clone(),
        predictor_names,
        labels,
        unit,
        t,
        y,
        x,
    )?;
    Ok((table, report))
}
