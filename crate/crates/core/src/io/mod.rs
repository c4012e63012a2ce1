//! Panel CSV ingestion, preprocessing, lag scans and run configuration.
//!
//! Input files have a header row and columns `unit,t,y,x1..xp` by default;
//! any of them can be remapped. Numbers are written with the shortest
//! decimal form that parses back to the same double, so export followed by
//! ingestion is lossless.

mod config;
mod lagscan;
mod panel;
mod preprocess;
mod synth;

pub use config::{FitMode, GridSpec, RunConfig};
pub use lagscan::{lag_scan, LagRow, LagScan, LagScanOptions, MAX_LAG};
pub use panel::{ingest_csv, ingest_reader, ColumnMapping, IngestReport, PanelTable};
pub use preprocess::{
    predictor_correlations, preprocess, response_series, PreprocessOptions, PreprocessReport,
    ROLLING_WINDOW,
};
pub use synth::SyntheticPanel;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a temporary file beside `path`, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
