use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::CliError;

/// Version of the CSV layouts and sidecar format.
pub const SCHEMA_VERSION: u32 = 1;

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Empty,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            // Rust's float Display is the shortest string that round-trips.
            Cell::Float(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Empty => Ok(()),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// A CSV row with its sort key `(n, group, trial)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub key: (usize, usize, usize),
    pub cells: Vec<Cell>,
}

/// Quantiles of one metric at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub metric: String,
    pub count: usize,
    pub median: f64,
    pub p05: f64,
    pub p95: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl SummaryRow {
    pub fn from_values(n: usize, metric: &str, values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        v.sort_by(f64::total_cmp);
        SummaryRow {
            n,
            metric: metric.to_string(),
            count: v.len(),
            median: quantile(&v, 0.5),
            p05: quantile(&v, 0.05),
            p95: quantile(&v, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub header: Vec<&'static str>,
    /// Sorted by key.
    pub records: Vec<Record>,
    pub summary: Vec<SummaryRow>,
    /// Kind-specific tables that do not fit the per-record CSV.
    pub extras: serde_json::Value,
    /// Downsampled paths per `n` (converge with `write_paths`).
    pub paths: Vec<(usize, Vec<u8>)>,
}

impl ExperimentReport {
    /// Values of a float column, in record order.
    pub fn column(&self, name: &str) -> Vec<f64> {
        let Some(i) = self.header.iter().position(|h| *h == name) else {
            return Vec::new();
        };
        self.records
            .iter()
            .map(|r| match r.cells[i] {
                Cell::Float(v) => v,
                Cell::Int(v) => v as f64,
                _ => f64::NAN,
            })
            .collect()
    }

    pub fn summary_for(&self, n: usize, metric: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.n == n && s.metric == metric)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Runtime(format!("csv: {e}"));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.records {
            w.write_record(r.cells.iter().map(ToString::to_string)).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Runtime(format!("csv: {e}")))
    }

    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "version": env!("CARGO_PKG_VERSION"),
            "kind": self.config.kind,
            "seed": self.config.seed,
            "header": self.header,
            "config": self.config,
            "summary": self.summary,
            "extras": self.extras,
        })
    }
}

/// `out.csv` -> `out.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes the CSV, its JSON sidecar, and any path files.
pub fn emit(report: &ExperimentReport, out: &Path) -> Result<(), CliError> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    write_file(out, &report.to_csv()?)?;
    let mut json = serde_json::to_vec_pretty(&report.sidecar()).map_err(|e| CliError::Runtime(e.to_string()))?;
    json.push(b'\n');
    write_file(&sidecar_path(out), &json)?;
    for (n, bytes) in &report.paths {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        write_file(&out.with_file_name(format!("{stem}.paths.n{n}.csv")), bytes)?;
    }
    Ok(())
}

/// Reads the config echo back out of a sidecar and revalidates it.
pub fn load_sidecar_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_value(v["config"].clone())
        .map_err(|e| CliError::Config(format!("{}: config: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
