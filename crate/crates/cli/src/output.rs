//! Run artifacts: the `summary.json` record and deterministic CSV tables.

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Outcome of one experiment run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
        }
    }
}

/// What a runner hands back: verdict, headline metrics, and CSV tables to
/// write out.
pub struct RunOutcome {
    pub status: Status,
    /// One-line explanation of the verdict.
    pub reason: String,
    /// Headline numbers, serialized into `summary.json`.
    pub metrics: Map<String, Value>,
    /// CSV tables: file stem and contents.
    pub tables: Vec<(String, String)>,
}

impl RunOutcome {
    pub fn new(pass: bool, reason: impl Into<String>) -> Self {
        Self {
            status: Status::from_bool(pass),
            reason: reason.into(),
            metrics: Map::new(),
            tables: Vec::new(),
        }
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics
            .insert(key.to_string(), serde_json::to_value(value).expect("serializable metric"));
    }

    pub fn table(&mut self, stem: &str, csv: Csv) {
        self.tables.push((format!("{stem}.csv"), csv.finish()));
    }
}

/// The persisted run record.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub config_path: String,
    pub status: Status,
    pub reason: String,
    pub seed: u64,
    pub metrics: Map<String, Value>,
    pub artifacts: Vec<String>,
    pub wall_time_seconds: f64,
}

/// Writes `summary.json` and every CSV table into `dir`, returning the list
/// of artifact file names (summary included).
pub fn write_artifacts(
    dir: &Path,
    summary: &mut RunSummary,
    tables: &[(String, String)],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let mut written = Vec::new();
    for (name, contents) in tables {
        let path = dir.join(name);
        std::fs::write(&path, contents)
            .with_context(|| format!("cannot write {}", path.display()))?;
        summary.artifacts.push(name.clone());
        written.push(path);
    }
    summary.artifacts.push("summary.json".into());
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(summary).expect("serializable summary");
    std::fs::write(&path, json + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    written.push(path);
    Ok(written)
}

/// Minimal deterministic CSV builder: a header row, then rows of cells.
/// Floats are printed with 17 significant digits so reruns are
/// byte-identical and round-trip exactly.
pub struct Csv {
    columns: usize,
    buf: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push('\n');
        Self { columns: header.len(), buf }
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        assert_eq!(cells.len(), self.columns, "row width must match the header");
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match cell {
                Cell::Str(s) => {
                    debug_assert!(
                        !s.contains(',') && !s.contains('"') && !s.contains('\n'),
                        "plain CSV cells must not need quoting"
                    );
                    self.buf.push_str(s);
                }
                Cell::Int(v) => {
                    let _ = write!(self.buf, "{v}");
                }
                Cell::Float(v) => {
                    let _ = write!(self.buf, "{v:.16e}");
                }
                Cell::Bool(v) => {
                    self.buf.push_str(if *v { "true" } else { "false" });
                }
            }
        }
        self.buf.push('\n');
    }

    fn finish(self) -> String {
        self.buf
    }
}

/// One CSV cell.
pub enum Cell<'a> {
    Str(&'a str),
    Int(i64),
    Float(f64),
    Bool(bool),
}
