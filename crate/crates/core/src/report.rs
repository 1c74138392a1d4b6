//! Run reports and atomic artifact writing.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Where the worst value occurred, when meaningful (a time, an `s`, a row).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_at: Option<f64>,
}

impl Check {
    /// Passes when `measured ≤ tolerance` (and `measured` is not NaN).
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
            worst_at: None,
        }
    }

    pub fn with_worst_at(mut self, at: f64) -> Self {
        self.worst_at = Some(at);
        self
    }
}

/// Deterministic summary of a run; wall-clock time lives in a separate
/// `timing.json` so this file is byte-identical across reruns.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn new(subcommand: &str, config: serde_json::Value) -> Self {
        RunReport {
            subcommand: subcommand.to_string(),
            config,
            checks: Vec::new(),
            passed: true,
            artifacts: Vec::new(),
        }
    }

    /// Adds a check; names must be unique within a report.
    pub fn check(&mut self, c: Check) {
        debug_assert!(self.checks.iter().all(|o| o.name != c.name), "duplicate check {}", c.name);
        self.passed &= c.passed;
        self.checks.push(c);
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory and a rename, so readers never see a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let mut tmp = tempfile::Builder::new().prefix(".partial-").tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(&target).map_err(|e| e.error)?;
    Ok(target)
}

pub fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

/// Minimal numeric CSV table.
#[derive(Clone, Debug)]
pub struct Csv {
    header: Vec<String>,
    body: String,
}

impl Csv {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Csv {
            header: header.into_iter().map(Into::into).collect(),
            body: String::new(),
        }
    }

    pub fn columns(&self) -> usize {
        self.header.len()
    }

    /// Appends a row of cells already formatted as text.
    pub fn row_text(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.header.len(), "row width");
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn row(&mut self, cells: &[f64]) {
        let text: Vec<String> = cells.iter().map(|c| num(*c)).collect();
        self.row_text(&text);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut s = String::with_capacity(self.body.len() + 64);
        let _ = writeln!(s, "{}", self.header.join(","));
        s.push_str(&self.body);
        s.into_bytes()
    }
}

/// Shortest round-tripping decimal form of a float.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
