use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One numeric check: `value` against `tolerance` in direction `comparison`.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, comparison: Comparison::AtMost, pass: value <= tolerance }
    }

    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, comparison: Comparison::AtLeast, pass: value >= tolerance }
    }

    /// A count that must be zero.
    pub fn zero(name: impl Into<String>, count: u64) -> Self {
        Self::at_most(name, count as f64, 0.0)
    }
}

pub struct Table {
    pub file: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &'static str, header: &[&str]) -> Self {
        Self { file, header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Formats a number for CSV output.
pub fn num(v: f64) -> String {
    v.to_string()
}

#[derive(Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Serialize)]
struct Report<'a> {
    experiment: &'a str,
    version: &'a str,
    config_sha256: &'a str,
    seed: u64,
    threads: usize,
    pass: bool,
    warnings: &'a [String],
    checks: &'a [Check],
    files: Vec<&'a str>,
}

pub struct Meta<'a> {
    pub experiment: &'a str,
    pub config_sha256: &'a str,
    pub seed: u64,
    pub threads: usize,
}

/// Writes `report.json` and every table into `dir`.
pub fn write(dir: &Path, meta: &Meta<'_>, outcome: &Outcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    for t in &outcome.tables {
        let path = dir.join(t.file);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(&t.header)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    let report = Report {
        experiment: meta.experiment,
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: meta.config_sha256,
        seed: meta.seed,
        threads: meta.threads,
        pass: outcome.pass(),
        warnings: &outcome.warnings,
        checks: &outcome.checks,
        files: outcome.tables.iter().map(|t| t.file).collect(),
    };
    let path = dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
