use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{HarnessError, HarnessResult};

/// Comparison a verdict value is judged with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
    Holds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    /// Trace or summary file the value was computed from.
    pub source: String,
}

impl Verdict {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64, source: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            comparison: Comparison::AtMost,
            source: source.into(),
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64, source: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
            comparison: Comparison::AtLeast,
            source: source.into(),
        }
    }

    /// Boolean property; `value` is 1 when it holds.
    pub fn holds(name: impl Into<String>, ok: bool, source: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            passed: ok,
            value: if ok { 1.0 } else { 0.0 },
            threshold: 1.0,
            comparison: Comparison::Holds,
            source: source.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub run: String,
    pub error: String,
}

/// Result of one experiment. Contains no timestamps, so identical inputs give
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub kind: String,
    pub problem: String,
    pub solver: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub tables: Vec<Table>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
    pub failures: Vec<RunFailure>,
}

impl Report {
    pub fn new(kind: &str, problem: &str, solver: &str, seeds: &[u64]) -> Self {
        Report {
            kind: kind.into(),
            problem: problem.into(),
            solver: solver.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seeds: seeds.to_vec(),
            tables: vec![],
            verdicts: vec![],
            notes: vec![],
            failures: vec![],
        }
    }

    /// All verdicts passed and no run failed.
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.verdicts.iter().all(|v| v.passed)
    }

    pub fn fail(&mut self, run: &str, error: impl ToString) {
        self.failures.push(RunFailure {
            run: run.into(),
            error: error.to_string(),
        });
    }

    pub fn to_json(&self) -> HarnessResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, dir: &Path) -> HarnessResult<()> {
        write_file(dir, "report.json", &self.to_json()?).map(|_| ())
    }

    /// One line per verdict plus failures.
    pub fn summary(&self) -> String {
        let mut lines: Vec<String> = self
            .verdicts
            .iter()
            .map(|v| {
                let op = match v.comparison {
                    Comparison::AtMost => "<=",
                    Comparison::AtLeast => ">=",
                    Comparison::Holds => "holds",
                };
                format!(
                    "{} {}: {:e} {op} {:e} [{}]",
                    if v.passed { "PASS" } else { "FAIL" },
                    v.name,
                    v.value,
                    v.threshold,
                    v.source
                )
            })
            .collect();
        lines.extend(self.failures.iter().map(|f| format!("FAIL {}: {}", f.run, f.error)));
        lines.join("\n")
    }
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str) -> HarnessResult<String> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| HarnessError::Io { path, source })?;
    Ok(name.to_string())
}
