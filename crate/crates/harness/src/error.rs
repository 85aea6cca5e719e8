use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// One failed validation rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default()
}

fn show_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| format!("\n  - {i}")).collect()
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}line {line}, column {column}: {message}", show_path(path))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}{} validation error(s):{}", show_path(path), issues.len(), show_issues(issues))]
    Invalid { path: Option<PathBuf>, issues: Vec<ConfigIssue> },
}

impl ConfigError {
    pub(crate) fn with_path(self, p: &std::path::Path) -> Self {
        match self {
            ConfigError::Parse {
                line, column, message, ..
            } => ConfigError::Parse {
                path: Some(p.to_path_buf()),
                line,
                column,
                message,
            },
            ConfigError::Invalid { issues, .. } => ConfigError::Invalid {
                path: Some(p.to_path_buf()),
                issues,
            },
            other => other,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("problem {problem}: {message}")]
    Problem { problem: String, message: String },
    #[error("run {run}: {source}")]
    Solver {
        run: String,
        #[source]
        source: nash_newton::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

pub(crate) trait RunContext<T> {
    fn in_run(self, run: &str) -> HarnessResult<T>;
}

impl<T> RunContext<T> for nash_newton::Result<T> {
    fn in_run(self, run: &str) -> HarnessResult<T> {
        self.map_err(|source| HarnessError::Solver {
            run: run.to_string(),
            source,
        })
    }
}
