//! Runs a parsed config and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ConfigErrors, ConfigIssue, ExperimentConfig, TaskKind};
use crate::tasks::{TaskContext, TaskError, TaskRegistry};

#[derive(Debug, Clone, PartialEq)]
pub struct Written {
    pub path: PathBuf,
    pub rows: usize,
    pub summary: String,
}

impl Written {
    pub fn summary_line(&self) -> String {
        let unit = if self.rows == 1 { "row" } else { "rows" };
        format!("{}: {} {unit}, {}", self.path.display(), self.rows, self.summary)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("no task registered for `{0}`")]
    UnknownTask(TaskKind),
    #[error("task `{task}` failed: {source}")]
    Task { task: TaskKind, source: TaskError },
    #[error("task `{task}` produced `{name}` twice")]
    DuplicateArtifact { task: TaskKind, name: String },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

/// Machine-readable failure description printed on stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub status: &'static str,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<ConfigIssue>,
}

impl RunError {
    pub fn report(&self) -> ErrorReport {
        let (kind, task, issues) = match self {
            RunError::Config(e) => ("config", None, e.0.clone()),
            RunError::ReadConfig { .. } => ("io", None, Vec::new()),
            RunError::UnknownTask(t) => ("task", Some(t.to_string()), Vec::new()),
            RunError::Task { task, .. } | RunError::DuplicateArtifact { task, .. } => {
                ("task", Some(task.to_string()), Vec::new())
            }
            RunError::Write { .. } => ("io", None, Vec::new()),
        };
        ErrorReport { status: "error", kind, task, message: self.to_string(), issues }
    }

    /// Process exit status: 2 for an invalid config, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|source| RunError::ReadConfig { path: path.to_owned(), source })?;
    Ok(crate::config::parse_config(&text)?)
}

/// Computes every artifact of `config` in memory, then writes them under
/// `out_dir`. If any write fails the files already written are removed.
pub fn run(
    config: &ExperimentConfig,
    registry: &TaskRegistry,
    out_dir: &Path,
    config_dir: &Path,
) -> Result<Vec<Written>, RunError> {
    let task = registry.get(config.task).ok_or(RunError::UnknownTask(config.task))?;
    let artifacts = task
        .run(config, &TaskContext { config_dir })
        .map_err(|source| RunError::Task { task: config.task, source })?;
    for (i, a) in artifacts.iter().enumerate() {
        if artifacts[..i].iter().any(|b| b.name == a.name) {
            return Err(RunError::DuplicateArtifact { task: config.task, name: a.name.clone() });
        }
    }

    let mut written: Vec<Written> = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let path = out_dir.join(format!("{}{}", config.output, a.name));
        let result = path
            .parent()
            .map_or(Ok(()), fs::create_dir_all)
            .and_then(|()| fs::write(&path, &a.contents));
        if let Err(source) = result {
            for w in &written {
                let _ = fs::remove_file(&w.path);
            }
            let _ = fs::remove_file(&path);
            return Err(RunError::Write { path, source });
        }
        written.push(Written { path, rows: a.rows, summary: a.summary });
    }
    Ok(written)
}
