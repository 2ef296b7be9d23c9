//! Artifact writers. Every CSV starts with its header row.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use paraccel::accel::FrameworkTrace;
use paraccel::smoothing::SolverTrace;

use crate::error::CliResult;

pub const SOLVER_TRACE_COLUMNS: [&str; 6] = ["outer_k", "inner_iters", "depth", "work", "gap_estimate", "residual_norm"];

pub const FRAMEWORK_TRACE_COLUMNS: [&str; 9] =
    ["k", "A_k", "lambda_k", "a_k", "step_norm", "gap", "prox_queries", "depth", "work"];

/// Output directory plus the list of files written into it.
pub struct ArtifactDir {
    root: PathBuf,
    written: Vec<String>,
}

impl ArtifactDir {
    pub fn create(root: impl AsRef<Path>) -> CliResult<Self> {
        fs::create_dir_all(root.as_ref())?;
        Ok(Self {
            root: root.as_ref().to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Relative names of the files written so far, in order.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn path_for(&mut self, name: &str) -> CliResult<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let path = self.path_for(name)?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| crate::CliError::Io(e.to_string()))?;
        self.write_text(name, &(text + "\n"))
    }

    /// Writes `header` and `rows`; `None` cells are left empty.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Option<String>>]) -> CliResult<()> {
        let path = self.path_for(name)?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|c| c.as_deref().unwrap_or("")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_solver_trace(&mut self, name: &str, trace: &SolverTrace) -> CliResult<()> {
        let rows: Vec<_> = trace
            .records
            .iter()
            .map(|r| {
                vec![
                    Some(r.outer_k.to_string()),
                    Some(r.inner_iters.to_string()),
                    Some(r.depth.to_string()),
                    Some(r.work.to_string()),
                    r.gap_estimate.map(num),
                    r.residual_norm.map(num),
                ]
            })
            .collect();
        self.write_csv(name, &SOLVER_TRACE_COLUMNS, &rows)
    }

    pub fn write_framework_trace(&mut self, name: &str, trace: &FrameworkTrace) -> CliResult<()> {
        let rows: Vec<_> = trace
            .iterates
            .iter()
            .map(|it| {
                vec![
                    Some(it.k.to_string()),
                    Some(num(it.acc)),
                    Some(num(it.lambda)),
                    Some(num(it.a)),
                    Some(num(it.step_norm)),
                    it.gap.map(num),
                    Some(it.prox_queries.to_string()),
                    it.depth.map(|d| d.to_string()),
                    it.work.map(|w| w.to_string()),
                ]
            })
            .collect();
        self.write_csv(name, &FRAMEWORK_TRACE_COLUMNS, &rows)
    }
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}
