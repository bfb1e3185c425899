//! Run directories: `<out>/<name>/{config.json, diagnostics.csv, report.json, snaps/}`.
//!
//! Floats are written in the shortest form that parses back to the same
//! value, both in JSON and CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::evolution::{DiagnosticRow, Snapshot};

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

/// Snapshot file contents: the field plus its time.
#[derive(Serialize)]
struct SnapshotFile<'a> {
    index: usize,
    t: f64,
    #[serde(rename = "L")]
    half_length: f64,
    #[serde(rename = "N")]
    points: usize,
    samples: &'a [f64],
}

impl RunDir {
    /// Creates `<out>/<name>` and its `snaps` subdirectory. Existing files are
    /// overwritten as they are written.
    pub fn create(out: &Path, name: &str) -> Result<Self> {
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(Error::Config(format!("invalid run name {name:?}")));
        }
        let root = out.join(name);
        let snaps = root.join("snaps");
        std::fs::create_dir_all(&snaps).map_err(|e| Error::io(&snaps, e))?;
        Ok(Self { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write_config(&self, cfg: &ExperimentConfig) -> Result<PathBuf> {
        self.write_text("config.json", &(cfg.to_json() + "\n"))
    }

    pub fn write_diagnostics(&self, rows: &[DiagnosticRow]) -> Result<PathBuf> {
        self.write_text("diagnostics.csv", &diagnostics_csv(rows))
    }

    pub fn write_report<T: Serialize>(&self, report: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(report)?;
        self.write_text("report.json", &(text + "\n"))
    }

    /// Writes `snaps/snap_<i>.json` for every snapshot.
    pub fn write_snapshots(&self, snaps: &[Snapshot]) -> Result<()> {
        for s in snaps {
            let g = s.field.grid();
            let file = SnapshotFile {
                index: s.index,
                t: s.t,
                half_length: g.half_length(),
                points: g.len(),
                samples: s.field.samples(),
            };
            let text = serde_json::to_string(&file)?;
            self.write_text(&format!("snaps/snap_{}.json", s.index), &text)?;
        }
        Ok(())
    }

    fn write_text(&self, rel: &str, text: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Header plus one line per row; missing values are empty cells.
pub fn diagnostics_csv(rows: &[DiagnosticRow]) -> String {
    let mut out = DiagnosticRow::COLUMNS.join(",");
    out.push('\n');
    for row in rows {
        for (i, cell) in row.cells().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            if let Some(v) = cell {
                write!(out, "{v}").expect("writing to a String");
            }
        }
        out.push('\n');
    }
    out
}
