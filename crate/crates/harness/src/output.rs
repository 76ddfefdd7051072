//! Files written by the harness. Every file goes through [`write_atomic`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hifba::solver::{SolverRecord, SolverTrace};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    f.sync_all().map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner()
        .map_err(|e| HarnessError::Csv(csv::Error::from(e.into_error())))
}

/// One line of a trace CSV.
#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub phi: f64,
    pub envelope_inexact: f64,
    pub residual_norm: f64,
    pub alpha: f64,
    pub backtracks: usize,
    pub epsilon_k: f64,
    pub wall_time_ms: f64,
}

impl TraceRow {
    pub fn from_record(r: &SolverRecord, record_timing: bool) -> Self {
        TraceRow {
            k: r.k,
            phi: r.phi,
            envelope_inexact: r.envelope_inexact,
            residual_norm: r.residual_norm,
            alpha: r.alpha,
            backtracks: r.backtracks,
            epsilon_k: r.epsilon_k,
            wall_time_ms: if record_timing { r.wall_time_ms } else { 0.0 },
        }
    }
}

pub fn write_trace(path: &Path, trace: &SolverTrace, record_timing: bool) -> Result<()> {
    let rows = trace
        .records
        .iter()
        .map(|r| TraceRow::from_record(r, record_timing));
    write_atomic(path, &csv_bytes(rows)?)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Everything needed to rerun a command bit-exactly.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub library_version: &'static str,
    pub harness_version: &'static str,
    pub config: &'a ExperimentConfig,
    pub files: Vec<String>,
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    files: &[PathBuf],
) -> Result<PathBuf> {
    let files = files
        .iter()
        .map(|f| f.strip_prefix(dir).unwrap_or(f).display().to_string())
        .collect();
    let manifest = Manifest {
        command,
        library_version: hifba_version(),
        harness_version: env!("CARGO_PKG_VERSION"),
        config,
        files,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

fn hifba_version() -> &'static str {
    // Both crates are versioned together by the workspace.
    env!("CARGO_PKG_VERSION")
}

/// `1.1` → `1.1`, `2` → `2.0`; stable across runs for file names.
pub fn q_tag(q: f64) -> String {
    format!("{q:?}")
}
