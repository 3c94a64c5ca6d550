//! Result documents and file writing.
//!
//! Documents are JSON. Floats are written in the shortest form that parses back to
//! the same `f64`, so reading a document recovers the in-memory values exactly.
//! Matrices are arrays of rows. Active sets are 1-based.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use glaa::estimator::{FallbackEvent, GlaaConfig};
use glaa::tuning::{TuningGrid, TuningResult};
use glaa::{Dataset, GlaaFit, Matrix, Tensor3};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Inverse of [`matrix_rows`]. Rows must have equal length.
#[cfg(test)]
pub fn rows_matrix(rows: &[Vec<f64>]) -> Option<Matrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Some(Matrix::from_row_slice(rows.len(), ncols, &flat))
}

fn one_based(sets: &[Vec<usize>; 3]) -> [Vec<usize>; 3] {
    sets.clone().map(|s| s.into_iter().map(|i| i + 1).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fallback {
    pub iteration: usize,
    pub mode: usize,
    pub selected: usize,
}

impl From<&FallbackEvent> for Fallback {
    fn from(e: &FallbackEvent) -> Self {
        Fallback {
            iteration: e.iteration,
            mode: e.mode.number(),
            selected: e.selected,
        }
    }
}

/// Linear combinations `Γ̂ₖᵀ` applied to each centered observation; one row per
/// observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSection {
    pub ranks: [usize; 3],
    pub eta: [f64; 3],
    pub eta_tilde: [f64; 3],
    pub max_iter: usize,
    pub tol: f64,
    /// `p1 x r1`, `p2 x r2`, `p3 x r3`; rows outside the active sets are zero.
    pub loadings: [Vec<Vec<f64>>; 3],
    pub active_sets: [Vec<usize>; 3],
    pub initial_active_sets: [Vec<usize>; 3],
    pub singular_values: [Vec<f64>; 3],
    pub iterations: usize,
    pub converged: bool,
    /// Squared Frobenius norm of the residual tensor.
    pub objective: f64,
    pub fallbacks: Vec<Fallback>,
    pub scores: Scores,
}

impl FitSection {
    pub fn new(fit: &GlaaFit, config: &GlaaConfig, data: &Dataset) -> Self {
        let score = |block: &Matrix, g: &Matrix| matrix_rows(&(block * g));
        FitSection {
            ranks: config.ranks,
            eta: config.eta,
            eta_tilde: config.eta_tilde,
            max_iter: config.max_iter,
            tol: config.tol,
            loadings: [0, 1, 2].map(|k| matrix_rows(&fit.gamma[k])),
            active_sets: one_based(&fit.active),
            initial_active_sets: one_based(&fit.initial_active),
            singular_values: fit.singular_values.clone(),
            iterations: fit.iterations,
            converged: fit.converged,
            objective: fit.objective,
            fallbacks: fit.fallbacks.iter().map(Fallback::from).collect(),
            scores: Scores {
                x: score(data.x(), &fit.gamma[0]),
                y: score(data.y(), &fit.gamma[1]),
                z: score(data.z(), &fit.gamma[2]),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSection {
    pub n: usize,
    pub dims: [usize; 3],
    pub log: bool,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub command: String,
    pub input: InputSection,
    pub fit: FitSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneDocument {
    pub command: String,
    pub input: InputSection,
    pub grid: TuningGrid,
    pub ranks: [usize; 3],
    pub tuning: TuningResult,
    /// Present when the refit on all observations was requested.
    pub refit: Option<FitSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDocument {
    pub command: String,
    pub input: InputSection,
    pub dims: [usize; 3],
    /// Always `"row-major"`: entry `(i1, i2, i3)` (0-based) sits at
    /// `(i1 * p2 + i2) * p3 + i3`.
    pub layout: String,
    pub ridge: f64,
    pub values: Vec<f64>,
}

impl TensorDocument {
    pub fn new(input: InputSection, t: &Tensor3, ridge: f64) -> Self {
        TensorDocument {
            command: "gla".into(),
            input,
            dims: t.dims(),
            layout: "row-major".into(),
            ridge,
            values: t.values().to_vec(),
        }
    }
}

pub fn to_json<T: Serialize>(doc: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(doc)
        .map_err(|e| CliError::Numerical(format!("cannot serialize result: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes through a temporary file in the same directory and renames it into place,
/// so `path` either keeps its old contents or holds the complete new ones.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let io = |e: std::io::Error, what: &Path| CliError::Io(format!("{}: {e}", what.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp).map_err(|e| io(e, &tmp))?;
        f.write_all(bytes).map_err(|e| io(e, &tmp))?;
        f.sync_all().map_err(|e| io(e, &tmp))?;
        fs::rename(&tmp, path).map_err(|e| io(e, path))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
