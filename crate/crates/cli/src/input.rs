//! Numeric CSV ingestion and optional preprocessing.

use std::fs::File;
use std::path::Path;

use glaa::{Dataset, Matrix};

use crate::error::{CliError, CliResult};

/// Reads a numeric matrix, one observation per row. A first row that does not parse
/// as numbers is taken as a header and skipped.
pub fn read_matrix(path: &Path) -> CliResult<Matrix> {
    let file = File::open(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    parse_matrix(file, &path.display().to_string())
}

pub fn parse_matrix<R: std::io::Read>(reader: R, name: &str) -> CliResult<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut ncols = None;
    let mut nrows = 0usize;
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::Parse(format!("{name}: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, usize> = record
            .iter()
            .enumerate()
            .map(|(j, field)| field.parse::<f64>().map_err(|_| j))
            .collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if nrows == 0 && ncols.is_none() => {
                // Header row; its width still fixes the column count.
                ncols = Some(record.len());
                continue;
            }
            Err(j) => {
                return Err(CliError::Parse(format!(
                    "{name}: line {}, column {}: not a number: {:?}",
                    line + 1,
                    j + 1,
                    &record[j]
                )))
            }
        };
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(CliError::Parse(format!(
                "{name}: line {}, column {}: value is not finite",
                line + 1,
                j + 1
            )));
        }
        match ncols {
            None => ncols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(CliError::Parse(format!(
                    "{name}: line {} has {} fields, expected {c}",
                    line + 1,
                    row.len()
                )))
            }
            Some(_) => {}
        }
        values.extend(row);
        nrows += 1;
    }
    let ncols = ncols.unwrap_or(0);
    if nrows == 0 || ncols == 0 {
        return Err(CliError::Parse(format!("{name}: no numeric rows")));
    }
    Ok(Matrix::from_row_slice(nrows, ncols, &values))
}

/// Input transformations applied before centering.
#[derive(Debug, Clone, Copy, Default)]
pub struct Preprocess {
    pub log: bool,
    pub standardize: bool,
}

impl Preprocess {
    pub fn apply(&self, m: Matrix, block: &str) -> CliResult<Matrix> {
        let mut m = m;
        if self.log {
            // Row-major scan so the message names the first bad cell in reading order.
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    if m[(i, j)] <= 0.0 {
                        return Err(CliError::Usage(format!(
                            "--log needs positive values; {block} has {} at row {}, column {}",
                            m[(i, j)],
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
            m.apply(|v| *v = v.ln());
        }
        if self.standardize {
            m = glaa::ula::standardize_columns(&m, block)?;
        }
        Ok(m)
    }
}

/// The three blocks, checked for equal row counts, preprocessed and centered.
pub fn load_dataset(x: &Path, y: &Path, z: &Path, pre: Preprocess) -> CliResult<Dataset> {
    let blocks = [(x, "X"), (y, "Y"), (z, "Z")]
        .into_iter()
        .map(|(p, name)| read_matrix(p).map(|m| (m, name, p)))
        .collect::<CliResult<Vec<_>>>()?;
    let n = blocks[0].0.nrows();
    for (m, name, p) in &blocks {
        if m.nrows() != n {
            return Err(CliError::Dimension(format!(
                "{name} ({}) has {} rows but X has {n}",
                p.display(),
                m.nrows()
            )));
        }
    }
    let mut it = blocks
        .into_iter()
        .map(|(m, name, _)| pre.apply(m, name));
    let (x, y, z) = (it.next().unwrap()?, it.next().unwrap()?, it.next().unwrap()?);
    Ok(Dataset::new(x, y, z)?.center()?)
}
