//! Python bindings. Matrices cross the boundary as lists of rows; active sets are
//! 1-based, as in the command-line documents.

use glaa::simulation::{aggregate, run_replications, ScenarioSpec, SimulationOptions};
use glaa::tuning::{init_eta_from_quantile, refit_config, tune as tune_grid, TuningGrid};
use glaa::{fit as fit_delta, sample_delta, Dataset, GlaaConfig, GlaaError, GlaaFit, Matrix};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: GlaaError) -> PyErr {
    match e {
        GlaaError::Singular(_) | GlaaError::Numerical(_) | GlaaError::Tuning(_) => {
            PyArithmeticError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Row lists to a matrix; every row must have the same length.
pub fn matrix(rows: &[Vec<f64>], name: &str) -> Result<Matrix, String> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(format!("{name} is empty"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(format!("{name}: row {i} has {} entries, expected {ncols}", rows[i].len()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Matrix::from_row_slice(rows.len(), ncols, &flat))
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn dataset(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, z: Vec<Vec<f64>>) -> PyResult<Dataset> {
    let m = |r: &[Vec<f64>], name| matrix(r, name).map_err(PyValueError::new_err);
    let data = Dataset::new(m(&x, "x")?, m(&y, "y")?, m(&z, "z")?).map_err(to_py)?;
    data.center().map_err(to_py)
}

fn fit_dict<'py>(py: Python<'py>, fit: &GlaaFit, cfg: &GlaaConfig) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("loadings", fit.gamma.iter().map(rows).collect::<Vec<_>>())?;
    let one_based = |sets: &[Vec<usize>; 3]| -> Vec<Vec<usize>> {
        sets.iter().map(|s| s.iter().map(|i| i + 1).collect()).collect()
    };
    d.set_item("active_sets", one_based(&fit.active))?;
    d.set_item("initial_active_sets", one_based(&fit.initial_active))?;
    d.set_item("singular_values", fit.singular_values.to_vec())?;
    d.set_item("iterations", fit.iterations)?;
    d.set_item("converged", fit.converged)?;
    d.set_item("objective", fit.objective)?;
    d.set_item("eta", cfg.eta.to_vec())?;
    d.set_item("eta_tilde", cfg.eta_tilde.to_vec())?;
    Ok(d)
}

/// Fit on centered copies of `x`, `y`, `z` (observations in rows). Without `eta`,
/// the initialization keeps the top `init_keep` fraction of rows per mode.
#[pyfunction]
#[pyo3(signature = (x, y, z, ranks, eta=None, eta_tilde=[0.0; 3], init_keep=0.5, max_iter=100, tol=1e-6))]
#[allow(clippy::too_many_arguments)]
fn fit<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    ranks: [usize; 3],
    eta: Option<[f64; 3]>,
    eta_tilde: [f64; 3],
    init_keep: f64,
    max_iter: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let data = dataset(x, y, z)?;
    let delta = sample_delta(&data).map_err(to_py)?;
    let eta = match eta {
        Some(e) => e,
        None => init_eta_from_quantile(&delta, init_keep).map_err(to_py)?,
    };
    let cfg = GlaaConfig {
        max_iter,
        tol,
        ..GlaaConfig::new(ranks)
    }
    .with_eta(eta)
    .with_eta_tilde(eta_tilde);
    let result = py
        .detach(|| fit_delta(&delta, &cfg))
        .map_err(to_py)?;
    fit_dict(py, &result, &cfg)
}

/// Threshold selection by a seeded train/test split, followed by a refit on all
/// observations. Returns the tuned thresholds, the loss table and the refit.
#[pyfunction]
#[pyo3(signature = (x, y, z, ranks, grid_size=8, split_fraction=0.5, seed=0))]
#[allow(clippy::too_many_arguments)]
fn tune<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    ranks: [usize; 3],
    grid_size: usize,
    split_fraction: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let data = dataset(x, y, z)?;
    let grid = TuningGrid {
        grid_size,
        split_fraction,
        seed,
        ..TuningGrid::default()
    };
    let base = GlaaConfig::new(ranks);
    let (tuned, cfg, result) = py
        .detach(|| -> glaa::Result<_> {
            let tuned = tune_grid(&data, &base, &grid)?;
            let delta = sample_delta(&data)?;
            let cfg = refit_config(&delta, data.n(), &base, &grid, &tuned)?;
            let result = fit_delta(&delta, &cfg)?;
            Ok((tuned, cfg, result))
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("best_eta_tilde", tuned.best_eta_tilde.to_vec())?;
    d.set_item("best_loss", tuned.best_loss)?;
    let table: Vec<(Vec<f64>, Option<f64>)> = tuned
        .loss_table
        .iter()
        .map(|e| (e.eta_tilde.to_vec(), e.loss))
        .collect();
    d.set_item("loss_table", table)?;
    d.set_item("refit", fit_dict(py, &result, &cfg)?)?;
    Ok(d)
}

/// Replications of a preset scenario (1, 2 or 3). Returns one dict per method with
/// `(mean, se)` pairs for TPR-1, FPR-1, TPR-2, FPR-2 and D.
#[pyfunction]
#[pyo3(signature = (scenario, reps, seed=0, n=None))]
fn simulate<'py>(
    py: Python<'py>,
    scenario: u8,
    reps: usize,
    seed: u64,
    n: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut spec = ScenarioSpec::preset(scenario).map_err(to_py)?.with_seed(seed);
    if let Some(n) = n {
        spec.n = n;
    }
    let opts = SimulationOptions::default();
    let outcomes = py
        .detach(|| run_replications(&spec, &opts, reps))
        .map_err(to_py)?;
    aggregate(&outcomes)
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("method", r.method.label())?;
            d.set_item("reps", r.reps)?;
            for (key, ms) in [("tpr1", r.tpr1), ("fpr1", r.fpr1), ("tpr2", r.tpr2), ("fpr2", r.fpr2), ("d", r.d)] {
                d.set_item(key, (ms.mean, ms.se))?;
            }
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn glaa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_conversion_round_trips() {
        let r = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let m = matrix(&r, "a").unwrap();
        assert_eq!(m[(2, 0)], 5.0);
        assert_eq!(rows(&m), r);
    }

    #[test]
    fn ragged_or_empty_rows_are_rejected() {
        assert!(matrix(&[vec![1.0], vec![1.0, 2.0]], "a").unwrap_err().contains("row 1"));
        assert!(matrix(&[], "a").is_err());
        assert!(matrix(&[vec![]], "a").is_err());
    }
}
