//! Selection rates and subspace distances.

use serde::{Deserialize, Serialize};

use super::GroundTruth;
use crate::error::{GlaaError, Result};
use crate::tensor::{has_orthonormal_columns, orthonormalize, Matrix, Mode, ORTHONORMAL_TOL};

/// `(|I ∩ Î| / s, |Iᶜ ∩ Î| / (p − s))`. FPR is 0 when `p == s`.
pub fn tpr_fpr(truth: &[usize], estimate: &[usize], p: usize, s: usize) -> (f64, f64) {
    let hits = estimate.iter().filter(|j| truth.contains(j)).count();
    let false_hits = estimate.len() - hits;
    let tpr = if s == 0 { 0.0 } else { hits as f64 / s as f64 };
    let fpr = if p > s {
        false_hits as f64 / (p - s) as f64
    } else {
        0.0
    };
    (tpr, fpr)
}

fn orthonormal(g: &Matrix) -> Result<Matrix> {
    if has_orthonormal_columns(g, ORTHONORMAL_TOL) {
        Ok(g.clone())
    } else {
        orthonormalize(g)
    }
}

/// `‖P_Γ − P_Γ̂‖_F / √(2r)` with `r` the column count of `gamma_true`.
pub fn subspace_distance(gamma_true: &Matrix, gamma_hat: &Matrix) -> Result<f64> {
    if gamma_true.ncols() != gamma_hat.ncols() {
        return Err(GlaaError::dims(format!(
            "bases have {} and {} columns",
            gamma_true.ncols(),
            gamma_hat.ncols()
        )));
    }
    if gamma_true.nrows() != gamma_hat.nrows() {
        return Err(GlaaError::dims(format!(
            "bases have {} and {} rows",
            gamma_true.nrows(),
            gamma_hat.nrows()
        )));
    }
    let a = orthonormal(gamma_true)?;
    let b = orthonormal(gamma_hat)?;
    let diff = &a * a.transpose() - &b * b.transpose();
    let r = gamma_true.ncols() as f64;
    Ok((diff.norm() / (2.0 * r).sqrt()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tpr: [f64; 3],
    pub fpr: [f64; 3],
    pub d_per_mode: [f64; 3],
    /// Mean of `d_per_mode` over `modes`.
    pub d_avg: f64,
    pub modes: Vec<Mode>,
}

/// Scores estimated bases and active sets (0-based) against the truth.
pub fn evaluate(
    gamma: &[Matrix; 3],
    active: &[Vec<usize>; 3],
    truth: &GroundTruth,
    modes: &[Mode],
) -> Result<MetricsReport> {
    if modes.is_empty() {
        return Err(GlaaError::invalid("no modes to average over"));
    }
    let mut tpr = [0.0; 3];
    let mut fpr = [0.0; 3];
    let mut d = [0.0; 3];
    for m in Mode::ALL {
        let k = m.index();
        let p = truth.gamma[k].nrows();
        (tpr[k], fpr[k]) = tpr_fpr(&truth.active[k], &active[k], p, truth.active[k].len());
        d[k] = subspace_distance(&truth.gamma[k], &gamma[k])?;
    }
    let d_avg = modes.iter().map(|m| d[m.index()]).sum::<f64>() / modes.len() as f64;
    Ok(MetricsReport {
        tpr,
        fpr,
        d_per_mode: d,
        d_avg,
        modes: modes.to_vec(),
    })
}
