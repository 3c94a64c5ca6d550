//! Sparse Tucker estimation of the three-way moment tensor.
//!
//! The estimator works on the sample moment tensor `Δ̃ = n⁻¹ Σ Xᵢ∘Yᵢ∘Zᵢ` of centered
//! data. It selects active variables per mode by hard thresholding, alternates
//! thresholded SVD updates of the three bases, and returns the Tucker projection
//! `Δ̂ = Δ̃ ×1 P₁ ×2 P₂ ×3 P₃`.
//!
//! Updates are Gauss-Seidel: when mode `k` is refreshed inside an iteration, the
//! Kronecker factor of the other two modes uses the freshest bases available.

use serde::{Deserialize, Serialize};

use crate::error::{GlaaError, Result};
use crate::tensor::{
    contract_third, has_orthonormal_columns, leading_left_singular, mode_product,
    projection, unfold_first, unfold_second, unfold_third,
    spd_inverse, Matrix, Mode, Tensor3, ORTHONORMAL_TOL,
};

/// Three observation matrices sharing the row (observation) index.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Matrix,
    z: Matrix,
    centered: bool,
}

impl Dataset {
    /// Raw (not yet centered) observations.
    pub fn new(x: Matrix, y: Matrix, z: Matrix) -> Result<Self> {
        let n = x.nrows();
        if y.nrows() != n || z.nrows() != n {
            return Err(GlaaError::dims(format!(
                "row counts differ: x has {n}, y has {}, z has {}",
                y.nrows(),
                z.nrows()
            )));
        }
        if n == 0 || x.ncols() == 0 || y.ncols() == 0 || z.ncols() == 0 {
            return Err(GlaaError::dims("every block needs at least one row and column"));
        }
        if [&x, &y, &z].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(GlaaError::invalid("observations must be finite"));
        }
        Ok(Dataset {
            x,
            y,
            z,
            centered: false,
        })
    }

    /// Observations that the caller asserts are already centered; checked to
    /// `1e-8 * n` per column.
    pub fn centered(x: Matrix, y: Matrix, z: Matrix) -> Result<Self> {
        let mut d = Dataset::new(x, y, z)?;
        let tol = 1e-8 * d.n() as f64;
        for (name, m) in [("x", &d.x), ("y", &d.y), ("z", &d.z)] {
            for (j, col) in m.column_iter().enumerate() {
                if col.sum().abs() > tol {
                    return Err(GlaaError::invalid(format!(
                        "column {} of {name} is not centered (sum {:e})",
                        j + 1,
                        col.sum()
                    )));
                }
            }
        }
        d.centered = true;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// `(p1, p2, p3)`.
    pub fn dims(&self) -> [usize; 3] {
        [self.x.ncols(), self.y.ncols(), self.z.ncols()]
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Subtract column means from every block.
    pub fn center(&self) -> Result<Dataset> {
        if self.n() < 2 {
            return Err(GlaaError::TooFewObservations(format!(
                "centering needs n >= 2, got {}",
                self.n()
            )));
        }
        Ok(Dataset {
            x: center_columns(&self.x),
            y: center_columns(&self.y),
            z: center_columns(&self.z),
            centered: true,
        })
    }

    /// Rows in the given order, marked as uncentered.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(GlaaError::invalid(format!("row {bad} out of range")));
        }
        Dataset::new(
            self.x.select_rows(rows),
            self.y.select_rows(rows),
            self.z.select_rows(rows),
        )
    }
}

pub(crate) fn center_columns(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    let n = m.nrows() as f64;
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Sample moment tensor `n⁻¹ Σᵢ xᵢ∘yᵢ∘zᵢ`. Refuses uncentered data.
pub fn sample_delta(data: &Dataset) -> Result<Tensor3> {
    if !data.is_centered() {
        return Err(GlaaError::NotCentered);
    }
    moment_tensor(data.x(), data.y(), data.z())
}

/// `n⁻¹ Σᵢ xᵢ∘yᵢ∘zᵢ` without any centering requirement.
pub(crate) fn moment_tensor(x: &Matrix, y: &Matrix, z: &Matrix) -> Result<Tensor3> {
    let n = x.nrows();
    let mut acc = Tensor3::zeros([x.ncols(), y.ncols(), z.ncols()]);
    let (xt, yt, zt) = (x.transpose(), y.transpose(), z.transpose());
    for i in 0..n {
        acc.outer_accumulate(
            xt.column(i).as_slice(),
            yt.column(i).as_slice(),
            zt.column(i).as_slice(),
            1.0,
        )?;
    }
    Ok(acc.scaled(1.0 / n as f64))
}

/// Ranks, thresholds and stopping rule for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlaaConfig {
    pub ranks: [usize; 3],
    /// Initialization thresholds on the row-wise max-norm of each unfolding.
    pub eta: [f64; 3],
    /// Iteration thresholds on the squared row ℓ2-norm of `Δ̃_k Γ̂_{-k}`.
    pub eta_tilde: [f64; 3],
    pub max_iter: usize,
    pub tol: f64,
}

impl GlaaConfig {
    pub const DEFAULT_MAX_ITER: usize = 100;
    pub const DEFAULT_TOL: f64 = 1e-6;

    /// Zero thresholds, default stopping rule.
    pub fn new(ranks: [usize; 3]) -> Self {
        GlaaConfig {
            ranks,
            eta: [0.0; 3],
            eta_tilde: [0.0; 3],
            max_iter: Self::DEFAULT_MAX_ITER,
            tol: Self::DEFAULT_TOL,
        }
    }

    pub fn with_eta(mut self, eta: [f64; 3]) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_eta_tilde(mut self, eta_tilde: [f64; 3]) -> Self {
        self.eta_tilde = eta_tilde;
        self
    }

    pub fn validate(&self, dims: [usize; 3]) -> Result<()> {
        for m in Mode::ALL {
            let k = m.index();
            let r = self.ranks[k];
            if r == 0 {
                return Err(GlaaError::invalid(format!("rank of mode {m} must be positive")));
            }
            if r > dims[k] {
                return Err(GlaaError::RankTooLarge {
                    rank: r,
                    available: dims[k],
                    context: format!("dimension of mode {m}"),
                });
            }
            let (a, b) = m.others();
            let cross = self.ranks[a.index()] * self.ranks[b.index()];
            if r > cross {
                return Err(GlaaError::RankTooLarge {
                    rank: r,
                    available: cross,
                    context: format!("product of the other two ranks for mode {m}"),
                });
            }
            for (name, v) in [("eta", self.eta[k]), ("eta_tilde", self.eta_tilde[k])] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(GlaaError::invalid(format!(
                        "{name} for mode {m} must be finite and nonnegative, got {v}"
                    )));
                }
            }
        }
        if self.max_iter == 0 {
            return Err(GlaaError::invalid("max_iter must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(GlaaError::invalid("tol must be positive"));
        }
        Ok(())
    }
}

/// Thresholding kept fewer than `r_k` rows, so the `r_k` top-scoring rows were used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackEvent {
    /// 0 for the initialization, `t >= 1` for iteration `t`.
    pub iteration: usize,
    pub mode: Mode,
    /// Rows that passed the threshold.
    pub selected: usize,
}

/// Active sets and bases produced by the initialization or by one iteration.
#[derive(Debug, Clone)]
pub struct Estimate {
    /// Sorted 0-based row indices per mode.
    pub active: [Vec<usize>; 3],
    pub gamma: [Matrix; 3],
    pub singular_values: [Vec<f64>; 3],
    /// Modes where the fallback kicked in, with the thresholded count.
    pub fallbacks: Vec<(Mode, usize)>,
}

impl Estimate {
    /// ℓ2-norm of all retained singular values, concatenated across modes.
    pub fn singular_value_norm(&self) -> f64 {
        self.singular_values
            .iter()
            .flatten()
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
    }
}

/// Rows whose criterion strictly exceeds `threshold`; when fewer than `r` pass, the
/// `r` largest (smaller index first on ties). Returns the sorted rows and the number
/// that passed the threshold.
pub fn threshold_rows(criterion: &[f64], threshold: f64, r: usize) -> (Vec<usize>, usize) {
    let passed: Vec<usize> = (0..criterion.len())
        .filter(|&j| criterion[j] > threshold)
        .collect();
    let count = passed.len();
    if count >= r {
        return (passed, count);
    }
    let mut order: Vec<usize> = (0..criterion.len()).collect();
    order.sort_by(|&a, &b| criterion[b].total_cmp(&criterion[a]).then(a.cmp(&b)));
    let mut top: Vec<usize> = order.into_iter().take(r).collect();
    top.sort_unstable();
    (top, count)
}

/// SVD restricted to `rows`, scattered back into a `p x r` basis with exact zeros
/// elsewhere.
fn masked_left_singular(m: &Matrix, rows: &[usize], r: usize) -> Result<(Matrix, Vec<f64>)> {
    let sub = m.select_rows(rows);
    let svd = leading_left_singular(&sub, r)?;
    let mut g = Matrix::zeros(m.nrows(), r);
    for (i, &row) in rows.iter().enumerate() {
        g.row_mut(row).copy_from(&svd.vectors.row(i));
    }
    Ok((g, svd.values))
}

/// Initial active sets from the row-wise max-norm and initial bases from the SVD of
/// the unfolding masked to the active rows and active column pairs.
pub fn initialize(delta: &Tensor3, config: &GlaaConfig) -> Result<Estimate> {
    let dims = delta.dims();
    config.validate(dims)?;
    let mut active: [Vec<usize>; 3] = Default::default();
    let mut fallbacks = Vec::new();
    for m in Mode::ALL {
        let k = m.index();
        let norms = delta.slice_max_norms(m);
        let (rows, count) = threshold_rows(&norms, config.eta[k], config.ranks[k]);
        if count < config.ranks[k] {
            fallbacks.push((m, count));
        }
        active[k] = rows;
    }

    let mut gamma: [Matrix; 3] = Default::default();
    let mut singular_values: [Vec<f64>; 3] = Default::default();
    for m in Mode::ALL {
        let k = m.index();
        let (a, b) = m.others();
        let (ia, ib) = (&active[a.index()], &active[b.index()]);
        // D_{I_k} Δ̃_k D_{I_{-k}} with the zero rows and columns dropped.
        let mut sub = Matrix::zeros(active[k].len(), ia.len() * ib.len());
        for (row, &j) in active[k].iter().enumerate() {
            for (ca, &ja) in ia.iter().enumerate() {
                for (cb, &jb) in ib.iter().enumerate() {
                    let mut idx = [0; 3];
                    idx[k] = j;
                    idx[a.index()] = ja;
                    idx[b.index()] = jb;
                    sub[(row, ca * ib.len() + cb)] = delta.get(idx);
                }
            }
        }
        let svd = leading_left_singular(&sub, config.ranks[k])?;
        let mut g = Matrix::zeros(dims[k], config.ranks[k]);
        for (i, &row) in active[k].iter().enumerate() {
            g.row_mut(row).copy_from(&svd.vectors.row(i));
        }
        gamma[k] = g;
        singular_values[k] = svd.values;
    }
    Ok(Estimate {
        active,
        gamma,
        singular_values,
        fallbacks,
    })
}

/// One sweep of thresholded SVD updates over modes 1, 2, 3.
pub fn iterate_step(delta: &Tensor3, gamma: &[Matrix; 3], config: &GlaaConfig) -> Result<Estimate> {
    let dims = delta.dims();
    for m in Mode::ALL {
        let g = &gamma[m.index()];
        if g.nrows() != dims[m.index()] || g.ncols() != config.ranks[m.index()] {
            return Err(GlaaError::dims(format!(
                "basis for mode {m} is {}x{}, expected {}x{}",
                g.nrows(),
                g.ncols(),
                dims[m.index()],
                config.ranks[m.index()]
            )));
        }
    }
    let mut gamma = gamma.clone();
    let mut active: [Vec<usize>; 3] = Default::default();
    let mut singular_values: [Vec<f64>; 3] = Default::default();
    let mut fallbacks = Vec::new();
    // Γ3 is unchanged until the mode-3 update, so modes 1 and 2 share `delta ×3 Γ3ᵀ`.
    let reduced = contract_third(delta, &gamma[2]);
    for m in Mode::ALL {
        let k = m.index();
        let unfolded = match m {
            Mode::One => unfold_first(&reduced, &gamma[1]),
            Mode::Two => unfold_second(&reduced, &gamma[0]),
            Mode::Three => unfold_third(delta, &gamma[0], &gamma[1]),
        };
        let criterion: Vec<f64> = unfolded.row_iter().map(|r| r.norm_squared()).collect();
        let (rows, count) = threshold_rows(&criterion, config.eta_tilde[k], config.ranks[k]);
        if count < config.ranks[k] {
            fallbacks.push((m, count));
        }
        let (g, s) = masked_left_singular(&unfolded, &rows, config.ranks[k])?;
        gamma[k] = g;
        singular_values[k] = s;
        active[k] = rows;
    }
    Ok(Estimate {
        active,
        gamma,
        singular_values,
        fallbacks,
    })
}

/// Output of [`fit`].
#[derive(Debug, Clone)]
pub struct GlaaFit {
    pub gamma: [Matrix; 3],
    /// Sorted 0-based active rows per mode.
    pub active: [Vec<usize>; 3],
    pub initial_active: [Vec<usize>; 3],
    pub delta_hat: Tensor3,
    pub singular_values: [Vec<f64>; 3],
    pub iterations: usize,
    pub converged: bool,
    /// `‖Δ̃ − Δ̂‖_F²`.
    pub objective: f64,
    pub fallbacks: Vec<FallbackEvent>,
    /// Stopping statistic per iteration, starting with the initialization.
    pub singular_value_norms: Vec<f64>,
}

impl GlaaFit {
    /// Relative violation of `‖Δ̃‖² = ‖Δ̂‖² + ‖Δ̃ − Δ̂‖²`.
    pub fn energy_defect(&self, delta: &Tensor3) -> f64 {
        let total = delta.norm_squared();
        if total == 0.0 {
            return (self.delta_hat.norm_squared() + self.objective).abs();
        }
        (total - self.delta_hat.norm_squared() - self.objective).abs() / total
    }
}

/// Full estimation: initialization followed by iterations until the stopping
/// statistic changes by less than `tol` or `max_iter` sweeps have run.
pub fn fit(delta: &Tensor3, config: &GlaaConfig) -> Result<GlaaFit> {
    let init = initialize(delta, config)?;
    fit_from(delta, &init, config)
}

/// Iterations starting from a given initialization. `config.eta` is not consulted.
pub fn fit_from(delta: &Tensor3, init: &Estimate, config: &GlaaConfig) -> Result<GlaaFit> {
    config.validate(delta.dims())?;
    let mut fallbacks: Vec<FallbackEvent> = init
        .fallbacks
        .iter()
        .map(|&(mode, selected)| FallbackEvent {
            iteration: 0,
            mode,
            selected,
        })
        .collect();
    let mut norms = vec![init.singular_value_norm()];
    let mut current = init.clone();
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=config.max_iter {
        let next = iterate_step(delta, &current.gamma, config)?;
        fallbacks.extend(next.fallbacks.iter().map(|&(mode, selected)| FallbackEvent {
            iteration: t,
            mode,
            selected,
        }));
        let s = next.singular_value_norm();
        let prev = *norms.last().expect("non-empty");
        norms.push(s);
        current = next;
        iterations = t;
        if (s - prev).abs() < config.tol {
            converged = true;
            break;
        }
    }
    let delta_hat = reconstruct(delta, &current.gamma)?;
    let objective = delta.sub(&delta_hat)?.norm_squared();
    Ok(GlaaFit {
        gamma: current.gamma,
        active: current.active,
        initial_active: init.active.clone(),
        delta_hat,
        singular_values: current.singular_values,
        iterations,
        converged,
        objective,
        fallbacks,
        singular_value_norms: norms,
    })
}

/// `Δ̃ ×1 P_{Γ1} ×2 P_{Γ2} ×3 P_{Γ3}`.
pub fn reconstruct(delta: &Tensor3, gamma: &[Matrix; 3]) -> Result<Tensor3> {
    let dims = delta.dims();
    for m in Mode::ALL {
        if gamma[m.index()].nrows() != dims[m.index()] {
            return Err(GlaaError::dims(format!(
                "basis for mode {m} has {} rows, tensor dim is {}",
                gamma[m.index()].nrows(),
                dims[m.index()]
            )));
        }
    }
    let orthonormal = gamma
        .iter()
        .all(|g| has_orthonormal_columns(g, ORTHONORMAL_TOL));
    let mut out = delta.clone();
    if orthonormal {
        // Shrink to the core first, then expand back.
        for m in Mode::ALL {
            out = mode_product(&out, &gamma[m.index()].transpose(), m)?;
        }
        for m in Mode::ALL {
            out = mode_product(&out, &gamma[m.index()], m)?;
        }
    } else {
        for m in Mode::ALL {
            out = mode_product(&out, &projection(&gamma[m.index()])?, m)?;
        }
    }
    Ok(out)
}

/// `Φ = Δ ×3 (Σ_Z + ridge·I)⁻¹`.
pub fn gla_tensor(delta: &Tensor3, sigma_z: &Matrix, ridge: f64) -> Result<Tensor3> {
    let p3 = delta.dim(Mode::Three);
    if sigma_z.shape() != (p3, p3) {
        return Err(GlaaError::dims(format!(
            "sigma_z is {}x{}, expected {p3}x{p3}",
            sigma_z.nrows(),
            sigma_z.ncols()
        )));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(GlaaError::invalid("ridge must be finite and nonnegative"));
    }
    let scale = sigma_z.abs().max().max(f64::MIN_POSITIVE);
    if (sigma_z - sigma_z.transpose()).abs().max() > 1e-10 * scale {
        return Err(GlaaError::invalid("sigma_z must be symmetric"));
    }
    let shifted = sigma_z + Matrix::identity(p3, p3) * ridge;
    let inv = spd_inverse(&shifted, 1e-12).map_err(|e| match e {
        GlaaError::Singular(msg) => GlaaError::Singular(format!(
            "covariance of Z plus ridge {ridge:e} is not positive definite ({msg})"
        )),
        other => other,
    })?;
    mode_product(delta, &inv, Mode::Three)
}

/// Ridge used when the plain inverse of `Σ_Z` fails: `1e-8 · trace(Σ_Z) / p3`.
pub fn default_ridge(sigma_z: &Matrix) -> f64 {
    1e-8 * sigma_z.trace() / sigma_z.nrows() as f64
}

/// [`gla_tensor`] without ridge, retrying with [`default_ridge`] when `Σ_Z` is
/// singular. Returns the tensor and the ridge that was applied.
pub fn gla_tensor_with_fallback(delta: &Tensor3, sigma_z: &Matrix) -> Result<(Tensor3, f64)> {
    match gla_tensor(delta, sigma_z, 0.0) {
        Ok(phi) => Ok((phi, 0.0)),
        Err(GlaaError::Singular(_)) => {
            let ridge = default_ridge(sigma_z);
            gla_tensor(delta, sigma_z, ridge).map(|phi| (phi, ridge))
        }
        Err(e) => Err(e),
    }
}

/// Sample covariance `n⁻¹ Zᵀ Z` of centered Z.
pub fn sample_covariance_z(data: &Dataset) -> Result<Matrix> {
    if !data.is_centered() {
        return Err(GlaaError::NotCentered);
    }
    Ok(data.z().transpose() * data.z() / data.n() as f64)
}

/// Thresholds `η_k = √(α log p / n)` and `η̃_k = α s_{-k} log p / n`, with
/// `p = p1 p2 p3` and `s_{-k}` the product of the other two sparsity levels.
pub fn theoretical_thresholds(
    n: usize,
    p_dims: [usize; 3],
    s_dims: [usize; 3],
    alpha: f64,
) -> ([f64; 3], [f64; 3]) {
    let log_p = (p_dims.iter().product::<usize>() as f64).ln();
    let base = alpha * log_p / n as f64;
    let eta = [base.sqrt(); 3];
    let mut eta_tilde = [0.0; 3];
    for m in Mode::ALL {
        let (a, b) = m.others();
        eta_tilde[m.index()] = base * (s_dims[a.index()] * s_dims[b.index()]) as f64;
    }
    (eta, eta_tilde)
}
