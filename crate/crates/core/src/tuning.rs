//! Threshold selection by train/test prediction of the moment tensor.
//!
//! The data are split once (or several times) at random, the estimator is run on the
//! training moment tensor for every candidate threshold combination, and each
//! candidate is scored by how much of the held-out moment tensor its bases fail to
//! explain: `‖Δ̃test − Δ̃test ×1 P₁ ×2 P₂ ×3 P₃‖_F`.
//!
//! Initialization thresholds are not searched by default; they are set from the
//! training tensor so that a fixed fraction of rows survives in each mode.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GlaaError, Result};
use crate::estimator::{
    fit_from, initialize, reconstruct, sample_delta, Dataset, Estimate, GlaaConfig, GlaaFit,
};
use crate::tensor::{projected_unfolding, Matrix, Mode, Tensor3};

/// Candidate thresholds and split settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    /// Per-mode iteration-threshold candidates. `None` builds the default grid from
    /// the training data.
    pub eta_tilde_candidates: Option<[Vec<f64>; 3]>,
    /// Number of log-spaced values per mode in the default grid (zero is added).
    pub grid_size: usize,
    /// Quantile levels of the initialization criterion spanned by the default grid.
    pub grid_quantiles: (f64, f64),
    /// Modes whose default grid is searched; the others get the single candidate 0.
    pub search_modes: [bool; 3],
    /// Fraction of observations in the training side.
    pub split_fraction: f64,
    pub seed: u64,
    /// Fraction of rows kept per mode by the initialization thresholds.
    pub init_keep_fraction: f64,
    /// When set, initialization thresholds are searched over these per-mode lists
    /// instead of being derived from `init_keep_fraction`.
    pub init_eta_candidates: Option<[Vec<f64>; 3]>,
    /// Number of independent splits; losses are averaged over splits.
    pub repeats: usize,
    /// How tuned iteration thresholds carry over to the full-data refit.
    pub transfer: ThresholdTransfer,
}

/// Carrying tuned thresholds from the training side (`n_train` rows) to all `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdTransfer {
    /// Use the tuned values as they are.
    Absolute,
    /// Multiply by `n_train / n`, matching the `1/n` scale of the criterion's noise
    /// floor.
    SampleSize,
}

impl Default for TuningGrid {
    fn default() -> Self {
        TuningGrid {
            eta_tilde_candidates: None,
            grid_size: 8,
            grid_quantiles: (0.1, 0.9),
            search_modes: [true; 3],
            split_fraction: 0.5,
            seed: 0,
            init_keep_fraction: 0.5,
            init_eta_candidates: None,
            repeats: 1,
            transfer: ThresholdTransfer::SampleSize,
        }
    }
}

impl TuningGrid {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(GlaaError::invalid("split fraction must lie in (0, 1)"));
        }
        if !(self.init_keep_fraction > 0.0 && self.init_keep_fraction <= 1.0) {
            return Err(GlaaError::invalid("init keep fraction must lie in (0, 1]"));
        }
        if self.repeats == 0 {
            return Err(GlaaError::invalid("repeats must be at least 1"));
        }
        if self.eta_tilde_candidates.is_none() && self.grid_size == 0 {
            return Err(GlaaError::invalid("grid size must be at least 1"));
        }
        let (lo, hi) = self.grid_quantiles;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(GlaaError::invalid("grid quantiles must satisfy 0 <= lo <= hi <= 1"));
        }
        for lists in [&self.eta_tilde_candidates, &self.init_eta_candidates]
            .into_iter()
            .flatten()
        {
            for (k, list) in lists.iter().enumerate() {
                if list.is_empty() {
                    return Err(GlaaError::invalid(format!(
                        "candidate list for mode {} is empty",
                        k + 1
                    )));
                }
                if list.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(GlaaError::invalid("thresholds must be finite and nonnegative"));
                }
            }
        }
        train_size(n, self.split_fraction).map(|_| ())
    }
}

fn train_size(n: usize, fraction: f64) -> Result<usize> {
    let n_train = (n as f64 * fraction + 1e-9).floor() as usize;
    if n_train < 2 || n.saturating_sub(n_train) < 2 {
        return Err(GlaaError::TooFewObservations(format!(
            "splitting {n} observations at {fraction} leaves {n_train} / {} rows",
            n.saturating_sub(n_train)
        )));
    }
    Ok(n_train)
}

/// Seeded random partition into `floor(n * fraction)` training rows and the rest.
/// Each side is centered on its own.
pub fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train_rows, test_rows) = split_indices(data.n(), fraction, seed)?;
    Ok((
        data.select_rows(&train_rows)?.center()?,
        data.select_rows(&test_rows)?.center()?,
    ))
}

/// Row indices of the two sides of [`split`], each sorted ascending.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(GlaaError::invalid("split fraction must lie in (0, 1)"));
    }
    let n_train = train_size(n, fraction)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Per-mode initialization thresholds at the `(1 - keep)` empirical quantile of the
/// row max-norms, so that about `keep * p_k` rows pass the strict threshold.
pub fn init_eta_from_quantile(delta: &Tensor3, keep_fraction: f64) -> Result<[f64; 3]> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(GlaaError::invalid("keep fraction must lie in (0, 1]"));
    }
    let mut eta = [0.0; 3];
    for m in Mode::ALL {
        let mut norms = delta.slice_max_norms(m);
        norms.sort_by(f64::total_cmp);
        let p = norms.len();
        eta[m.index()] = if keep_fraction >= 1.0 {
            // Just below the smallest norm; clamped so thresholds stay nonnegative.
            let min = norms[0];
            (min - f64::EPSILON * min.abs().max(f64::MIN_POSITIVE)).max(0.0)
        } else {
            let q = 1.0 - keep_fraction;
            let pos = ((q * p as f64 - 1e-9).ceil() as usize).clamp(1, p) - 1;
            norms[pos]
        };
    }
    Ok(eta)
}

/// Held-out discrepancy `‖Δ̃test − Δ̃test ×1 P₁ ×2 P₂ ×3 P₃‖_F`.
pub fn loss(delta_test: &Tensor3, gamma_train: &[Matrix; 3]) -> Result<f64> {
    let projected = reconstruct(delta_test, gamma_train)?;
    Ok(delta_test.sub(&projected)?.frobenius_norm())
}

/// Default per-mode candidates: `size` log-spaced values between the `quantiles`
/// of the squared row norms of `Δ̃_k Γ̂_{-k}` at the initialization, plus zero.
/// Modes with `p_k == r_k` or not in `search` get `[0]`.
pub fn default_eta_tilde_grid(
    delta: &Tensor3,
    init: &Estimate,
    ranks: [usize; 3],
    size: usize,
    quantiles: (f64, f64),
    search: [bool; 3],
) -> Result<[Vec<f64>; 3]> {
    let mut grid: [Vec<f64>; 3] = Default::default();
    let g = [&init.gamma[0], &init.gamma[1], &init.gamma[2]];
    for m in Mode::ALL {
        let k = m.index();
        let mut list = vec![0.0];
        if search[k] && delta.dim(m) > ranks[k] {
            let unfolded = projected_unfolding(delta, m, g)?;
            let mut crit: Vec<f64> = unfolded.row_iter().map(|r| r.norm_squared()).collect();
            crit.sort_by(f64::total_cmp);
            let hi = linear_quantile(&crit, quantiles.1);
            let mut lo = linear_quantile(&crit, quantiles.0);
            if hi > 0.0 {
                if !(lo > 0.0) || lo >= hi {
                    lo = hi * 1e-3;
                }
                list.extend(log_spaced(lo, hi, size));
            }
        }
        grid[k] = list;
    }
    Ok(grid)
}

fn linear_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn log_spaced(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    if size == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..size)
        .map(|i| (a + (b - a) * i as f64 / (size - 1) as f64).exp())
        .collect()
}

fn cartesian(lists: &[Vec<f64>; 3]) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(lists.iter().map(Vec::len).product());
    for &a in &lists[0] {
        for &b in &lists[1] {
            for &c in &lists[2] {
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// One scored candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningEntry {
    pub eta: [f64; 3],
    pub eta_tilde: [f64; 3],
    /// Held-out loss averaged over splits; `None` if any fit for it failed.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub best_eta_tilde: [f64; 3],
    pub best_loss: f64,
    /// Every candidate in grid order.
    pub loss_table: Vec<TuningEntry>,
    /// Initialization thresholds of the winning candidate (first split).
    pub chosen_init_eta: [f64; 3],
    /// `(candidate index, message)` for failed fits.
    pub failures: Vec<(usize, String)>,
    /// Worst relative violation of the energy identity over all candidate fits.
    pub max_energy_defect: f64,
}

/// Grid search over threshold candidates. `base` supplies the ranks and the
/// stopping rule; its thresholds are ignored.
pub fn tune(data: &Dataset, base: &GlaaConfig, grid: &TuningGrid) -> Result<TuningResult> {
    grid.validate(data.n())?;
    let ranks = base.ranks;
    let mut eta_tilde_lists = grid.eta_tilde_candidates.clone();
    let mut candidates: Vec<TuningEntry> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut failures: Vec<(usize, String)> = Vec::new();
    let mut max_energy_defect = 0.0f64;

    for rep in 0..grid.repeats {
        let seed = grid.seed.wrapping_add(rep as u64);
        let (train, test) = split(data, grid.split_fraction, seed)?;
        let delta_train = sample_delta(&train)?;
        let delta_test = sample_delta(&test)?;
        let etas = match &grid.init_eta_candidates {
            Some(lists) => cartesian(lists),
            None => vec![init_eta_from_quantile(&delta_train, grid.init_keep_fraction)?],
        };
        let mut idx = 0;
        for eta in etas {
            let cfg = base.clone().with_eta(eta);
            let init = initialize(&delta_train, &cfg)?;
            if eta_tilde_lists.is_none() {
                eta_tilde_lists = Some(default_eta_tilde_grid(
                    &delta_train,
                    &init,
                    ranks,
                    grid.grid_size,
                    grid.grid_quantiles,
                    grid.search_modes,
                )?);
            }
            for eta_tilde in cartesian(eta_tilde_lists.as_ref().expect("set above")) {
                if rep == 0 {
                    candidates.push(TuningEntry {
                        eta,
                        eta_tilde,
                        loss: Some(0.0),
                    });
                    sums.push(0.0);
                }
                let cfg = cfg.clone().with_eta_tilde(eta_tilde);
                let outcome = fit_from(&delta_train, &init, &cfg).and_then(|f| {
                    max_energy_defect = max_energy_defect.max(f.energy_defect(&delta_train));
                    loss(&delta_test, &f.gamma)
                });
                match outcome {
                    Ok(l) => sums[idx] += l,
                    Err(e) => {
                        candidates[idx].loss = None;
                        failures.push((idx, e.to_string()));
                    }
                }
                idx += 1;
            }
        }
    }

    let reps = grid.repeats as f64;
    for (entry, sum) in candidates.iter_mut().zip(&sums) {
        if entry.loss.is_some() {
            entry.loss = Some(sum / reps);
        }
    }
    let best = select_best(&candidates).ok_or_else(|| {
        GlaaError::Tuning(format!(
            "all {} candidate fits failed: {}",
            candidates.len(),
            failures
                .iter()
                .map(|(i, e)| format!("#{i}: {e}"))
                .collect::<Vec<_>>()
                .join("; ")
        ))
    })?;
    let winner = &candidates[best];
    Ok(TuningResult {
        best_eta_tilde: winner.eta_tilde,
        best_loss: winner.loss.expect("selected entries have a loss"),
        chosen_init_eta: winner.eta,
        loss_table: candidates,
        failures,
        max_energy_defect,
    })
}

/// Index of the smallest loss; near-ties go to the larger total threshold, then to
/// the earlier candidate.
fn select_best(entries: &[TuningEntry]) -> Option<usize> {
    let min = entries
        .iter()
        .filter_map(|e| e.loss)
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let tie = 1e-12 * min.abs().max(1e-300);
    let size = |e: &TuningEntry| e.eta_tilde.iter().chain(&e.eta).sum::<f64>();
    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        let Some(l) = e.loss else { continue };
        if l - min > tie {
            continue;
        }
        match best {
            Some(b) if size(e) <= size(&entries[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Refit on the full (centered) data at the tuned iteration thresholds. The
/// initialization thresholds are recomputed from the full moment tensor with the
/// grid's keep fraction, or taken from the tuning result when they were searched.
pub fn refit(
    data: &Dataset,
    base: &GlaaConfig,
    grid: &TuningGrid,
    tuned: &TuningResult,
) -> Result<GlaaFit> {
    let centered = if data.is_centered() {
        data.clone()
    } else {
        data.center()?
    };
    let delta = sample_delta(&centered)?;
    let cfg = refit_config(&delta, centered.n(), base, grid, tuned)?;
    crate::estimator::fit(&delta, &cfg)
}

/// Configuration used by [`refit`], given the full-data moment tensor of `n`
/// observations.
pub fn refit_config(
    delta: &Tensor3,
    n: usize,
    base: &GlaaConfig,
    grid: &TuningGrid,
    tuned: &TuningResult,
) -> Result<GlaaConfig> {
    let eta = if grid.init_eta_candidates.is_some() {
        tuned.chosen_init_eta
    } else {
        init_eta_from_quantile(delta, grid.init_keep_fraction)?
    };
    let scale = match grid.transfer {
        ThresholdTransfer::Absolute => 1.0,
        ThresholdTransfer::SampleSize => train_size(n, grid.split_fraction)? as f64 / n as f64,
    };
    Ok(base
        .clone()
        .with_eta(eta)
        .with_eta_tilde(tuned.best_eta_tilde.map(|v| v * scale)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::SparseTucker;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_dataset(n: usize, dims: [usize; 3], seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |c| Matrix::from_fn(n, c, |_, _| StandardNormal.sample(&mut rng));
        let x = draw(dims[0]);
        let y = draw(dims[1]);
        let z = draw(dims[2]);
        Dataset::new(x, y, z).unwrap()
    }

    #[test]
    fn split_partition_contract() {
        let (a, b) = split_indices(10, 0.5, 7).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.5, 7).unwrap(), (a, b));

        let (a, b) = split_indices(100, 0.7, 1).unwrap();
        assert_eq!((a.len(), b.len()), (70, 30));

        assert!(matches!(
            split_indices(3, 0.5, 0),
            Err(GlaaError::TooFewObservations(_))
        ));
    }

    #[test]
    fn split_recenters_each_side() {
        let d = gaussian_dataset(20, [2, 2, 2], 1);
        let (tr, te) = split(&d, 0.5, 3).unwrap();
        assert!(tr.is_centered() && te.is_centered());
        for c in tr.x().column_iter().chain(te.z().column_iter()) {
            assert!(c.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_thresholds() {
        // Mode-1 row max-norms (4, 3, 2, 1).
        let t = Tensor3::from_vec([4, 1, 1], vec![4.0, -3.0, 2.0, 1.0]).unwrap();
        let eta = init_eta_from_quantile(&t, 0.5).unwrap();
        assert_eq!(eta[0], 2.0);
        let kept: Vec<f64> = [4.0, 3.0, 2.0, 1.0].into_iter().filter(|v| *v > eta[0]).collect();
        assert_eq!(kept, vec![4.0, 3.0]);

        let all = init_eta_from_quantile(&t, 1.0).unwrap();
        assert!(all[0] < 1.0 && all[0] > 0.999);
        assert!(init_eta_from_quantile(&t, 0.0).is_err());
    }

    #[test]
    fn quantile_survivor_count_matches_counting_oracle() {
        let t = Tensor3::from_fn([37, 11, 5], |[i, j, k]| {
            ((i * 31 + j * 17 + k * 7) % 101) as f64 / 13.0 - 3.0 + (i as f64) * 0.01
        });
        for keep in [0.1, 0.25, 0.5, 0.8] {
            let eta = init_eta_from_quantile(&t, keep).unwrap();
            for m in Mode::ALL {
                let norms = t.slice_max_norms(m);
                let survivors = norms.iter().filter(|v| **v > eta[m.index()]).count() as i64;
                let want = (keep * norms.len() as f64).round() as i64;
                assert!((survivors - want).abs() <= 1, "mode {m} keep {keep}: {survivors} vs {want}");
            }
        }
    }

    #[test]
    fn loss_examples() {
        let t = Tensor3::from_fn([3, 2, 2], |[i, j, k]| (i + 3 * j) as f64 - k as f64 * 2.5);
        let ident = [Matrix::identity(3, 3), Matrix::identity(2, 2), Matrix::identity(2, 2)];
        assert!(loss(&t, &ident).unwrap() < 1e-12);

        // Tensor supported on e1 in mode 1; a basis orthogonal to it annihilates.
        let s = Tensor3::from_fn([3, 2, 2], |[i, j, k]| if i == 0 { (j + k + 1) as f64 } else { 0.0 });
        let e2 = Matrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let g = [e2, Matrix::identity(2, 2), Matrix::identity(2, 2)];
        assert!((loss(&s, &g).unwrap() - s.frobenius_norm()).abs() < 1e-12);

        let g = [
            crate::tensor::orthonormalize(&Matrix::from_column_slice(3, 1, &[1.0, 2.0, -1.0])).unwrap(),
            Matrix::from_column_slice(2, 1, &[0.6, 0.8]),
            Matrix::identity(2, 2),
        ];
        let l = loss(&t, &g).unwrap();
        let proj = reconstruct(&t, &g).unwrap().norm_squared();
        assert!((l * l + proj - t.norm_squared()).abs() < 1e-8 * t.norm_squared());
    }

    #[test]
    fn single_candidate_is_returned() {
        let d = gaussian_dataset(40, [4, 3, 2], 5);
        let grid = TuningGrid {
            eta_tilde_candidates: Some([vec![0.01], vec![0.0], vec![0.0]]),
            ..TuningGrid::default()
        };
        let res = tune(&d, &GlaaConfig::new([1, 1, 1]), &grid).unwrap();
        assert_eq!(res.loss_table.len(), 1);
        assert_eq!(res.best_eta_tilde, [0.01, 0.0, 0.0]);
        assert_eq!(Some(res.best_loss), res.loss_table[0].loss);
    }

    #[test]
    fn tuning_is_deterministic_and_exhaustive() {
        let d = gaussian_dataset(60, [6, 5, 3], 9);
        let grid = TuningGrid::default().with_seed(42);
        let cfg = GlaaConfig::new([2, 2, 1]);
        let a = tune(&d, &cfg, &grid).unwrap();
        let b = tune(&d, &cfg, &grid).unwrap();
        assert_eq!(a, b);
        // Mode 3 has p3 = 3 > r3, so every mode gets zero plus eight candidates.
        assert_eq!(a.loss_table.len(), 9 * 9 * 9);
        let min = a.loss_table.iter().filter_map(|e| e.loss).fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_loss, min);
    }

    #[test]
    fn tie_break_prefers_larger_thresholds() {
        let e = |t: f64, l: f64| TuningEntry {
            eta: [0.0; 3],
            eta_tilde: [t, 0.0, 0.0],
            loss: Some(l),
        };
        assert_eq!(select_best(&[e(0.1, 1.0), e(0.5, 1.0), e(0.3, 1.0)]), Some(1));
        assert_eq!(select_best(&[e(0.1, 0.9), e(0.5, 1.0)]), Some(0));
        let none = TuningEntry { loss: None, ..e(0.0, 0.0) };
        assert_eq!(select_best(&[none]), None);
    }

    /// Data whose sample moment tensor is an exact sparse Tucker tensor: a Rademacher
    /// design makes every split reproduce the same population structure.
    #[test]
    fn recovery_window_candidate_beats_oversized_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let st = SparseTucker::random(&mut rng, [10, 8, 3], [1, 1, 1], [3, 3, 1]);
        let (_, gap) = st.gap_thresholds();
        // Observations x = ±u, y = ±v, z = ±w with x·y·z sign pattern fixed, so that
        // E(x∘y∘z) ∝ u∘v∘w and every half-sample reproduces it.
        let u = st.gamma[0].column(0);
        let v = st.gamma[1].column(0);
        let w = st.gamma[2].column(0);
        let n = 16;
        let signs: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let a = if i % 2 == 0 { 1.0 } else { -1.0 };
                let b = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
                [a, b, a * b]
            })
            .collect();
        let x = Matrix::from_fn(n, 10, |i, j| signs[i][0] * u[j]);
        let y = Matrix::from_fn(n, 8, |i, j| signs[i][1] * v[j]);
        let z = Matrix::from_fn(n, 3, |i, j| signs[i][2] * w[j]);
        let d = Dataset::new(x, y, z).unwrap();
        let grid = TuningGrid {
            eta_tilde_candidates: Some([vec![1e6, gap[0]], vec![gap[1]], vec![gap[2]]]),
            init_keep_fraction: 1.0,
            ..TuningGrid::default()
        };
        let res = tune(&d, &GlaaConfig::new([1, 1, 1]), &grid).unwrap();
        assert_eq!(res.best_eta_tilde[0], gap[0]);
    }
}
