//! Replication runner: generate, tune and fit, score both methods.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_design, evaluate, generate_with, replication_rng, MetricsReport, ScenarioSpec};
use crate::error::Result;
use crate::estimator::{sample_delta, GlaaConfig};
use crate::tensor::Mode;
use crate::tuning::{refit, tune, TuningGrid};
use crate::ula::{ula_estimate, ula_tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Tuning settings; the split seed is replaced per replication.
    pub grid: TuningGrid,
    pub max_iter: usize,
    pub tol: f64,
    /// Ranks given to both methods; defaults to the true ranks.
    pub fit_ranks: Option<[usize; 3]>,
    /// Modes averaged into `D`; defaults to [`default_d_modes`].
    pub d_modes: Option<Vec<Mode>>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            grid: TuningGrid::default(),
            max_iter: GlaaConfig::DEFAULT_MAX_ITER,
            tol: GlaaConfig::DEFAULT_TOL,
            fit_ranks: None,
            d_modes: None,
        }
    }
}

/// Modes with `p_k > r_k`. When `p_k == r_k` every basis spans the whole space and
/// the distance is identically zero, so it only dilutes the average.
pub fn default_d_modes(spec: &ScenarioSpec) -> Vec<Mode> {
    Mode::ALL
        .into_iter()
        .filter(|m| spec.p[m.index()] > spec.ranks[m.index()])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub rep: usize,
    pub glaa: MetricsReport,
    pub ula: MetricsReport,
    pub iterations: usize,
    pub converged: bool,
    pub init_eta: [f64; 3],
    pub eta_tilde: [f64; 3],
    /// Worst energy-identity violation over the tuning fits and the final fit.
    pub energy_defect: f64,
    pub fallbacks: usize,
}

pub fn run_replication(
    spec: &ScenarioSpec,
    options: &SimulationOptions,
    rep: usize,
) -> Result<ReplicationOutcome> {
    let mut rng = replication_rng(spec.seed, rep as u64);
    let (data, truth) = generate_with(spec, &mut rng)?;
    let ranks = options.fit_ranks.unwrap_or(spec.ranks);
    let modes = options
        .d_modes
        .clone()
        .unwrap_or_else(|| default_d_modes(spec));

    let mut base = GlaaConfig::new(ranks);
    base.max_iter = options.max_iter;
    base.tol = options.tol;
    let grid = TuningGrid {
        seed: rng.random(),
        ..options.grid.clone()
    };
    let centered = data.center()?;
    let tuned = tune(&centered, &base, &grid)?;
    let fit = refit(&centered, &base, &grid, &tuned)?;
    let delta = sample_delta(&centered)?;
    let glaa = evaluate(&fit.gamma, &fit.active, &truth, &modes)?;

    let ula = ula_estimate(&ula_tensor(&data)?, ranks)?;
    let ula_metrics = evaluate(&ula.gamma, &ula.selected(spec.s), &truth, &modes)?;

    Ok(ReplicationOutcome {
        rep,
        glaa,
        ula: ula_metrics,
        iterations: fit.iterations,
        converged: fit.converged,
        init_eta: fit_init_eta(&fit, &tuned, &grid, &delta)?,
        eta_tilde: tuned.best_eta_tilde,
        energy_defect: tuned.max_energy_defect.max(fit.energy_defect(&delta)),
        fallbacks: fit.fallbacks.len(),
    })
}

fn fit_init_eta(
    _fit: &crate::estimator::GlaaFit,
    tuned: &crate::tuning::TuningResult,
    grid: &TuningGrid,
    delta: &crate::tensor::Tensor3,
) -> Result<[f64; 3]> {
    if grid.init_eta_candidates.is_some() {
        Ok(tuned.chosen_init_eta)
    } else {
        crate::tuning::init_eta_from_quantile(delta, grid.init_keep_fraction)
    }
}

/// Replications `0..reps` in order. The design is checked before any replication.
pub fn run_replications(
    spec: &ScenarioSpec,
    options: &SimulationOptions,
    reps: usize,
) -> Result<Vec<ReplicationOutcome>> {
    check_design(spec)?;
    (0..reps).map(|rep| run_replication(spec, options, rep)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodName {
    Glaa,
    Ula,
}

impl MethodName {
    pub fn label(self) -> &'static str {
        match self {
            MethodName::Glaa => "GLAA",
            MethodName::Ula => "ULA",
        }
    }
}

/// Mean and standard error (`sd / √reps`, sample sd).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> MeanSe {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        MeanSe { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: MethodName,
    pub reps: usize,
    pub tpr1: MeanSe,
    pub fpr1: MeanSe,
    pub tpr2: MeanSe,
    pub fpr2: MeanSe,
    pub d: MeanSe,
    /// Set when `reps == 1` and the standard errors are reported as 0.
    pub se_undefined: bool,
}

/// One row per method, in replication order.
pub fn aggregate(outcomes: &[ReplicationOutcome]) -> Vec<AggregateRow> {
    [MethodName::Glaa, MethodName::Ula]
        .into_iter()
        .map(|method| {
            let pick = |f: &dyn Fn(&MetricsReport) -> f64| -> MeanSe {
                let vals: Vec<f64> = outcomes
                    .iter()
                    .map(|o| match method {
                        MethodName::Glaa => f(&o.glaa),
                        MethodName::Ula => f(&o.ula),
                    })
                    .collect();
                MeanSe::of(&vals)
            };
            AggregateRow {
                method,
                reps: outcomes.len(),
                tpr1: pick(&|m| m.tpr[0]),
                fpr1: pick(&|m| m.fpr[0]),
                tpr2: pick(&|m| m.tpr[1]),
                fpr2: pick(&|m| m.fpr[1]),
                d: pick(&|m| m.d_avg),
                se_undefined: outcomes.len() < 2,
            }
        })
        .collect()
}
