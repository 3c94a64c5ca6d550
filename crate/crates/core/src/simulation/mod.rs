//! Simulation scenarios with known truth.
//!
//! `Z ~ N(0, I)`, and given `Z` the pair `(X, Y)` is jointly normal with marginal
//! covariances `Σ_X`, `Σ_Y` and cross-covariance `Γ1 f(Γ3ᵀZ) Γ2ᵀ`, where `f` is a
//! diagonal `r × r` matrix of odd functions of the scalar index `Γ3ᵀZ`.
//!
//! Random streams: every replication draws from `ChaCha8Rng::seed_from_u64(seed)`
//! with the stream number set to the replication index, so any replication can be
//! regenerated on its own. Within an observation `Z` is drawn first, then the
//! `p1 + p2` standard normals for `(X, Y)`.

mod harness;
mod metrics;

pub use harness::{
    aggregate, default_d_modes, run_replication, run_replications, AggregateRow, MeanSe,
    MethodName, ReplicationOutcome, SimulationOptions,
};
pub use metrics::{evaluate, subspace_distance, tpr_fpr, MetricsReport};

use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GlaaError, Result};
use crate::estimator::Dataset;
use crate::tensor::{orthonormalize, sym_sqrt, Matrix};

/// Shape of the diagonal association functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FKind {
    /// `f_j(a) = ρ_j sign(a)` with `sign(0) = 0`.
    Sign,
    /// `f_j(a) = ρ_j (2 / (1 + e^{-2ξa}) − 1) = ρ_j tanh(ξa)`.
    Sigmoid { xi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub p: [usize; 3],
    /// Active-set sizes; the active rows are the first `s_k` of each mode.
    pub s: [usize; 3],
    /// True ranks. `r1 = r2 ∈ {1, 2}` and `r3 = 1`.
    pub ranks: [usize; 3],
    pub f_kind: FKind,
    /// Magnitudes `ρ_1, …, ρ_r` of the diagonal of `f`.
    pub rho: Vec<f64>,
    pub ar_coefficient: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    fn base(n: usize, p: [usize; 3]) -> Self {
        ScenarioSpec {
            n,
            p,
            s: [5, 5, if p[2] == 1 { 1 } else { 5 }],
            ranks: [2, 2, 1],
            f_kind: FKind::Sign,
            rho: vec![0.95, 0.85],
            ar_coefficient: 0.3,
            seed: 0,
        }
    }

    /// Growing `p1 = p2`, `p3 = 1`, `n = 500`.
    pub fn scenario1(p12: usize) -> Self {
        Self::base(500, [p12, p12, 1])
    }

    /// `p1 = p2 = 100`, growing `p3` with five active `Z` variables, `n = 500`.
    pub fn scenario2(p3: usize) -> Self {
        Self::base(500, [100, 100, p3])
    }

    /// `p1 = 100`, `p2 = 25`, `p3 = 1`, growing `n`.
    pub fn scenario3(n: usize) -> Self {
        Self::base(n, [100, 25, 1])
    }

    /// Preset by number with its default size parameter: 1 → p1 = p2 = 100,
    /// 2 → p3 = 20, 3 → n = 160.
    pub fn preset(scenario: u8) -> Result<Self> {
        match scenario {
            1 => Ok(Self::scenario1(100)),
            2 => Ok(Self::scenario2(20)),
            3 => Ok(Self::scenario3(160)),
            other => Err(GlaaError::invalid(format!("unknown scenario {other}"))),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(GlaaError::TooFewObservations(format!("n = {}", self.n)));
        }
        for k in 0..3 {
            if self.p[k] == 0 || self.s[k] == 0 || self.s[k] > self.p[k] {
                return Err(GlaaError::invalid(format!(
                    "mode {}: need 1 <= s <= p, got s = {}, p = {}",
                    k + 1,
                    self.s[k],
                    self.p[k]
                )));
            }
            if self.ranks[k] == 0 || self.ranks[k] > self.s[k] {
                return Err(GlaaError::RankTooLarge {
                    rank: self.ranks[k],
                    available: self.s[k],
                    context: format!("true rank of mode {} vs its active set", k + 1),
                });
            }
        }
        let r = self.ranks[0];
        if self.ranks[1] != r || !(1..=2).contains(&r) || self.ranks[2] != 1 {
            return Err(GlaaError::invalid(format!(
                "supported true ranks are (r, r, 1) with r in {{1, 2}}, got {:?}",
                self.ranks
            )));
        }
        if self.rho.len() != r {
            return Err(GlaaError::invalid(format!(
                "need {r} association magnitudes, got {}",
                self.rho.len()
            )));
        }
        if self.rho.iter().any(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
            return Err(GlaaError::invalid(format!("rho must lie in [0, 1], got {:?}", self.rho)));
        }
        if let FKind::Sigmoid { xi } = self.f_kind {
            if !(xi.is_finite() && xi > 0.0) {
                return Err(GlaaError::invalid(format!("xi must be positive, got {xi}")));
            }
        }
        if !(self.ar_coefficient.is_finite() && self.ar_coefficient.abs() < 1.0) {
            return Err(GlaaError::invalid("AR coefficient must lie in (-1, 1)"));
        }
        Ok(())
    }

    fn describe_f(&self) -> String {
        match self.f_kind {
            FKind::Sign => format!("sign design with rho = {:?}", self.rho),
            FKind::Sigmoid { xi } => format!("sigmoid design with rho = {:?}, xi = {xi}", self.rho),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Orthonormalized bases, for scoring.
    pub gamma: [Matrix; 3],
    /// Bases as used by the generator (`Σ^{1/2}(O; 0)`), not orthonormal in general.
    pub gamma_raw: [Matrix; 3],
    /// 0-based active rows `{0, …, s_k − 1}`.
    pub active: [Vec<usize>; 3],
    pub sigma_x: Matrix,
    pub sigma_y: Matrix,
}

/// `p × p` block diagonal: AR(`coeff`) on the leading `s × s` block, identity after.
pub fn sigma_ar_block(s: usize, p: usize, coeff: f64) -> Matrix {
    Matrix::from_fn(p, p, |i, j| {
        if i < s && j < s {
            coeff.powi((i as i32 - j as i32).abs())
        } else if i == j {
            1.0
        } else {
            0.0
        }
    })
}

/// `s × r` matrix with columns `1_s/√s` and, for `r = 2`, `(0, …, 0, −1, 1)/√2`.
fn o_matrix(s: usize, r: usize) -> Matrix {
    let mut o = Matrix::zeros(s, r);
    o.column_mut(0).fill(1.0 / (s as f64).sqrt());
    if r == 2 {
        o[(s - 2, 1)] = -std::f64::consts::FRAC_1_SQRT_2;
        o[(s - 1, 1)] = std::f64::consts::FRAC_1_SQRT_2;
    }
    o
}

fn padded(o: &Matrix, p: usize) -> Matrix {
    let mut g = Matrix::zeros(p, o.ncols());
    g.view_mut((0, 0), (o.nrows(), o.ncols())).copy_from(o);
    g
}

pub fn build_truth(spec: &ScenarioSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let [p1, p2, p3] = spec.p;
    let [s1, s2, s3] = spec.s;
    let r = spec.ranks[0];
    let sigma_x = sigma_ar_block(s1, p1, spec.ar_coefficient);
    let sigma_y = sigma_ar_block(s2, p2, spec.ar_coefficient);
    let g1 = sym_sqrt(&sigma_x)? * padded(&o_matrix(s1, r), p1);
    let g2 = sym_sqrt(&sigma_y)? * padded(&o_matrix(s2, r), p2);
    let g3 = padded(&o_matrix(s3, 1), p3);
    let gamma_raw = [g1, g2, g3];
    let gamma = [
        orthonormalize(&gamma_raw[0])?,
        orthonormalize(&gamma_raw[1])?,
        orthonormalize(&gamma_raw[2])?,
    ];
    Ok(GroundTruth {
        gamma,
        gamma_raw,
        active: [(0..s1).collect(), (0..s2).collect(), (0..s3).collect()],
        sigma_x,
        sigma_y,
    })
}

fn sign(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Diagonal `f(a)` for the scalar index `a = Γ3ᵀz`.
pub fn f_matrix(a: f64, spec: &ScenarioSpec) -> Matrix {
    let scale = match spec.f_kind {
        FKind::Sign => sign(a),
        FKind::Sigmoid { xi } => 2.0 / (1.0 + (-2.0 * xi * a).exp()) - 1.0,
    };
    Matrix::from_diagonal(&nalgebra::DVector::from_iterator(
        spec.rho.len(),
        spec.rho.iter().map(|r| r * scale),
    ))
}

fn smallest_eigenvalue(m: &Matrix) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Builds the conditional covariances and their Cholesky factors.
struct Sampler<'a> {
    spec: &'a ScenarioSpec,
    truth: &'a GroundTruth,
    /// `min(λmin Σ_X, λmin Σ_Y)`.
    marginal_floor: f64,
    cache: [Option<Matrix>; 3],
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a ScenarioSpec, truth: &'a GroundTruth) -> Self {
        let marginal_floor =
            smallest_eigenvalue(&truth.sigma_x).min(smallest_eigenvalue(&truth.sigma_y));
        Sampler {
            spec,
            truth,
            marginal_floor,
            cache: [None, None, None],
        }
    }

    /// `Σᵢ = D [[I, ÕFÕᵀ], [·ᵀ, I]] D` with `D = bdiag(Σ_X^{1/2}, Σ_Y^{1/2})` and
    /// orthonormal `Õ`, so `λmin(Σᵢ) ≥ λmin(D)² (1 − max|f|)`.
    fn check_pd(&self, f: &Matrix) -> Result<()> {
        let max_f = f.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bound = self.marginal_floor * (1.0 - max_f);
        if bound > 1e-10 {
            Ok(())
        } else {
            Err(GlaaError::Singular(format!(
                "conditional covariance is not positive definite under the {} (eigenvalue bound {bound:e})",
                self.spec.describe_f()
            )))
        }
    }

    fn factor(&self, a: f64) -> Result<Matrix> {
        let f = f_matrix(a, self.spec);
        self.check_pd(&f)?;
        let sigma = conditional_covariance(self.truth, &f);
        Cholesky::new(sigma).map(|c| c.l()).ok_or_else(|| {
            GlaaError::Singular(format!(
                "Cholesky factorization failed under the {}",
                self.spec.describe_f()
            ))
        })
    }

    fn factor_for(&mut self, a: f64) -> Result<Matrix> {
        match self.spec.f_kind {
            FKind::Sign => {
                let slot = (sign(a) + 1.0) as usize;
                if self.cache[slot].is_none() {
                    self.cache[slot] = Some(self.factor(a)?);
                }
                Ok(self.cache[slot].clone().expect("filled above"))
            }
            FKind::Sigmoid { .. } => self.factor(a),
        }
    }
}

/// `[[Σ_X, Γ1 F Γ2ᵀ], [Γ2 Fᵀ Γ1ᵀ, Σ_Y]]` with the generator's bases.
pub fn conditional_covariance(truth: &GroundTruth, f: &Matrix) -> Matrix {
    let p1 = truth.sigma_x.nrows();
    let p2 = truth.sigma_y.nrows();
    let cross = &truth.gamma_raw[0] * f * truth.gamma_raw[1].transpose();
    let mut sigma = Matrix::zeros(p1 + p2, p1 + p2);
    sigma.view_mut((0, 0), (p1, p1)).copy_from(&truth.sigma_x);
    sigma.view_mut((p1, p1), (p2, p2)).copy_from(&truth.sigma_y);
    sigma.view_mut((0, p1), (p1, p2)).copy_from(&cross);
    sigma.view_mut((p1, 0), (p2, p1)).copy_from(&cross.transpose());
    sigma
}

/// Generator for replication `rep` of a sweep with base seed `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Draws one dataset from `spec.seed` (stream 0). The data are not centered.
pub fn generate(spec: &ScenarioSpec) -> Result<(Dataset, GroundTruth)> {
    generate_with(spec, &mut replication_rng(spec.seed, 0))
}

/// Checks that every possible conditional covariance of the design is positive
/// definite. For the sigmoid design `|f| < ρ`, so the sign bound is conservative.
pub fn check_design(spec: &ScenarioSpec) -> Result<GroundTruth> {
    let truth = build_truth(spec)?;
    let sampler = Sampler::new(spec, &truth);
    match spec.f_kind {
        FKind::Sign => sampler.check_pd(&f_matrix(1.0, spec))?,
        FKind::Sigmoid { .. } => {
            let sup = Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(&spec.rho));
            // ρ = 1 is allowed for the sigmoid: |f| never reaches it for finite a.
            if spec.rho.iter().all(|r| *r < 1.0) {
                sampler.check_pd(&sup)?;
            }
        }
    }
    Ok(truth)
}

pub fn generate_with<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Result<(Dataset, GroundTruth)> {
    let truth = build_truth(spec)?;
    let [p1, p2, p3] = spec.p;
    let n = spec.n;
    let mut sampler = Sampler::new(spec, &truth);
    let g3 = truth.gamma_raw[2].column(0).clone_owned();
    let mut x = Matrix::zeros(n, p1);
    let mut y = Matrix::zeros(n, p2);
    let mut z = Matrix::zeros(n, p3);
    let mut w = nalgebra::DVector::<f64>::zeros(p1 + p2);
    for i in 0..n {
        for k in 0..p3 {
            z[(i, k)] = rng.sample(StandardNormal);
        }
        let a = z.row(i).transpose().dot(&g3);
        let l = sampler.factor_for(a)?;
        for v in w.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let xy = l * &w;
        x.row_mut(i).copy_from(&xy.rows(0, p1).transpose());
        y.row_mut(i).copy_from(&xy.rows(p1, p2).transpose());
    }
    Ok((Dataset::new(x, y, z)?, truth))
}

/// `√(2/π) (Γ1 diag(ρ) Γ2ᵀ) ∘ Γ3` for the sign design, using the generator's bases.
pub fn sign_population_moment(spec: &ScenarioSpec, truth: &GroundTruth) -> crate::tensor::Tensor3 {
    let rho = Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(&spec.rho));
    let m = &truth.gamma_raw[0] * rho * truth.gamma_raw[1].transpose();
    let g3 = truth.gamma_raw[2].column(0);
    let c = (2.0 / std::f64::consts::PI).sqrt();
    crate::tensor::Tensor3::from_fn(spec.p, |[i, j, k]| c * m[(i, j)] * g3[k])
}
