//! Generalized liquid association analysis.
//!
//! Estimates sparse, low-rank three-way association structure between three blocks of
//! variables `X`, `Y` and `Z` observed on the same units. The sample moment tensor
//! `Δ̃ = n⁻¹ Σ Xᵢ∘Yᵢ∘Zᵢ` is decomposed by an iterative hard-thresholding higher-order
//! SVD, giving row-sparse bases whose linear combinations `Γ̂₁ᵀX` and `Γ̂₂ᵀY` have the
//! association that changes most with `Γ̂₃ᵀZ`.
//!
//! Modules:
//! - [`tensor`]: dense order-3 tensors, unfoldings, mode products, truncated SVD.
//! - [`estimator`]: moment tensor, the thresholded iteration, reconstruction.
//! - [`tuning`]: train/test threshold selection.
//! - [`ula`]: the entrywise univariate liquid association baseline.
//! - [`simulation`]: scenario generators, recovery metrics and a replication harness.

pub mod error;
pub mod estimator;
pub mod simulation;
pub mod synthetic;
pub mod tensor;
pub mod tuning;
pub mod ula;

pub use error::{GlaaError, Result};
pub use estimator::{
    fit, gla_tensor, initialize, iterate_step, reconstruct, sample_delta, theoretical_thresholds,
    Dataset, GlaaConfig, GlaaFit,
};
pub use tensor::{matricize, mode_product, refold, Matrix, Mode, Tensor3};
