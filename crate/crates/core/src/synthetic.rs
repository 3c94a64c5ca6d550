//! Noiseless sparse Tucker tensors with known factors, for recovery checks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::tensor::{mode_product, orthonormalize, projected_unfolding, Matrix, Mode, Tensor3};

#[derive(Debug, Clone)]
pub struct SparseTucker {
    /// `core ×1 Γ1 ×2 Γ2 ×3 Γ3`.
    pub tensor: Tensor3,
    pub core: Tensor3,
    /// Row-sparse bases with orthonormal columns.
    pub gamma: [Matrix; 3],
    /// Sorted 0-based support of each basis.
    pub active: [Vec<usize>; 3],
}

impl SparseTucker {
    pub fn new(core: Tensor3, gamma: [Matrix; 3]) -> Result<Self> {
        let mut tensor = core.clone();
        for m in Mode::ALL {
            tensor = mode_product(&tensor, &gamma[m.index()], m)?;
        }
        let active = std::array::from_fn(|k| {
            (0..gamma[k].nrows())
                .filter(|&j| gamma[k].row(j).iter().any(|v| *v != 0.0))
                .collect()
        });
        Ok(SparseTucker {
            tensor,
            core,
            gamma,
            active,
        })
    }

    /// Gaussian core and random orthonormal factors supported on `supports[k]`
    /// randomly chosen rows. Requires `ranks[k] <= supports[k] <= dims[k]`.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        dims: [usize; 3],
        ranks: [usize; 3],
        supports: [usize; 3],
    ) -> Self {
        let gamma: [Matrix; 3] = std::array::from_fn(|k| {
            assert!(ranks[k] <= supports[k] && supports[k] <= dims[k]);
            let mut rows = rand::seq::index::sample(rng, dims[k], supports[k]).into_vec();
            rows.sort_unstable();
            let dense = Matrix::from_fn(supports[k], ranks[k], |_, _| rng.sample(StandardNormal));
            let q = orthonormalize(&dense).expect("Gaussian block has full column rank");
            let mut g = Matrix::zeros(dims[k], ranks[k]);
            for (i, &r) in rows.iter().enumerate() {
                g.row_mut(r).copy_from(&q.row(i));
            }
            g
        });
        let core = Tensor3::from_fn(ranks, |_| rng.sample(StandardNormal));
        SparseTucker::new(core, gamma).expect("conformal by construction")
    }

    /// Thresholds at half the weakest active-row signal of each mode: the row
    /// max-norm of the unfolding for initialization and the squared row norm of
    /// `Δ_k Γ_{-k}` for the iterations. Inactive rows are exactly zero, so both lie
    /// strictly inside the signal gap.
    pub fn gap_thresholds(&self) -> ([f64; 3], [f64; 3]) {
        let mut eta = [0.0; 3];
        let mut eta_tilde = [0.0; 3];
        let g = [&self.gamma[0], &self.gamma[1], &self.gamma[2]];
        for m in Mode::ALL {
            let k = m.index();
            let max_norms = self.tensor.slice_max_norms(m);
            let proj = projected_unfolding(&self.tensor, m, g).expect("conformal");
            let weakest = |vals: &dyn Fn(usize) -> f64| {
                self.active[k]
                    .iter()
                    .map(|&j| vals(j))
                    .fold(f64::INFINITY, f64::min)
            };
            eta[k] = 0.5 * weakest(&|j| max_norms[j]);
            eta_tilde[k] = 0.5 * weakest(&|j| proj.row(j).norm_squared());
        }
        (eta, eta_tilde)
    }
}
