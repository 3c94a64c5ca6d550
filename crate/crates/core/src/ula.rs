//! Entrywise univariate liquid association baseline.
//!
//! Every `(X_i, Y_j, Z_k)` triplet gets its own sample LA: `X` and `Y` columns are
//! standardized, each `Z` column is replaced by its normal scores, and the entry is the
//! sample mean of the triple product. Subspaces come from a plain SVD of each
//! unfolding; variables are ranked by the row norm of that unfolding.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{GlaaError, Result};
use crate::estimator::{moment_tensor, Dataset};
use crate::tensor::{matricize, top_left_singular, Matrix, Mode, Tensor3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlaEstimate {
    pub phi_tilde: Tensor3,
    pub gamma: [Matrix; 3],
    /// Row indices (0-based) by descending row norm of each unfolding.
    pub ranked_rows: [Vec<usize>; 3],
}

impl UlaEstimate {
    /// The first `s[k]` ranked rows of each mode, sorted ascending.
    pub fn selected(&self, s: [usize; 3]) -> [Vec<usize>; 3] {
        std::array::from_fn(|k| {
            let mut rows = self.ranked_rows[k][..s[k].min(self.ranked_rows[k].len())].to_vec();
            rows.sort_unstable();
            rows
        })
    }
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Van der Waerden scores `Φ⁻¹(rank / (n + 1))`.
pub fn normal_score(z: &[f64]) -> Result<Vec<f64>> {
    let n = z.len();
    if n < 2 {
        return Err(GlaaError::TooFewObservations(format!(
            "normal scores need at least 2 values, got {n}"
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(GlaaError::invalid("non-finite value in column"));
    }
    if z.iter().all(|v| *v == z[0]) {
        return Err(GlaaError::invalid("constant column has no normal scores"));
    }
    let std_normal = Normal::standard();
    Ok(average_ranks(z)
        .into_iter()
        .map(|r| std_normal.inverse_cdf(r / (n as f64 + 1.0)))
        .collect())
}

/// Columns scaled to mean 0 and sample variance 1 (denominator `n - 1`).
pub fn standardize_columns(m: &Matrix, block: &str) -> Result<Matrix> {
    let n = m.nrows();
    if n < 2 {
        return Err(GlaaError::TooFewObservations(format!(
            "standardizing needs at least 2 rows, got {n}"
        )));
    }
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        let var = col.norm_squared() / (n - 1) as f64;
        if !(var > 0.0) || var.sqrt() <= 1e-12 * mean.abs().max(1.0) {
            return Err(GlaaError::invalid(format!(
                "column {} of {block} has zero variance",
                j + 1
            )));
        }
        col /= var.sqrt();
    }
    Ok(out)
}

/// `Φ̃[i,j,k] = n⁻¹ Σ_m x̃[m,i] ỹ[m,j] ζ[m,k]` on standardized `X`, `Y` and
/// normal-scored `Z`. Accepts centered or raw data.
pub fn ula_tensor(data: &Dataset) -> Result<Tensor3> {
    let x = standardize_columns(data.x(), "X")?;
    let y = standardize_columns(data.y(), "Y")?;
    let mut zeta = Matrix::zeros(data.n(), data.z().ncols());
    for (j, col) in data.z().column_iter().enumerate() {
        let z: Vec<f64> = col.iter().copied().collect();
        let scores = normal_score(&z).map_err(|e| match e {
            GlaaError::InvalidArgument(msg) => {
                GlaaError::InvalidArgument(format!("column {} of Z: {msg}", j + 1))
            }
            other => other,
        })?;
        zeta.column_mut(j).copy_from_slice(&scores);
    }
    moment_tensor(&x, &y, &zeta)
}

/// Per-mode SVD bases and norm rankings of `Φ̃`.
pub fn ula_estimate(phi_tilde: &Tensor3, ranks: [usize; 3]) -> Result<UlaEstimate> {
    let mut gamma: [Matrix; 3] = Default::default();
    let mut ranked_rows: [Vec<usize>; 3] = Default::default();
    for m in Mode::ALL {
        let k = m.index();
        if ranks[k] == 0 || ranks[k] > phi_tilde.dim(m) {
            return Err(GlaaError::RankTooLarge {
                rank: ranks[k],
                available: phi_tilde.dim(m),
                context: format!("mode {m}"),
            });
        }
        let unfolded = matricize(phi_tilde, m);
        gamma[k] = top_left_singular(&unfolded, ranks[k])?;
        let norms: Vec<f64> = unfolded.row_iter().map(|r| r.norm()).collect();
        ranked_rows[k] = rank_by_norm(&norms);
    }
    Ok(UlaEstimate {
        phi_tilde: phi_tilde.clone(),
        gamma,
        ranked_rows,
    })
}

/// Indices by descending value, ties to the smaller index.
pub fn rank_by_norm(norms: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::sample_delta;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Standard normal quantile by bisection on a Simpson-rule CDF, independent of
    /// the library quantile function.
    fn quantile_oracle(p: f64) -> f64 {
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let cdf = |x: f64| {
            let steps = 2000;
            let h = x / steps as f64;
            let mut acc = pdf(0.0) + pdf(x);
            for i in 1..steps {
                acc += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            0.5 + acc * h / 3.0
        };
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn three_point_scores() {
        let q = quantile_oracle(0.75);
        assert!((q - 0.6744897501960817).abs() < 1e-9);
        let s = normal_score(&[5.0, -1.0, 2.0]).unwrap();
        assert!((s[0] - q).abs() < 1e-9);
        assert!((s[1] + q).abs() < 1e-9);
        assert!(s[2].abs() < 1e-15);
    }

    #[test]
    fn scores_are_rank_invariant_and_symmetric() {
        let z = [0.3, -2.0, 1.5, 0.1, 7.0, -0.4, 2.2];
        let a = normal_score(&z).unwrap();
        let b = normal_score(&z.map(|v: f64| v.exp() * 3.0 + 1.0)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn ties_share_average_rank() {
        assert_eq!(average_ranks(&[2.0, 1.0, 2.0, 3.0]), vec![2.5, 1.0, 2.5, 4.0]);
        let s = normal_score(&[2.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s[0], s[2]);
        assert!(matches!(
            normal_score(&[1.0, 1.0, 1.0]),
            Err(GlaaError::InvalidArgument(_))
        ));
        assert!(normal_score(&[1.0]).is_err());
    }

    #[test]
    fn scalar_case_matches_moment_tensor() {
        let x = Matrix::from_column_slice(4, 1, &[1.0, 2.0, 0.5, -1.0]);
        let y = Matrix::from_column_slice(4, 1, &[0.2, -0.3, 1.0, 0.4]);
        let z = Matrix::from_column_slice(4, 1, &[3.0, 1.0, 4.0, 2.0]);
        let phi = ula_tensor(&Dataset::new(x.clone(), y.clone(), z.clone()).unwrap()).unwrap();

        let xs = standardize_columns(&x, "X").unwrap();
        let ys = standardize_columns(&y, "Y").unwrap();
        let zs: Vec<f64> = normal_score(z.as_slice()).unwrap();
        let want: f64 = (0..4).map(|i| xs[i] * ys[i] * zs[i]).sum::<f64>() / 4.0;
        assert!((phi.get([0, 0, 0]) - want).abs() < 1e-14);
        // Normal scores of 4 distinct values are centered, so the same value comes
        // out of the centered moment tensor.
        let zeta = Matrix::from_column_slice(4, 1, &zs);
        let d = Dataset::centered(xs, ys, zeta).unwrap();
        assert!((sample_delta(&d).unwrap().get([0, 0, 0]) - want).abs() < 1e-14);
    }

    #[test]
    fn standardized_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Matrix::from_fn(30, 4, |_, j| {
            let e: f64 = StandardNormal.sample(&mut rng);
            3.0 * j as f64 + e * (j + 1) as f64
        });
        let s = standardize_columns(&m, "X").unwrap();
        for c in s.column_iter() {
            assert!(c.sum().abs() / 30.0 < 1e-10);
            assert!((c.norm_squared() / 29.0 - 1.0).abs() < 1e-8);
        }
        let constant = Matrix::from_element(5, 1, 2.0);
        assert!(standardize_columns(&constant, "Y").is_err());
    }

    #[test]
    fn sign_flip_flips_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut draw = |c| Matrix::from_fn(25, c, |_, _| StandardNormal.sample(&mut rng));
        let (x, y, z) = (draw(3), draw(2), draw(2));
        let a = ula_tensor(&Dataset::new(x.clone(), y.clone(), z.clone()).unwrap()).unwrap();
        let mut xf = x;
        xf.column_mut(1).neg_mut();
        let b = ula_tensor(&Dataset::new(xf, y, z).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..2 {
                    let s = if i == 1 { -1.0 } else { 1.0 };
                    assert!((b.get([i, j, k]) - s * a.get([i, j, k])).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn null_entries_are_small() {
        let n = 400;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut draw = |c| Matrix::from_fn(n, c, |_, _| StandardNormal.sample(&mut rng));
        let (x, y, z) = (draw(10), draw(10), draw(2));
        let phi = ula_tensor(&Dataset::new(x, y, z).unwrap()).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        let inside = phi.values().iter().filter(|v| v.abs() < bound).count();
        assert!(inside as f64 / phi.values().len() as f64 >= 0.97);
    }

    #[test]
    fn rank_one_recovered() {
        let u = [0.6, 0.8, 0.0];
        let v = [0.0, 1.0];
        let w = [0.28, 0.96];
        let t = Tensor3::from_fn([3, 2, 2], |[i, j, k]| 2.0 * u[i] * v[j] * w[k]);
        let est = ula_estimate(&t, [1, 1, 1]).unwrap();
        let col = |k: usize| est.gamma[k].column(0).iter().copied().collect::<Vec<_>>();
        for (g, truth) in [(col(0), &u[..]), (col(1), &v[..]), (col(2), &w[..])] {
            let dot: f64 = g.iter().zip(truth).map(|(a, b)| a * b).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-12);
        }
        assert_eq!(est.ranked_rows[0], vec![1, 0, 2]);
    }

    #[test]
    fn ranking_ties_and_oracle() {
        assert_eq!(rank_by_norm(&[0.0, 5.0, 3.0]), vec![1, 2, 0]);
        assert_eq!(rank_by_norm(&[1.0, 2.0, 1.0, 2.0]), vec![1, 3, 0, 2]);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vals: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>();
        let got = rank_by_norm(&vals);
        // Selection-sort oracle.
        let mut left: Vec<usize> = (0..50).collect();
        let mut want = Vec::new();
        while !left.is_empty() {
            let mut best = 0;
            for (pos, &i) in left.iter().enumerate() {
                if vals[i] > vals[left[best]] {
                    best = pos;
                }
            }
            want.push(left.remove(best));
        }
        assert_eq!(got, want);
    }
}
