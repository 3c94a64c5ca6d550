//! Dense order-3 tensors and the small amount of matrix algebra the estimator needs.
//!
//! # Layout
//!
//! A [`Tensor3`] of dimensions `(p1, p2, p3)` stores entry `(i1, i2, i3)` (0-based) at
//! flat offset `(i1 * p2 + i2) * p3 + i3`, i.e. row-major with the third index varying
//! fastest.
//!
//! # Matricization
//!
//! The mode-k unfolding is a `p_k x (prod of the other two dims)` matrix whose column
//! index follows the cyclic order of the remaining modes, last one fastest:
//!
//! | mode | row  | column            |
//! |------|------|-------------------|
//! | 1    | `i1` | `i2 * p3 + i3`    |
//! | 2    | `i2` | `i3 * p1 + i1`    |
//! | 3    | `i3` | `i1 * p2 + i2`    |
//!
//! With this ordering a Tucker tensor `C x1 G1 x2 G2 x3 G3` unfolds as
//! `G_k C_(k) G_{-k}^T` where `G_{-1} = G2 ⊗ G3`, `G_{-2} = G3 ⊗ G1` and
//! `G_{-3} = G1 ⊗ G2`. Note that `G_{-1} = G2 ⊗ G3` is the reverse of the
//! Kolda-Bader convention (`G3 ⊗ G2`); the two differ only by a column permutation.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{GlaaError, Result};

pub type Matrix = DMatrix<f64>;

/// Tolerance used to decide whether a basis already has orthonormal columns.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// One of the three tensor modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    /// 0-based position of the mode.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }

    /// Parse a 1-based mode number.
    pub fn from_number(k: usize) -> Result<Mode> {
        match k {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => Err(GlaaError::invalid(format!("mode must be 1, 2 or 3, got {k}"))),
        }
    }

    /// 1-based mode number.
    pub fn number(self) -> usize {
        self.index() + 1
    }

    /// The remaining two modes in cyclic order; the second varies fastest in
    /// the unfolding's column index.
    #[inline]
    pub fn others(self) -> (Mode, Mode) {
        match self {
            Mode::One => (Mode::Two, Mode::Three),
            Mode::Two => (Mode::Three, Mode::One),
            Mode::Three => (Mode::One, Mode::Two),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Flat storage offset of a tensor index.
#[inline]
pub fn flat_offset(dims: [usize; 3], idx: [usize; 3]) -> usize {
    (idx[0] * dims[1] + idx[1]) * dims[2] + idx[2]
}

/// Inverse of [`flat_offset`].
#[inline]
pub fn index_of_offset(dims: [usize; 3], offset: usize) -> [usize; 3] {
    let i3 = offset % dims[2];
    let rest = offset / dims[2];
    [rest / dims[1], rest % dims[1], i3]
}

/// `(row, column)` of a tensor index in the mode unfolding.
#[inline]
pub fn unfold_position(dims: [usize; 3], mode: Mode, idx: [usize; 3]) -> (usize, usize) {
    let (a, b) = mode.others();
    let (a, b) = (a.index(), b.index());
    (idx[mode.index()], idx[a] * dims[b] + idx[b])
}

/// Inverse of [`unfold_position`].
#[inline]
pub fn fold_position(dims: [usize; 3], mode: Mode, row: usize, col: usize) -> [usize; 3] {
    let (a, b) = mode.others();
    let mut idx = [0; 3];
    idx[mode.index()] = row;
    idx[a.index()] = col / dims[b.index()];
    idx[b.index()] = col % dims[b.index()];
    idx
}

fn strides(dims: [usize; 3]) -> [usize; 3] {
    [dims[1] * dims[2], dims[2], 1]
}

/// Dense real tensor of order three.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    dims: [usize; 3],
    values: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Tensor3 {
            dims,
            values: vec![0.0; dims.iter().product()],
        }
    }

    /// Wrap a flat buffer in the canonical layout.
    pub fn from_vec(dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(GlaaError::dims(format!("tensor dims must be positive, got {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if values.len() != expected {
            return Err(GlaaError::dims(format!(
                "tensor of dims {dims:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GlaaError::invalid("tensor entries must be finite"));
        }
        Ok(Tensor3 { dims, values })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut([usize; 3]) -> f64) -> Self {
        let n: usize = dims.iter().product();
        let values = (0..n).map(|o| f(index_of_offset(dims, o))).collect();
        Tensor3 { dims, values }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn dim(&self, mode: Mode) -> usize {
        self.dims[mode.index()]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, idx: [usize; 3]) -> f64 {
        self.values[flat_offset(self.dims, idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 3], v: f64) {
        let o = flat_offset(self.dims, idx);
        self.values[o] = v;
    }

    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(GlaaError::dims(format!(
                "tensor dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Tensor3 {
            dims: self.dims,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// `acc[i,j,k] += weight * x[i] * y[j] * z[k]`.
    pub fn outer_accumulate(&mut self, x: &[f64], y: &[f64], z: &[f64], weight: f64) -> Result<()> {
        if [x.len(), y.len(), z.len()] != self.dims {
            return Err(GlaaError::dims(format!(
                "outer product of lengths ({}, {}, {}) into tensor {:?}",
                x.len(),
                y.len(),
                z.len(),
                self.dims
            )));
        }
        let mut o = 0;
        for &xi in x {
            let wx = weight * xi;
            for &yj in y {
                let wxy = wx * yj;
                for &zk in z {
                    self.values[o] += wxy * zk;
                    o += 1;
                }
            }
        }
        Ok(())
    }

    /// Per-row max-norm of the mode unfolding: `max |t[.., j, ..]|` over each slice.
    pub fn slice_max_norms(&self, mode: Mode) -> Vec<f64> {
        let k = mode.index();
        let mut out = vec![0.0f64; self.dims[k]];
        for (o, v) in self.values.iter().enumerate() {
            let j = index_of_offset(self.dims, o)[k];
            out[j] = out[j].max(v.abs());
        }
        out
    }

    /// Zero every entry whose index falls outside the per-mode keep masks.
    pub fn masked(&self, keep: [&[bool]; 3]) -> Result<Tensor3> {
        for m in Mode::ALL {
            if keep[m.index()].len() != self.dims[m.index()] {
                return Err(GlaaError::dims(format!(
                    "mask for mode {m} has length {}, tensor dim is {}",
                    keep[m.index()].len(),
                    self.dims[m.index()]
                )));
            }
        }
        Ok(Tensor3::from_fn(self.dims, |[i, j, k]| {
            if keep[0][i] && keep[1][j] && keep[2][k] {
                self.get([i, j, k])
            } else {
                0.0
            }
        }))
    }
}

/// Mode-k unfolding in the convention documented at module level.
pub fn matricize(t: &Tensor3, mode: Mode) -> Matrix {
    let dims = t.dims;
    let rows = dims[mode.index()];
    let cols = t.values.len() / rows;
    let mut m = Matrix::zeros(rows, cols);
    for (o, &v) in t.values.iter().enumerate() {
        let (r, c) = unfold_position(dims, mode, index_of_offset(dims, o));
        m[(r, c)] = v;
    }
    m
}

/// Inverse of [`matricize`].
pub fn refold(m: &Matrix, mode: Mode, dims: [usize; 3]) -> Result<Tensor3> {
    let rows = dims[mode.index()];
    let total: usize = dims.iter().product();
    if rows == 0 || m.nrows() != rows || m.nrows() * m.ncols() != total {
        return Err(GlaaError::dims(format!(
            "{}x{} matrix cannot refold along mode {mode} into {dims:?}",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut t = Tensor3::zeros(dims);
    for c in 0..m.ncols() {
        for r in 0..rows {
            t.set(fold_position(dims, mode, r, c), m[(r, c)]);
        }
    }
    Ok(t)
}

/// Mode-k product `t x_k m`, replacing dimension `p_k` by `m.nrows()`.
pub fn mode_product(t: &Tensor3, m: &Matrix, mode: Mode) -> Result<Tensor3> {
    let k = mode.index();
    if m.ncols() != t.dims[k] {
        return Err(GlaaError::dims(format!(
            "mode-{mode} product needs {} columns, matrix has {}",
            t.dims[k],
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(GlaaError::dims("mode product with an empty matrix"));
    }
    let mut out_dims = t.dims;
    out_dims[k] = m.nrows();
    let (a, b) = mode.others();
    let (a, b) = (a.index(), b.index());
    let si = strides(t.dims);
    let so = strides(out_dims);
    // Factors here are mostly row-sparse bases, so all-zero columns of `m` are skipped.
    let cols: Vec<usize> = (0..m.ncols())
        .filter(|&j| m.column(j).iter().any(|v| *v != 0.0))
        .collect();
    let packed: Vec<f64> = (0..m.nrows())
        .flat_map(|r| cols.iter().map(move |&j| m[(r, j)]))
        .collect();
    let mut out = vec![0.0; out_dims.iter().product()];
    let mut fiber = vec![0.0; cols.len()];
    for ia in 0..t.dims[a] {
        for ib in 0..t.dims[b] {
            let base_in = ia * si[a] + ib * si[b];
            let base_out = ia * so[a] + ib * so[b];
            for (f, &j) in fiber.iter_mut().zip(&cols) {
                *f = t.values[base_in + j * si[k]];
            }
            for (r, row) in packed.chunks_exact(cols.len().max(1)).enumerate() {
                out[base_out + r * so[k]] = row.iter().zip(&fiber).map(|(x, f)| x * f).sum();
            }
        }
    }
    Ok(Tensor3 {
        dims: out_dims,
        values: out,
    })
}

/// `matricize(t, mode) * G_{-mode}` with `G_{-1} = G2 ⊗ G3` etc., computed by
/// contracting the two other modes with the factors instead of forming the Kronecker
/// product. Zero rows of those factors are skipped. The factor at position `mode` is
/// ignored.
pub fn projected_unfolding(t: &Tensor3, mode: Mode, factors: [&Matrix; 3]) -> Result<Matrix> {
    for m in Mode::ALL {
        let j = m.index();
        if m != mode && factors[j].nrows() != t.dims[j] {
            return Err(GlaaError::dims(format!(
                "mode-{m} factor has {} rows, tensor has {}",
                factors[j].nrows(),
                t.dims[j]
            )));
        }
    }
    let [g1, g2, g3] = factors;
    Ok(match mode {
        Mode::One => unfold_first(&contract_third(t, g3), g2),
        Mode::Two => unfold_second(&contract_third(t, g3), g1),
        Mode::Three => unfold_third(t, g1, g2),
    })
}

fn nonzero_rows(g: &Matrix) -> Vec<(usize, Vec<f64>)> {
    (0..g.nrows())
        .filter(|&i| g.row(i).iter().any(|v| *v != 0.0))
        .map(|i| (i, g.row(i).iter().copied().collect()))
        .collect()
}

/// `t ×3 G3ᵀ`, shared by the mode-1 and mode-2 criteria. Stored with `i2` fastest:
/// `values[(i1*r3 + j3)*p2 + i2]`.
pub(crate) struct ThirdContraction {
    p1: usize,
    p2: usize,
    r3: usize,
    values: Vec<f64>,
}

impl ThirdContraction {
    fn slice(&self, i1: usize, j3: usize) -> &[f64] {
        let start = (i1 * self.r3 + j3) * self.p2;
        &self.values[start..start + self.p2]
    }
}

pub(crate) fn contract_third(t: &Tensor3, g3: &Matrix) -> ThirdContraction {
    let [p1, p2, p3] = t.dims;
    let r3 = g3.ncols();
    let mut values = vec![0.0; p1 * p2 * r3];
    for i1 in 0..p1 {
        let slab = &t.values[i1 * p2 * p3..(i1 + 1) * p2 * p3];
        for (j3, w) in g3.column_iter().enumerate() {
            let w = w.as_slice();
            let dst = &mut values[(i1 * r3 + j3) * p2..(i1 * r3 + j3 + 1) * p2];
            for (d, f) in dst.iter_mut().zip(slab.chunks_exact(p3)) {
                *d = dot(f, w);
            }
        }
    }
    ThirdContraction { p1, p2, r3, values }
}

/// Dot product with four partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Mode-1 criterion matrix from `t ×3 G3ᵀ`: `p1 x (r2 r3)`, column `j2*r3+j3`.
pub(crate) fn unfold_first(c: &ThirdContraction, g2: &Matrix) -> Matrix {
    let (p1, r3) = (c.p1, c.r3);
    let r2 = g2.ncols();
    let mut out = Matrix::zeros(p1, r2 * r3);
    for (j2, w) in g2.column_iter().enumerate() {
        let w = w.as_slice();
        for j3 in 0..r3 {
            let mut col = out.column_mut(j2 * r3 + j3);
            for i1 in 0..p1 {
                col[i1] = dot(c.slice(i1, j3), w);
            }
        }
    }
    out
}

/// Mode-2 criterion matrix from `t ×3 G3ᵀ`: `p2 x (r3 r1)`, column `j3*r1+j1`.
pub(crate) fn unfold_second(c: &ThirdContraction, g1: &Matrix) -> Matrix {
    let (p2, r3) = (c.p2, c.r3);
    let r1 = g1.ncols();
    let mut out = vec![0.0; p2 * r3 * r1];
    for (i1, g) in nonzero_rows(g1) {
        for j3 in 0..r3 {
            let src = c.slice(i1, j3);
            for (j1, w) in g.iter().enumerate() {
                let dst = &mut out[(j3 * r1 + j1) * p2..(j3 * r1 + j1 + 1) * p2];
                for (o, v) in dst.iter_mut().zip(src) {
                    *o += w * v;
                }
            }
        }
    }
    Matrix::from_vec(p2, r3 * r1, out)
}

/// Mode-3 criterion matrix: `p3 x (r1 r2)`, column `j1*r2+j2`.
pub(crate) fn unfold_third(t: &Tensor3, g1: &Matrix, g2: &Matrix) -> Matrix {
    let [_, p2, p3] = t.dims;
    let (r1, r2) = (g1.ncols(), g2.ncols());
    let g2_rows = nonzero_rows(g2);
    // Column-major p3 x (r1 r2).
    let mut out = vec![0.0; p3 * r1 * r2];
    // b = slab(i1) ×2 G2ᵀ, column-major p3 x r2.
    let mut b = vec![0.0; p3 * r2];
    for (i1, g) in nonzero_rows(g1) {
        b.iter_mut().for_each(|v| *v = 0.0);
        for (i2, w2) in &g2_rows {
            let f = &t.values[(i1 * p2 + i2) * p3..(i1 * p2 + i2 + 1) * p3];
            for (col, w) in b.chunks_exact_mut(p3).zip(w2) {
                for (o, v) in col.iter_mut().zip(f) {
                    *o += w * v;
                }
            }
        }
        for (j1, w) in g.iter().enumerate() {
            for (j2, col) in b.chunks_exact(p3).enumerate() {
                let dst = &mut out[(j1 * r2 + j2) * p3..(j1 * r2 + j2 + 1) * p3];
                for (o, v) in dst.iter_mut().zip(col) {
                    *o += w * v;
                }
            }
        }
    }
    Matrix::from_vec(p3, r1 * r2, out)
}

const SVD_EPS: f64 = 5.0 * f64::EPSILON;

/// Leading left singular vectors together with their singular values.
#[derive(Debug, Clone)]
pub struct LeftSingular {
    pub vectors: Matrix,
    pub values: Vec<f64>,
}

/// Top-`r` left singular pairs with the sign of each vector fixed so that its
/// largest-magnitude entry is positive.
pub fn leading_left_singular(m: &Matrix, r: usize) -> Result<LeftSingular> {
    let available = m.nrows().min(m.ncols());
    if r == 0 || r > available {
        return Err(GlaaError::RankTooLarge {
            rank: r,
            available,
            context: format!("SVD of a {}x{} matrix", m.nrows(), m.ncols()),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GlaaError::Numerical("SVD input has non-finite entries".into()));
    }
    // Wide inputs are handled through the transpose so the bidiagonalization runs on
    // the tall side. A tolerance of exactly machine epsilon can stall the implicit
    // shifts on nearly rank-deficient inputs and return a wrong spectrum; nalgebra's
    // own default is used instead.
    let (u, values) = if m.ncols() > m.nrows() {
        let svd = SVD::try_new(m.transpose(), false, true, SVD_EPS, 0)
            .ok_or_else(|| GlaaError::Numerical("SVD did not converge".into()))?;
        let vt = svd.v_t.expect("requested v_t");
        (vt.transpose(), svd.singular_values)
    } else {
        let svd = SVD::try_new(m.clone(), true, false, SVD_EPS, 0)
            .ok_or_else(|| GlaaError::Numerical("SVD did not converge".into()))?;
        (svd.u.expect("requested u"), svd.singular_values)
    };
    let mut vectors = u.columns(0, r).into_owned();
    fix_column_signs(&mut vectors);
    Ok(LeftSingular {
        vectors,
        values: values.iter().take(r).copied().collect(),
    })
}

/// Top-`r` left singular vectors as a `rows x r` matrix with orthonormal columns.
pub fn top_left_singular(m: &Matrix, r: usize) -> Result<Matrix> {
    leading_left_singular(m, r).map(|s| s.vectors)
}

/// Flip each column so its largest-magnitude entry (first one on ties) is positive.
pub fn fix_column_signs(g: &mut Matrix) {
    for mut col in g.column_iter_mut() {
        let mut best = 0usize;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

pub fn has_orthonormal_columns(g: &Matrix, tol: f64) -> bool {
    let gram = g.transpose() * g;
    let n = gram.nrows();
    (0..n).all(|i| (0..n).all(|j| (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() <= tol))
}

/// Orthogonal projection onto the column span of `g`.
///
/// Uses `G G^T` when the columns are orthonormal and `G (G^T G)^{-1} G^T` otherwise.
pub fn projection(g: &Matrix) -> Result<Matrix> {
    if g.ncols() == 0 || g.nrows() == 0 {
        return Err(GlaaError::dims("projection of an empty basis"));
    }
    if has_orthonormal_columns(g, ORTHONORMAL_TOL) {
        return Ok(g * g.transpose());
    }
    let gram = g.transpose() * g;
    let inv = spd_inverse(&gram, 1e-12).map_err(|_| {
        GlaaError::Singular(format!(
            "basis with {} columns is rank deficient",
            g.ncols()
        ))
    })?;
    Ok(g * inv * g.transpose())
}

/// Inverse of a symmetric positive definite matrix; fails when the smallest
/// eigenvalue is at or below `rel_tol` times the largest.
pub fn spd_inverse(s: &Matrix, rel_tol: f64) -> Result<Matrix> {
    if !s.is_square() {
        return Err(GlaaError::dims("inverse of a non-square matrix"));
    }
    let eig = SymmetricEigen::new(s.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(min > rel_tol * max) || max == 0.0 {
        return Err(GlaaError::Singular(format!(
            "smallest eigenvalue {min:e} vs largest {max:e}"
        )));
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose())
}

/// Symmetric positive semi-definite square root via eigendecomposition.
pub fn sym_sqrt(s: &Matrix) -> Result<Matrix> {
    if !s.is_square() {
        return Err(GlaaError::dims("square root of a non-square matrix"));
    }
    let eig = SymmetricEigen::new(s.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if eig.eigenvalues.iter().any(|&v| v < -1e-12 * scale) {
        return Err(GlaaError::Singular("matrix is not positive semi-definite".into()));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Orthonormal basis of the column span of a full-column-rank `g` (thin QR).
pub fn orthonormalize(g: &Matrix) -> Result<Matrix> {
    let qr = g.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= 1e-12 * scale) || scale == 0.0 {
        return Err(GlaaError::Singular("basis is rank deficient".into()));
    }
    Ok(qr.q())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enumerated() -> Tensor3 {
        Tensor3::from_vec([2, 2, 2], (1..=8).map(f64::from).collect()).unwrap()
    }

    /// Brute-force index map written independently of the helpers above: the
    /// unfolding column for mode k enumerates the two other indices in the cyclic
    /// order (k+1, k+2) with the last one fastest.
    fn oracle_unfold(t: &Tensor3, mode: usize) -> Vec<Vec<f64>> {
        let d = t.dims();
        let (a, b) = ((mode + 1) % 3, (mode + 2) % 3);
        let mut rows = vec![vec![0.0; d[a] * d[b]]; d[mode]];
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let idx = [i, j, k];
                    rows[idx[mode]][idx[a] * d[b] + idx[b]] = t.values()[i * d[1] * d[2] + j * d[2] + k];
                }
            }
        }
        rows
    }

    #[test]
    fn enumerated_unfoldings_match_index_oracle() {
        let t = enumerated();
        // Frozen from the oracle: entries are 1 + 4*i1 + 2*i2 + i3.
        let frozen = [
            [[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]],
            [[1.0, 5.0, 2.0, 6.0], [3.0, 7.0, 4.0, 8.0]],
            [[1.0, 3.0, 5.0, 7.0], [2.0, 4.0, 6.0, 8.0]],
        ];
        for mode in Mode::ALL {
            let m = matricize(&t, mode);
            let oracle = oracle_unfold(&t, mode.index());
            for r in 0..2 {
                for c in 0..4 {
                    assert_eq!(m[(r, c)], oracle[r][c]);
                    assert_eq!(m[(r, c)], frozen[mode.index()][r][c]);
                }
            }
            assert_eq!(refold(&m, mode, [2, 2, 2]).unwrap(), t);
        }
    }

    #[test]
    fn zero_and_corner_cases() {
        let z = Tensor3::zeros([2, 2, 2]);
        for mode in Mode::ALL {
            let m = matricize(&z, mode);
            assert_eq!(m.shape(), (2, 4));
            assert!(m.iter().all(|v| *v == 0.0));
            assert_eq!(refold(&Matrix::zeros(2, 4), mode, [2, 2, 2]).unwrap(), z);
        }
        let mut c = Tensor3::zeros([2, 3, 4]);
        c.set([0, 0, 0], 1.0);
        for mode in Mode::ALL {
            let m = matricize(&c, mode);
            assert_eq!(m[(0, 0)], 1.0);
            assert_eq!(m.iter().filter(|v| **v != 0.0).count(), 1);
        }
    }

    #[test]
    fn refold_rejects_bad_shapes() {
        assert!(refold(&Matrix::zeros(3, 4), Mode::One, [2, 2, 2]).is_err());
        assert!(refold(&Matrix::zeros(2, 3), Mode::One, [2, 2, 2]).is_err());
    }

    #[test]
    fn mode_product_diagonal_scaling_matches_direct_sum() {
        let t = enumerated();
        let m = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let out = mode_product(&t, &m, Mode::One).unwrap();
        for a in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let direct: f64 = (0..2).map(|s| m[(a, s)] * t.get([s, j, k])).sum();
                    assert_eq!(out.get([a, j, k]), direct);
                }
            }
        }
        assert_eq!(out.get([0, 1, 1]), 2.0 * 4.0);
        assert_eq!(out.get([1, 1, 1]), 3.0 * 8.0);
    }

    #[test]
    fn mode_product_identity_zero_and_mismatch() {
        let t = enumerated();
        for mode in Mode::ALL {
            assert_eq!(mode_product(&t, &Matrix::identity(2, 2), mode).unwrap(), t);
            let z = mode_product(&t, &Matrix::zeros(3, 2), mode).unwrap();
            assert_eq!(z.dim(mode), 3);
            assert_eq!(z.max_abs(), 0.0);
        }
        assert!(mode_product(&t, &Matrix::zeros(2, 3), Mode::Two).is_err());
    }

    #[test]
    fn outer_accumulate_scalar_and_zero() {
        let mut acc = Tensor3::zeros([1, 1, 1]);
        acc.outer_accumulate(&[1.0], &[2.0], &[3.0], 1.0).unwrap();
        assert_eq!(acc.get([0, 0, 0]), 6.0);

        let mut t = enumerated();
        t.outer_accumulate(&[0.0; 2], &[0.0; 2], &[0.0; 2], 5.0).unwrap();
        assert_eq!(t, enumerated());
        assert!(t.outer_accumulate(&[0.0; 3], &[0.0; 2], &[0.0; 2], 1.0).is_err());
    }

    #[test]
    fn outer_accumulate_matches_triple_loop() {
        let x = [0.3, -1.2, 2.0];
        let y = [1.5, 0.25];
        let z = [-0.7, 0.1, 0.9, 4.0];
        let mut acc = Tensor3::from_fn([3, 2, 4], |[i, j, k]| (i + 2 * j + 3 * k) as f64);
        let before = acc.clone();
        acc.outer_accumulate(&x, &y, &z, 0.5).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..4 {
                    let want = before.get([i, j, k]) + 0.5 * x[i] * y[j] * z[k];
                    assert!((acc.get([i, j, k]) - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn nearly_rank_one_wide_matrix_keeps_its_spectrum() {
        // Hit during a noiseless fit: a machine-epsilon tolerance reported 1.67 here.
        let m = Matrix::from_row_slice(
            2,
            4,
            &[
                0.8105772004661435, 4.336808689942018e-17, -1.1015494072452725e-16, 0.4423917571241844,
                0.8668259783555603, 2.7755575615628914e-17, -1.1102230246251565e-16, 0.47309086347984924,
            ],
        );
        let s = leading_left_singular(&m, 1).unwrap();
        assert!((s.values[0] - m.norm()).abs() < 1e-12, "{:?} vs {}", s.values, m.norm());
    }

    #[test]
    fn singular_vectors_of_diagonal_and_rank_one() {
        let d = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let s = leading_left_singular(&d, 1).unwrap();
        assert!((s.vectors[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(s.vectors[(1, 0)].abs() < 1e-14);
        assert!((s.values[0] - 3.0).abs() < 1e-14);

        // u has its largest-magnitude entry negative, so the convention returns -u.
        let u = nalgebra::DVector::from_vec(vec![0.6, -0.8]);
        let v = nalgebra::DVector::from_vec(vec![1.0, 2.0, -2.0]);
        let m = &u * v.transpose();
        let g = top_left_singular(&m, 1).unwrap();
        assert!((g[(0, 0)] + 0.6).abs() < 1e-12);
        assert!((g[(1, 0)] - 0.8).abs() < 1e-12);

        assert!(top_left_singular(&m, 3).is_err());
        assert!(top_left_singular(&m, 0).is_err());
    }

    #[test]
    fn projection_examples() {
        let e1 = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert_eq!(projection(&e1).unwrap(), Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(projection(&Matrix::identity(4, 4)).unwrap(), Matrix::identity(4, 4));

        // Non-orthonormal but full rank: same projection as its orthonormalized span.
        let g = Matrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let p = projection(&g).unwrap();
        let q = projection(&orthonormalize(&g).unwrap()).unwrap();
        assert!((p - q).abs().max() < 1e-12);

        let deficient = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 0.0, 0.0]);
        assert!(projection(&deficient).is_err());
    }

    #[test]
    fn masked_and_slice_max_norms() {
        let t = enumerated();
        assert_eq!(t.slice_max_norms(Mode::One), vec![4.0, 8.0]);
        assert_eq!(t.slice_max_norms(Mode::Three), vec![7.0, 8.0]);
        let m = t.masked([&[true, false], &[true, true], &[false, true]]).unwrap();
        assert_eq!(m.values(), &[0.0, 2.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
