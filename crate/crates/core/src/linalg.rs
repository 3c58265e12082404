//! Sparse row-compressed matrices, dense vector helpers, soft thresholding and
//! the truncated SVD used to approximate `‖Ax‖²`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};

/// Above this column count the Gram-matrix eigendecomposition is replaced by
/// block subspace iteration.
pub const GRAM_DIM_LIMIT: usize = 5000;
pub const SUBSPACE_MAX_ITERS: usize = 100;
pub const SUBSPACE_TOL: f64 = 1e-8;
/// Spectral-energy fraction retained by the default truncation rule.
pub const DEFAULT_ENERGY_THRESHOLD: f64 = 0.995;

/// Row-compressed sparse matrix.
///
/// Column indices inside each row are strictly increasing and every stored
/// value is finite and nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from per-row `(column, value)` lists.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in rows {
            for (j, v) in row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self::from_csr(indptr.len() - 1, n_cols, indptr, indices, values)
    }

    /// Builds a matrix from raw CSR arrays, validating every invariant.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != n_rows + 1 || indptr[0] != 0 {
            return Err(Error::InvalidArgument(format!(
                "row pointer must have {} entries starting at 0",
                n_rows + 1
            )));
        }
        if indices.len() != values.len() || *indptr.last().unwrap() != indices.len() {
            return Err(Error::InvalidArgument(
                "row pointer, index and value arrays disagree".into(),
            ));
        }
        for i in 0..n_rows {
            let (lo, hi) = (indptr[i], indptr[i + 1]);
            if lo > hi {
                return Err(Error::InvalidArgument(format!("row {i}: decreasing row pointer")));
            }
            let cols = &indices[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "row {i}: column indices not strictly increasing"
                )));
            }
            if let Some(&j) = cols.last() {
                if j >= n_cols {
                    return Err(Error::IndexOutOfRange { index: j, len: n_cols });
                }
            }
            if let Some(v) = values[lo..hi].iter().find(|v| !v.is_finite() || **v == 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "row {i}: stored value {v} must be finite and nonzero"
                )));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    /// Dense row-major constructor; zeros are not stored.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut sparse = Vec::with_capacity(rows.len());
        for row in rows {
            check_len(n_cols, row.len())?;
            sparse.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect(),
            );
        }
        Self::from_rows(n_cols, sparse)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
            .expect("identity is well formed")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0 || self.n_cols == 0
    }

    /// Column indices and values of row `i`.
    ///
    /// Panics if `i` is out of range; use [`SparseMatrix::try_row`] for a
    /// checked variant.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn try_row(&self, i: usize) -> Result<(&[usize], &[f64])> {
        if i >= self.n_rows {
            return Err(Error::IndexOutOfRange { index: i, len: self.n_rows });
        }
        Ok(self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[usize], &[f64])> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row(i).1.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows()
            .map(|(cols, vals)| {
                let mut row = vec![0.0; self.n_cols];
                for (&j, &v) in cols.iter().zip(vals) {
                    row[j] = v;
                }
                row
            })
            .collect()
    }

    /// Computes `Aᵀy`.
    pub fn transpose_mul(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_rows, y.len())?;
        let mut out = vec![0.0; self.n_cols];
        for (i, (cols, vals)) in self.rows().enumerate() {
            if y[i] != 0.0 {
                sparse_axpy(y[i], cols, vals, &mut out);
            }
        }
        Ok(out)
    }
}

/// `sign(v)·max(|v| − tau, 0)`.
#[inline]
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    debug_assert!(tau >= 0.0);
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Sparse matrix-vector product `Ax`.
pub fn spmv(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    check_len(a.n_cols, x.len())?;
    Ok((0..a.n_rows).map(|i| sparse_dot(a.row(i), x)).collect())
}

/// `a_iᵀx` using only the stored entries of row `i`.
pub fn row_dot(a: &SparseMatrix, i: usize, x: &[f64]) -> Result<f64> {
    check_len(a.n_cols, x.len())?;
    Ok(sparse_dot(a.try_row(i)?, x))
}

#[inline]
pub(crate) fn sparse_dot((cols, vals): (&[usize], &[f64]), x: &[f64]) -> f64 {
    cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
}

#[inline]
pub(crate) fn sparse_axpy(alpha: f64, cols: &[usize], vals: &[f64], y: &mut [f64]) {
    for (&j, &v) in cols.iter().zip(vals) {
        y[j] += alpha * v;
    }
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm_sq(x: &[f64]) -> f64 {
    dot(x, x)
}

#[inline]
pub fn norm_l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Rank-r factor `S_r V_rᵀ` of a truncated SVD, stored row-major as `r × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankRFactors {
    r: usize,
    d: usize,
    factor: Vec<f64>,
    singular_values: Vec<f64>,
    energy_captured: f64,
}

impl RankRFactors {
    pub fn rank(&self) -> usize {
        self.r
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn energy_captured(&self) -> f64 {
        self.energy_captured
    }

    pub fn factor_row(&self, k: usize) -> &[f64] {
        &self.factor[k * self.d..(k + 1) * self.d]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdMethod {
    /// Gram eigendecomposition up to [`GRAM_DIM_LIMIT`] columns, subspace
    /// iteration beyond.
    Auto,
    Gram,
    Subspace,
}

/// Truncated SVD keeping the smallest rank whose squared singular values
/// reach `energy_threshold` of the total, capped at `r_max`.
pub fn partial_svd(a: &SparseMatrix, energy_threshold: f64, r_max: usize) -> Result<RankRFactors> {
    partial_svd_with(a, energy_threshold, r_max, SvdMethod::Auto)
}

pub fn partial_svd_with(
    a: &SparseMatrix,
    energy_threshold: f64,
    r_max: usize,
    method: SvdMethod,
) -> Result<RankRFactors> {
    if a.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    if !(energy_threshold > 0.0 && energy_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "energy threshold {energy_threshold} must lie in (0, 1]"
        )));
    }
    if r_max == 0 {
        return Err(Error::InvalidArgument("r_max must be at least 1".into()));
    }
    let d = a.n_cols;
    let r_cap = r_max.min(a.n_rows).min(d);
    let use_gram = match method {
        SvdMethod::Auto => d <= GRAM_DIM_LIMIT,
        SvdMethod::Gram => true,
        SvdMethod::Subspace => false,
    };
    let (sigma_sq, vectors, total) = if use_gram {
        gram_spectrum(a)
    } else {
        subspace_spectrum(a, r_cap)
    };

    if total <= 0.0 {
        // all-zero matrix: nothing to capture
        return Ok(RankRFactors {
            r: 1,
            d,
            factor: vec![0.0; d],
            singular_values: vec![0.0],
            energy_captured: 1.0,
        });
    }

    let mut cum = 0.0;
    let mut r = 0;
    while r < r_cap.min(sigma_sq.len()) {
        cum += sigma_sq[r];
        r += 1;
        if cum >= energy_threshold * total {
            break;
        }
    }
    let mut factor = Vec::with_capacity(r * d);
    let mut singular_values = Vec::with_capacity(r);
    for k in 0..r {
        let s = sigma_sq[k].sqrt();
        singular_values.push(s);
        factor.extend(vectors[k].iter().map(|v| s * v));
    }
    Ok(RankRFactors {
        r,
        d,
        factor,
        singular_values,
        energy_captured: (cum / total).min(1.0),
    })
}

/// Eigenpairs of `AᵀA` sorted by decreasing eigenvalue, plus their sum.
fn gram_spectrum(a: &SparseMatrix) -> (Vec<f64>, Vec<Vec<f64>>, f64) {
    let d = a.n_cols;
    let mut gram = DMatrix::<f64>::zeros(d, d);
    for (cols, vals) in a.rows() {
        for (p, (&j, &u)) in cols.iter().zip(vals).enumerate() {
            for (&k, &v) in cols[p..].iter().zip(&vals[p..]) {
                gram[(j, k)] += u * v;
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            gram[(j, k)] = gram[(k, j)];
        }
    }
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
    let sigma_sq: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let vectors = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    let total = sigma_sq.iter().sum();
    (sigma_sq, vectors, total)
}

/// Block subspace iteration on `AᵀA` with Rayleigh–Ritz extraction.
fn subspace_spectrum(a: &SparseMatrix, k: usize) -> (Vec<f64>, Vec<Vec<f64>>, f64) {
    let (n, d) = (a.n_rows, a.n_cols);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5bd);
    let mut q = DMatrix::<f64>::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
    q = q.qr().q();

    let apply_a = |q: &DMatrix<f64>| {
        let mut aq = DMatrix::<f64>::zeros(n, q.ncols());
        for (i, (cols, vals)) in a.rows().enumerate() {
            for c in 0..q.ncols() {
                aq[(i, c)] = cols.iter().zip(vals).map(|(&j, &v)| v * q[(j, c)]).sum();
            }
        }
        aq
    };
    let apply_at = |y: &DMatrix<f64>| {
        let mut z = DMatrix::<f64>::zeros(d, y.ncols());
        for (i, (cols, vals)) in a.rows().enumerate() {
            for c in 0..y.ncols() {
                let yi = y[(i, c)];
                for (&j, &v) in cols.iter().zip(vals) {
                    z[(j, c)] += v * yi;
                }
            }
        }
        z
    };

    let mut prev: Option<Vec<f64>> = None;
    let mut sigma_sq = vec![0.0; k];
    for _ in 0..SUBSPACE_MAX_ITERS {
        let z = apply_at(&apply_a(&q));
        q = z.qr().q();
        let aq = apply_a(&q);
        let small = aq.transpose() * &aq;
        let eig = SymmetricEigen::new(small);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&p, &r| eig.eigenvalues[r].total_cmp(&eig.eigenvalues[p]));
        let w = DMatrix::from_fn(k, k, |row, c| eig.eigenvectors[(row, order[c])]);
        q = &q * w;
        sigma_sq = order.iter().map(|&c| eig.eigenvalues[c].max(0.0)).collect();
        let sv: Vec<f64> = sigma_sq.iter().map(|s| s.sqrt()).collect();
        if let Some(p) = &prev {
            let change = max_abs_diff(p, &sv);
            if change <= SUBSPACE_TOL * (1.0 + sv[0]) {
                break;
            }
        }
        prev = Some(sv);
    }
    let vectors = (0..k).map(|c| q.column(c).iter().copied().collect()).collect();
    (sigma_sq, vectors, a.frobenius_sq())
}

/// `‖S_r V_rᵀ x‖²`, a lower approximation of `‖Ax‖²`.
pub fn approx_norm_ax_sq(f: &RankRFactors, x: &[f64]) -> Result<f64> {
    check_len(f.d, x.len())?;
    Ok((0..f.r).map(|k| dot(f.factor_row(k), x).powi(2)).sum())
}
