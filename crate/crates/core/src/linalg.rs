//! Dense kernels behind the Gaussian scorers: mean, covariance, Cholesky
//! factorization, triangular solves and the Mahalanobis quadratic form.
//!
//! Everything runs in `f64`. Inverses are never formed explicitly; every
//! `Σ⁻¹ v` goes through the Cholesky factor.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};

/// Rows accumulated per task when building a covariance. Fixed so the
/// reduction order (and hence the result bits) never depends on the pool size.
const COV_BLOCK_ROWS: usize = 256;

/// Dense row-major matrix. Used both for embedding batches (one example
/// per row) and for small square matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// An `N × d` batch of embeddings, one example per row.
pub type EmbeddingMatrix = Matrix;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from row slices. An empty slice gives a `0 × 0` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Empty batch with a known width.
    pub fn empty(cols: usize) -> Self {
        Matrix {
            rows: 0,
            cols,
            data: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Selects a subset of rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows == 0 {
            return Ok(other.clone());
        }
        if other.rows == 0 {
            return Ok(self.clone());
        }
        check_dim(self.cols, other.cols)?;
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Symmetric matrix that is expected to be positive definite. Symmetry is
/// enforced on construction; definiteness is only confirmed by [`cholesky`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix(Matrix);

impl SpdMatrix {
    /// Accepts a square matrix that is symmetric to within `1e-9` relative
    /// and mirrors its upper triangle so the stored matrix is exactly
    /// symmetric.
    pub fn new(m: Matrix) -> Result<Self> {
        check_dim(m.nrows(), m.ncols())?;
        let scale = m
            .data
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut m = m;
        let d = m.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > 1e-9 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
                m[(j, i)] = a;
            }
        }
        if !m.all_finite() {
            return Err(Error::NonFiniteInput);
        }
        Ok(SpdMatrix(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Lower-triangular `L` with `L·Lᵀ = Σ` and a strictly positive diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactor {
    lower: Matrix,
}

impl CholeskyFactor {
    /// Wraps an existing lower-triangular factor (e.g. one read back from
    /// disk). Entries above the diagonal must be zero and the diagonal
    /// strictly positive.
    pub fn from_lower(lower: Matrix) -> Result<Self> {
        check_dim(lower.nrows(), lower.ncols())?;
        let d = lower.nrows();
        for i in 0..d {
            let diag = lower[(i, i)];
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: i,
                    value: diag,
                });
            }
            for j in (i + 1)..d {
                if lower[(i, j)] != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "factor has a nonzero entry above the diagonal at ({i}, {j})"
                    )));
                }
            }
        }
        if !lower.all_finite() {
            return Err(Error::NonFiniteInput);
        }
        Ok(CholeskyFactor { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// `L·Lᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let d = self.dim();
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let s: f64 = (0..=j)
                    .map(|k| self.lower[(i, k)] * self.lower[(j, k)])
                    .sum();
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        m
    }

    /// Solves `L·v = b`.
    pub fn forward_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), b.len())?;
        let mut v = b.to_vec();
        forward_substitute(&self.lower, &mut v);
        Ok(v)
    }

    /// Solves `L·Lᵀ·x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut v = self.forward_solve(b)?;
        let d = self.dim();
        for i in (0..d).rev() {
            let mut s = v[i];
            for (k, vk) in v.iter().enumerate().skip(i + 1) {
                s -= self.lower[(k, i)] * vk;
            }
            v[i] = s / self.lower[(i, i)];
        }
        Ok(v)
    }

    /// `log det(L·Lᵀ)`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim())
            .map(|i| self.lower[(i, i)].ln())
            .sum::<f64>()
    }
}

fn forward_substitute(lower: &Matrix, v: &mut [f64]) {
    let d = lower.nrows();
    for i in 0..d {
        let row = lower.row(i);
        let mut s = v[i];
        for k in 0..i {
            s -= row[k] * v[k];
        }
        v[i] = s / row[i];
    }
}

/// Componentwise arithmetic mean of the rows.
pub fn mean(rows: &EmbeddingMatrix) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = rows.nrows() as f64;
    let mut acc = vec![0.0; rows.ncols()];
    for r in rows.rows_iter() {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Maximum-likelihood covariance (denominator `N`) about `mu`, plus
/// `ridge · (trace / d)` on the diagonal.
///
/// With `ridge == 0` the result is checked by a Cholesky attempt and a
/// rank-deficient sample yields [`Error::SingularCovariance`].
pub fn covariance(rows: &EmbeddingMatrix, mu: &[f64], ridge: f64) -> Result<SpdMatrix> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }
    let d = rows.ncols();
    check_dim(d, mu.len())?;

    let n_blocks = rows.nrows().div_ceil(COV_BLOCK_ROWS);
    let partials: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * COV_BLOCK_ROWS;
            let end = (start + COV_BLOCK_ROWS).min(rows.nrows());
            let mut upper = vec![0.0; d * d];
            let mut centered = vec![0.0; d];
            for i in start..end {
                for ((c, x), m) in centered.iter_mut().zip(rows.row(i)).zip(mu) {
                    *c = x - m;
                }
                for a in 0..d {
                    let ca = centered[a];
                    let out = &mut upper[a * d..(a + 1) * d];
                    for bb in a..d {
                        out[bb] += ca * centered[bb];
                    }
                }
            }
            upper
        })
        .collect();

    let mut cov = Matrix::zeros(d, d);
    for part in &partials {
        for (c, p) in cov.data.iter_mut().zip(part) {
            *c += p;
        }
    }
    let n = rows.nrows() as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / n;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    if ridge > 0.0 && d > 0 {
        let bump = ridge * cov.trace() / d as f64;
        for a in 0..d {
            cov[(a, a)] += bump;
        }
    }
    if !cov.all_finite() {
        return Err(Error::NonFiniteInput);
    }
    let spd = SpdMatrix(cov);
    if ridge == 0.0 {
        cholesky(&spd).map_err(|_| Error::SingularCovariance)?;
    }
    Ok(spd)
}

/// Cholesky–Banachiewicz factorization. Fails on the first pivot `≤ 0`.
pub fn cholesky(m: &SpdMatrix) -> Result<CholeskyFactor> {
    let a = m.matrix();
    let d = a.nrows();
    let mut lower = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= lower[(i, k)] * lower[(j, k)];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                }
                lower[(i, i)] = s.sqrt();
            } else {
                lower[(i, j)] = s / lower[(j, j)];
            }
        }
    }
    Ok(CholeskyFactor { lower })
}

/// `(x − μ)ᵀ Σ⁻¹ (x − μ)` with `Σ = L·Lᵀ`, computed as `‖L⁻¹(x − μ)‖²`.
pub fn mahalanobis_sq(x: &[f64], mu: &[f64], chol: &CholeskyFactor) -> Result<f64> {
    let d = chol.dim();
    check_dim(d, x.len())?;
    check_dim(d, mu.len())?;
    let mut v: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    forward_substitute(&chol.lower, &mut v);
    Ok(v.iter().map(|t| t * t).sum())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(rows: &[&[f64]]) -> SpdMatrix {
        SpdMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn mean_of_midpoint_and_single_row() {
        let m = Matrix::from_rows(&[[0.0, 0.0], [2.0, 2.0]]).unwrap();
        assert_eq!(mean(&m).unwrap(), vec![1.0, 1.0]);
        let m = Matrix::from_rows(&[[5.0, -3.0]]).unwrap();
        assert_eq!(mean(&m).unwrap(), vec![5.0, -3.0]);
        assert!(matches!(mean(&Matrix::empty(3)), Err(Error::EmptyInput)));
    }

    #[test]
    fn rank_one_sample_is_singular_without_ridge() {
        let m = Matrix::from_rows(&[[0.0, 0.0], [2.0, 2.0]]).unwrap();
        let mu = mean(&m).unwrap();
        assert!(matches!(
            covariance(&m, &mu, 0.0),
            Err(Error::SingularCovariance)
        ));

        let m = Matrix::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let mu = mean(&m).unwrap();
        assert!(matches!(
            covariance(&m, &mu, 0.0),
            Err(Error::SingularCovariance)
        ));
    }

    #[test]
    fn rank_one_covariance_values() {
        let m = Matrix::from_rows(&[[0.0, 0.0], [2.0, 2.0]]).unwrap();
        // A tiny ridge keeps the call from failing; the unridged values are [[1,1],[1,1]].
        let c = covariance(&m, &[1.0, 1.0], 1e-12).unwrap();
        for v in c.matrix().as_slice() {
            assert!((v - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn ridge_scales_with_mean_variance() {
        let m = Matrix::from_rows(&[[0.0, 0.0], [0.0, 2.0]]).unwrap();
        let c = covariance(&m, &[0.0, 1.0], 0.5).unwrap();
        assert_eq!(c.matrix().as_slice(), &[0.25, 0.0, 0.0, 1.25]);
    }

    #[test]
    fn cholesky_hand_cases() {
        let l = cholesky(&spd(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(l.lower(), &Matrix::identity(2));

        let l = cholesky(&spd(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        assert_eq!(l.lower()[(0, 0)], 2.0);
        assert_eq!(l.lower()[(0, 1)], 0.0);
        assert_eq!(l.lower()[(1, 0)], 1.0);
        assert!((l.lower()[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let err = cholesky(&spd(&[&[1.0, 2.0], &[2.0, 1.0]])).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { pivot: 1, .. }));
    }

    #[test]
    fn mahalanobis_hand_cases() {
        let id = cholesky(&spd(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(mahalanobis_sq(&[3.0, 4.0], &[0.0, 0.0], &id).unwrap(), 25.0);
        assert_eq!(
            mahalanobis_sq(&[1.5, -2.0], &[1.5, -2.0], &id).unwrap(),
            0.0
        );

        let four = cholesky(&spd(&[&[4.0]])).unwrap();
        assert_eq!(mahalanobis_sq(&[2.0], &[0.0], &four).unwrap(), 1.0);

        assert!(matches!(
            mahalanobis_sq(&[1.0], &[0.0, 0.0], &id),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn solve_matches_product() {
        let s = spd(&[&[4.0, 2.0, 0.5], &[2.0, 3.0, 0.1], &[0.5, 0.1, 2.0]]);
        let l = cholesky(&s).unwrap();
        let x = l.solve(&[1.0, -1.0, 2.0]).unwrap();
        let back = s
            .matrix()
            .matmul(&Matrix::from_vec(3, 1, x).unwrap())
            .unwrap();
        for (got, want) in back.as_slice().iter().zip([1.0, -1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_new_rejects_asymmetric() {
        let m = Matrix::from_rows(&[[1.0, 0.5], [0.4, 1.0]]).unwrap();
        assert!(SpdMatrix::new(m).is_err());
    }

    #[test]
    fn zero_width_rows_iterate() {
        let m = Matrix::from_vec(3, 0, vec![]).unwrap();
        assert_eq!(m.rows_iter().count(), 3);
    }
}
