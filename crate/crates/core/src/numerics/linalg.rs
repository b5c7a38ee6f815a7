//! Small shared linear-algebra helpers bridging ndarray data to nalgebra
//! factorizations.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{ChemdimError, Result};

pub(crate) fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Symmetric eigendecomposition with eigenpairs sorted by descending
/// eigenvalue. Returns (eigenvalues, eigenvectors as columns).
pub(crate) fn sym_eigen_desc(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let eig = m
        .try_symmetric_eigen(f64::EPSILON, 100_000)
        .ok_or_else(|| ChemdimError::numerical("symmetric eigendecomposition did not converge"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Eigenvalues of a symmetric matrix, descending.
pub(crate) fn sym_eigenvalues_desc(m: DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    vals
}

/// Solve the symmetric positive semidefinite system `A X = B` for the
/// columns of `B`. Tries Cholesky first, falls back to an eigenvalue
/// pseudo-inverse when `A` is singular (duplicate candidate spectra make
/// that routine rather than exceptional).
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    let pinv = pinv_spd(a)?;
    Ok(&pinv * b)
}

/// Moore-Penrose pseudo-inverse of a symmetric positive semidefinite matrix.
pub(crate) fn pinv_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = sym_eigen_desc(a.clone())?;
    let max = values.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = max * 1e-12 * a.nrows() as f64;
    let n = a.nrows();
    let mut inv_diag = DMatrix::zeros(n, n);
    for (i, &v) in values.iter().enumerate() {
        if v > cutoff {
            inv_diag[(i, i)] = 1.0 / v;
        }
    }
    Ok(&vectors * inv_diag * vectors.transpose())
}

pub(crate) fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub(crate) fn column_means(a: ArrayView2<'_, f64>) -> Array1<f64> {
    let n = a.nrows() as f64;
    let mut means = Array1::zeros(a.ncols());
    for row in a.rows() {
        means += &row;
    }
    means / n
}
