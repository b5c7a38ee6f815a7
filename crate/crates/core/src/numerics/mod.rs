//! Numerical kernels shared by the pipeline: rank reduction by singular
//! value decomposition, nonnegativity-constrained least squares (single
//! right-hand side and batched), and semi-nonnegative matrix factorization.
//!
//! All kernels are pure functions of their inputs (and seed, where one is
//! taken); none of them spawns threads, so callers are free to run many
//! instances concurrently and still get results that do not depend on the
//! thread count.

mod linalg;
mod nnls;
mod seminmf;

pub use nnls::{nnls, nnls_batch};
pub(crate) use nnls::nnls_batch_gram;
pub use seminmf::{semi_nmf, SemiNmfModel, SemiNmfParams};

pub(crate) use linalg::{column_means, sym_eigen_desc, sym_eigenvalues_desc, to_dmatrix};

use ndarray::{Array2, ArrayView2};

use crate::error::{ChemdimError, Result};
use crate::spectral::DataMatrix;

/// Sample coordinates in a truncated singular-value subspace.
///
/// `scores` holds U·Σ for the leading `d` components of the (uncentered)
/// input matrix; `basis` the matching right singular vectors, so
/// `scores · basisᵀ` is the best rank-`d` Frobenius approximation of the
/// input.
#[derive(Debug, Clone)]
pub struct ReducedScores {
    scores: Array2<f64>,
    basis: Array2<f64>,
    singular_values: Vec<f64>,
}

impl ReducedScores {
    /// Wrap precomputed coordinates. Intended for tests and callers that
    /// bring their own reduction.
    pub fn from_parts(scores: Array2<f64>, basis: Array2<f64>, singular_values: Vec<f64>) -> Self {
        ReducedScores { scores, basis, singular_values }
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }

    pub fn d(&self) -> usize {
        self.scores.ncols()
    }

    /// n-by-d coordinate matrix, columns ordered by descending singular value.
    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    /// Rank-d reconstruction of the original matrix.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.scores.dot(&self.basis.t())
    }

    /// View of the leading `d` components. The leading columns of a larger
    /// reduction are exactly the smaller reduction, so slicing avoids
    /// re-decomposing.
    pub fn truncated(&self, d: usize) -> ReducedScores {
        assert!(d <= self.d(), "cannot truncate {} components to {}", self.d(), d);
        ReducedScores {
            scores: self.scores.slice(ndarray::s![.., ..d]).to_owned(),
            basis: self.basis.slice(ndarray::s![.., ..d]).to_owned(),
            singular_values: self.singular_values[..d].to_vec(),
        }
    }
}

/// Project the (uncentered) matrix onto its leading `d` singular components.
///
/// No mean-centering is applied: the simplex construction absorbs offsets
/// through its constant leading row, and centering would change simplex
/// volumes.
pub fn svd_reduce(z: &DataMatrix, d: usize) -> Result<ReducedScores> {
    svd_reduce_view(z.values().view(), d)
}

pub(crate) fn svd_reduce_view(z: ArrayView2<'_, f64>, d: usize) -> Result<ReducedScores> {
    let (n, p) = (z.nrows(), z.ncols());
    let rank_cap = n.min(p);
    if d < 1 || d > rank_cap {
        return Err(ChemdimError::validation(format!(
            "svd_reduce: d = {d} out of range 1..={rank_cap}"
        )));
    }

    // Eigendecompose the smaller Gram matrix.
    let (mut scores, mut basis, mut sigma) = if n <= p {
        // Z Zᵀ = U Λ Uᵀ; scores = U Σ, basis = Zᵀ U Σ⁻¹
        let gram = to_dmatrix(z.dot(&z.t()).view());
        let (values, vectors) = sym_eigen_desc(gram)?;
        let sigma: Vec<f64> = values[..d].iter().map(|&v| v.max(0.0).sqrt()).collect();
        let mut scores = Array2::zeros((n, d));
        for j in 0..d {
            for i in 0..n {
                scores[[i, j]] = vectors[(i, j)] * sigma[j];
            }
        }
        let mut basis = Array2::zeros((p, d));
        // basis column j = Zᵀ u_j / σ_j (zero when σ_j vanishes)
        for j in 0..d {
            if sigma[j] > 0.0 {
                for c in 0..p {
                    let mut acc = 0.0;
                    for r in 0..n {
                        acc += z[[r, c]] * vectors[(r, j)];
                    }
                    basis[[c, j]] = acc / sigma[j];
                }
            }
        }
        (scores, basis, sigma)
    } else {
        // Zᵀ Z = V Λ Vᵀ; basis = V, scores = Z V
        let gram = to_dmatrix(z.t().dot(&z).view());
        let (values, vectors) = sym_eigen_desc(gram)?;
        let sigma: Vec<f64> = values[..d].iter().map(|&v| v.max(0.0).sqrt()).collect();
        let mut basis = Array2::zeros((p, d));
        for j in 0..d {
            for i in 0..p {
                basis[[i, j]] = vectors[(i, j)];
            }
        }
        // column-by-column so the leading columns are bit-identical for any d
        let mut scores = Array2::zeros((n, d));
        for j in 0..d {
            let col = z.dot(&basis.column(j));
            scores.column_mut(j).assign(&col);
        }
        (scores, basis, sigma)
    };

    // Canonical sign: the largest-magnitude basis entry of each component is
    // made positive so results do not depend on eigensolver sign choices.
    for j in 0..d {
        let col = basis.column(j);
        let mut pivot = 0usize;
        let mut best = 0.0f64;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                pivot = i;
            }
        }
        if best > 0.0 && basis[[pivot, j]] < 0.0 {
            basis.column_mut(j).mapv_inplace(|v| -v);
            scores.column_mut(j).mapv_inplace(|v| -v);
        }
    }
    sigma.iter_mut().for_each(|s| *s = s.max(0.0));

    Ok(ReducedScores { scores, basis, singular_values: sigma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SpectralAxis;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn matrix(values: Array2<f64>) -> DataMatrix {
        let p = values.ncols();
        DataMatrix::new(values, SpectralAxis::unit(p).unwrap()).unwrap()
    }

    fn random_matrix(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn rank_one_matrix_reconstructs_exactly_with_d1() {
        let u = array![1.0, 2.0, 3.0, 4.0];
        let v = array![0.5, -1.0, 2.0];
        let z = matrix(
            Array2::from_shape_fn((4, 3), |(i, j)| u[i] * v[j]),
        );
        let red = svd_reduce(&z, 1).unwrap();
        let err: f64 = (&red.reconstruct() - z.values()).iter().map(|e| e * e).sum();
        assert!(err < 1e-18, "rank-1 reconstruction error {err}");
    }

    #[test]
    fn identity_scores_are_orthogonal_with_unit_singular_values() {
        let z = matrix(Array2::eye(3));
        let red = svd_reduce(&z, 3).unwrap();
        for s in red.singular_values() {
            assert_abs_diff_eq!(*s, 1.0, epsilon = 1e-12);
        }
        let gram = red.scores().t().dot(red.scores());
        for ((i, j), &v) in gram.indexed_iter() {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(v, expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn truncation_error_matches_eigendecomposition_oracle() {
        // Oracle: the squared Frobenius error of the best rank-d
        // approximation equals the sum of the trailing eigenvalues of ZᵀZ.
        let z_arr = random_matrix(50, 20, 99);
        let z = matrix(z_arr.clone());
        let d = 5;
        let red = svd_reduce(&z, d).unwrap();
        let err: f64 = (&red.reconstruct() - z.values()).iter().map(|e| e * e).sum();

        let gram = super::to_dmatrix(z_arr.t().dot(&z_arr).view());
        let mut eigvals = super::sym_eigenvalues_desc(gram);
        eigvals.iter_mut().for_each(|v| *v = v.max(0.0));
        let expected: f64 = eigvals[d..].iter().sum();
        assert_abs_diff_eq!(err, expected, epsilon = 1e-8 * expected.max(1.0));
    }

    #[test]
    fn full_rank_reconstruction_is_tight() {
        for &(n, p) in &[(12usize, 7usize), (7, 12)] {
            let z_arr = random_matrix(n, p, 7);
            let z = matrix(z_arr.clone());
            let red = svd_reduce(&z, n.min(p)).unwrap();
            let num: f64 = (&red.reconstruct() - z.values()).iter().map(|e| e * e).sum();
            let den: f64 = z.values().iter().map(|e| e * e).sum();
            assert!((num / den).sqrt() < 1e-9, "relative error {}", (num / den).sqrt());
        }
    }

    #[test]
    fn both_gram_routes_agree_on_subspace() {
        // n < p and n > p slices of the same underlying low-rank data
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let w = Array2::from_shape_fn((30, 3), |_| rng.random::<f64>());
        let h = Array2::from_shape_fn((3, 40), |_| rng.random::<f64>());
        let z_arr = w.dot(&h);
        let z = matrix(z_arr.clone());
        let red = svd_reduce(&z, 3).unwrap();
        let err: f64 = (&red.reconstruct() - z.values()).iter().map(|e| e * e).sum();
        assert!(err < 1e-16 * z_arr.iter().map(|v| v * v).sum::<f64>());

        let zt = matrix(z_arr.t().to_owned());
        let red_t = svd_reduce(&zt, 3).unwrap();
        for (a, b) in red.singular_values().iter().zip(red_t.singular_values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn d_out_of_range_is_rejected() {
        let z = matrix(random_matrix(4, 6, 1));
        assert!(svd_reduce(&z, 0).is_err());
        assert!(svd_reduce(&z, 5).is_err());
    }

    #[test]
    fn truncated_slices_leading_components() {
        let z = matrix(random_matrix(10, 6, 5));
        let full = svd_reduce(&z, 4).unwrap();
        let sliced = full.truncated(2);
        let direct = svd_reduce(&z, 2).unwrap();
        assert_eq!(sliced.scores().dim(), direct.scores().dim());
        for (a, b) in sliced.scores().iter().zip(direct.scores().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
