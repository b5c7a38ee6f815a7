//! Semi-nonnegative matrix factorization.
//!
//! Factors `X ≈ W H` with `W` unconstrained and `H ≥ 0` by alternating
//! exact subproblem solves: `W = X Hᵀ (H Hᵀ)⁺` (pseudo-inverse when `H Hᵀ`
//! is singular, which duplicate candidate spectra make routine) and the
//! columns of `H` by batched nonnegative least squares. Because each half
//! step solves its subproblem exactly, the objective `½‖X − W H‖²_F` never
//! increases.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use super::linalg::{from_dmatrix, pinv_spd, to_dmatrix};
use super::nnls::nnls_batch_gram;
use crate::error::{ChemdimError, Result};

#[derive(Debug, Clone, Copy)]
pub struct SemiNmfParams {
    /// Relative objective-change threshold for convergence.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SemiNmfParams {
    fn default() -> Self {
        SemiNmfParams { tol: 1e-6, max_iter: 200 }
    }
}

/// Result of a semi-NMF run for one assumed source count.
#[derive(Debug, Clone)]
pub struct SemiNmfModel {
    /// Assumed number of sources.
    pub u: usize,
    /// p-by-u feature matrix, unconstrained.
    pub w: Array2<f64>,
    /// u-by-m nonnegative weights.
    pub h: Array2<f64>,
    /// Final ½‖X − WH‖²_F.
    pub objective: f64,
    /// Objective after each completed iteration; non-increasing.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Factor the p-by-m matrix `x` with `u` sources.
///
/// `H` starts as |N(0,1)| entries drawn from `seed`; `W` comes from the
/// first W-update, so the whole run is a pure function of `(x, u, seed)`.
pub fn semi_nmf(
    x: ArrayView2<'_, f64>,
    u: usize,
    seed: u64,
    params: SemiNmfParams,
) -> Result<SemiNmfModel> {
    let (p, m) = (x.nrows(), x.ncols());
    if u < 1 {
        return Err(ChemdimError::validation("semi_nmf: u must be at least 1"));
    }
    if u > m {
        return Err(ChemdimError::validation(format!(
            "semi_nmf: u = {u} exceeds the {m} available samples"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ChemdimError::validation("semi_nmf: non-finite input"));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut h = Array2::from_shape_fn((u, m), |_| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v.abs()
    });
    let mut w = Array2::zeros((p, u));

    let norm_x: f64 = x.iter().map(|v| v * v).sum();
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..params.max_iter {
        // W-update: exact unconstrained least squares
        let hht = h.dot(&h.t());
        let pinv = pinv_spd(&to_dmatrix(hht.view()))?;
        w = x.dot(&h.t()).dot(&from_dmatrix(&pinv));

        // H-update: per-column nonnegative least squares against W
        let wtw = w.t().dot(&w);
        let wtx = w.t().dot(&x);
        h = nnls_batch_gram(&wtw, &wtx);

        let objective = 0.5 * residual_sq(x, &w, &h, norm_x);
        iterations = iter + 1;
        if !objective.is_finite() {
            return Err(ChemdimError::SemiNmfBreakdown {
                message: format!("objective became non-finite at iteration {iterations}"),
                last: Box::new(SemiNmfModel {
                    u,
                    w,
                    h,
                    objective: history.last().copied().unwrap_or(f64::INFINITY),
                    objective_history: history,
                    iterations: iterations - 1,
                    converged: false,
                }),
            });
        }
        history.push(objective);
        let denom = prev.max(1e-300);
        if prev.is_finite() && (prev - objective).abs() / denom < params.tol {
            converged = true;
            prev = objective;
            break;
        }
        prev = objective;
    }

    Ok(SemiNmfModel {
        u,
        w,
        h,
        objective: prev,
        objective_history: history,
        iterations,
        converged,
    })
}

/// ‖X − WH‖²_F computed as ‖X‖² − 2⟨X, WH⟩ + ‖WH‖² via the small Gram
/// matrices, avoiding a p-by-m temporary.
fn residual_sq(x: ArrayView2<'_, f64>, w: &Array2<f64>, h: &Array2<f64>, norm_x: f64) -> f64 {
    let wtx = w.t().dot(&x); // u×m
    let cross: f64 = wtx.iter().zip(h.iter()).map(|(a, b)| a * b).sum();
    let wtw = w.t().dot(w); // u×u
    let hht = h.dot(&h.t()); // u×u
    let fit: f64 = wtw.iter().zip(hht.t().iter()).map(|(a, b)| a * b).sum();
    (norm_x - 2.0 * cross + fit).max(0.0)
}
