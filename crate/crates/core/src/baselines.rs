//! Reference dimensionality estimators and clustering.
//!
//! * `hfc` — Harsanyi-Farrand-Chang: counts channels whose correlation-matrix
//!   eigenvalue exceeds the covariance-matrix eigenvalue by a Neyman-Pearson
//!   threshold at the given false-alarm probability. The threshold per
//!   channel is `Φ⁻¹(1 - P_F) · sqrt(2(λ_corr² + λ_cov²)/n)`.
//! * `aic` / `mdl` — Wax-Kailath information criteria over the eigenvalues
//!   of the second-moment matrix: with `a_q`/`g_q` the arithmetic/geometric
//!   means of the trailing `L - q` eigenvalues,
//!   `AIC(q) = 2n(L-q)·ln(a_q/g_q) + 2q(2L-q)` and
//!   `MDL(q) = n(L-q)·ln(a_q/g_q) + q(2L-q)·ln(n)/2`, minimized over q.
//! * `fif` — Malinowski's factor indicator function
//!   `IND(q) = RE(q)/(L-q)²` with `RE(q) = sqrt(Σ_{i>q} λ_i / (n(L-q)))`,
//!   minimized over q ≥ 1.
//! * `variance_threshold` — smallest q whose cumulative explained variance
//!   (PCA on mean-centered data) reaches the requested fraction.
//!
//! The information-criterion and factor-analysis estimators assume many
//! more samples than channels; when n ≤ p they still produce a number but
//! the result carries a `degenerate` flag, which the comparison tables
//! print as "--".

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{ChemdimError, Result};
use crate::numerics::{column_means, sym_eigenvalues_desc, to_dmatrix};
use crate::spectral::DataMatrix;

/// Outcome of one baseline estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineResult {
    pub method: String,
    /// Estimated dimensionality; `None` when the method could not produce
    /// one at all.
    pub estimate: Option<usize>,
    /// Set when the method ran outside its validity regime (n ≤ p for the
    /// eigenvalue-statistics methods); tables show these cells as "--".
    pub degenerate: bool,
    /// Method parameter echo, e.g. the false-alarm probability.
    pub parameter: Option<f64>,
}

/// Second-moment matrix ZᵀZ/n and mean-centered covariance, as a pair of
/// descending eigenvalue lists.
fn moment_and_covariance_eigs(z: &DataMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = z.nrows() as f64;
    let moment = z.values().t().dot(z.values()) / n;
    let mu = column_means(z.values().view());
    let p = z.ncols();
    let mut cov = moment.clone();
    for i in 0..p {
        for j in 0..p {
            cov[[i, j]] -= mu[i] * mu[j];
        }
    }
    let corr_eigs = sym_eigenvalues_desc(to_dmatrix(moment.view()));
    let cov_eigs = sym_eigenvalues_desc(to_dmatrix(cov.view()));
    (corr_eigs, cov_eigs)
}

fn moment_eigs(z: &DataMatrix) -> Vec<f64> {
    let n = z.nrows() as f64;
    let moment = z.values().t().dot(z.values()) / n;
    sym_eigenvalues_desc(to_dmatrix(moment.view()))
}

/// Harsanyi-Farrand-Chang estimator at false-alarm probability `pf`.
pub fn hfc(z: &DataMatrix, pf: f64) -> Result<BaselineResult> {
    if !(0.0..1.0).contains(&pf) || pf <= 0.0 {
        return Err(ChemdimError::validation("hfc: false-alarm probability must be in (0, 1)"));
    }
    let n = z.nrows() as f64;
    let (corr, cov) = moment_and_covariance_eigs(z);
    let quantile = Normal::standard().inverse_cdf(1.0 - pf);
    let mut count = 0;
    for (lc, lk) in corr.iter().zip(cov.iter()) {
        let sigma = (2.0 * (lc * lc + lk * lk) / n).sqrt();
        if lc - lk > quantile * sigma {
            count += 1;
        }
    }
    Ok(BaselineResult {
        method: "hfc".into(),
        estimate: Some(count),
        degenerate: false,
        parameter: Some(pf),
    })
}

/// log(arithmetic mean / geometric mean) of `eigs[q..]`, with eigenvalues
/// floored at a tiny positive value so degenerate spectra stay finite.
fn log_mean_ratio(eigs: &[f64], q: usize) -> f64 {
    let tail = &eigs[q..];
    let len = tail.len() as f64;
    let floor = 1e-300;
    let mut sum = 0.0;
    let mut log_sum = 0.0;
    for &v in tail {
        let v = v.max(floor);
        sum += v;
        log_sum += v.ln();
    }
    let arith = (sum / len).max(floor);
    arith.ln() - log_sum / len
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0usize, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Akaike information criterion source-count estimate.
pub fn aic(z: &DataMatrix) -> Result<BaselineResult> {
    let (n, p) = (z.nrows(), z.ncols());
    let eigs = moment_eigs(z);
    let l = n.min(p);
    let nf = n as f64;
    let lf = l as f64;
    let q_hat = argmin((0..l).map(|q| {
        let qf = q as f64;
        2.0 * nf * (lf - qf) * log_mean_ratio(&eigs[..l], q) + 2.0 * qf * (2.0 * lf - qf)
    }));
    Ok(BaselineResult {
        method: "aic".into(),
        estimate: Some(q_hat),
        degenerate: n <= p,
        parameter: None,
    })
}

/// Minimum description length source-count estimate.
pub fn mdl(z: &DataMatrix) -> Result<BaselineResult> {
    let (n, p) = (z.nrows(), z.ncols());
    let eigs = moment_eigs(z);
    let l = n.min(p);
    let nf = n as f64;
    let lf = l as f64;
    let q_hat = argmin((0..l).map(|q| {
        let qf = q as f64;
        nf * (lf - qf) * log_mean_ratio(&eigs[..l], q) + 0.5 * qf * (2.0 * lf - qf) * nf.ln()
    }));
    Ok(BaselineResult {
        method: "mdl".into(),
        estimate: Some(q_hat),
        degenerate: n <= p,
        parameter: None,
    })
}

/// Malinowski factor indicator function estimate.
pub fn fif(z: &DataMatrix) -> Result<BaselineResult> {
    let (n, p) = (z.nrows(), z.ncols());
    let eigs = moment_eigs(z);
    let l = n.min(p);
    let nf = n as f64;
    if l < 2 {
        return Err(ChemdimError::validation("fif needs at least 2 usable eigenvalues"));
    }
    let lf = l as f64;
    let q_hat = 1 + argmin((1..l).map(|q| {
        let qf = q as f64;
        let tail: f64 = eigs[q..l].iter().map(|v| v.max(0.0)).sum();
        let re = (tail / (nf * (lf - qf))).sqrt();
        re / ((lf - qf) * (lf - qf))
    }));
    Ok(BaselineResult {
        method: "fif".into(),
        estimate: Some(q_hat),
        degenerate: n <= p,
        parameter: None,
    })
}

/// Smallest number of principal components whose cumulative explained
/// variance reaches `fraction`. PCA runs on mean-centered data.
pub fn variance_threshold(z: &DataMatrix, fraction: f64) -> Result<BaselineResult> {
    if !(0.0..1.0).contains(&fraction) || fraction <= 0.0 {
        return Err(ChemdimError::validation("variance fraction must be in (0, 1)"));
    }
    let (_, cov) = moment_and_covariance_eigs(z);
    let total: f64 = cov.iter().map(|v| v.max(0.0)).sum();
    let method = format!("lambda{}", (fraction * 100.0).round() as u32);
    if total == 0.0 {
        return Ok(BaselineResult { method, estimate: Some(0), degenerate: false, parameter: Some(fraction) });
    }
    let mut cum = 0.0;
    let mut q = cov.len();
    for (i, v) in cov.iter().enumerate() {
        cum += v.max(0.0);
        if cum >= fraction * total {
            q = i + 1;
            break;
        }
    }
    Ok(BaselineResult { method, estimate: Some(q), degenerate: false, parameter: Some(fraction) })
}

/// K-means clustering outcome.
#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub centroids: Array2<f64>,
    pub memberships: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration; non-increasing.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Deterministic per seed; an
/// emptied cluster is reseeded from the point farthest from its centroid.
pub fn kmeanspp(z: &DataMatrix, k: usize, seed: u64, max_iter: usize) -> Result<KmeansResult> {
    let n = z.nrows();
    let p = z.ncols();
    if k == 0 || k > n {
        return Err(ChemdimError::validation(format!("kmeans: k = {k} out of range 1..={n}")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let data = z.values();

    // k-means++ seeding: D² sampling against the chosen set
    let mut centroid_rows = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|r| sq_dist(data.row(r), data.row(centroid_rows[0])))
        .collect();
    while centroid_rows.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (r, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = r;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // all mass collapsed; fall back to uniform choice
            rng.random_range(0..n)
        };
        centroid_rows.push(next);
        for r in 0..n {
            let d = sq_dist(data.row(r), data.row(next));
            if d < d2[r] {
                d2[r] = d;
            }
        }
    }
    let mut centroids = Array2::zeros((k, p));
    for (c, &r) in centroid_rows.iter().enumerate() {
        centroids.row_mut(c).assign(&data.row(r));
    }

    let mut memberships = vec![0usize; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..max_iter {
        iterations += 1;
        // assignment
        let mut changed = false;
        let mut inertia = 0.0;
        for r in 0..n {
            let mut best = (0usize, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(data.row(r), centroids.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            inertia += best.1;
            if memberships[r] != best.0 {
                memberships[r] = best.0;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed && history.len() > 1 {
            converged = true;
            break;
        }
        // update
        let mut counts = vec![0usize; k];
        let mut sums = Array2::<f64>::zeros((k, p));
        for r in 0..n {
            counts[memberships[r]] += 1;
            let mut row = sums.row_mut(memberships[r]);
            row += &data.row(r);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for j in 0..p {
                    centroids[[c, j]] = sums[[c, j]] * inv;
                }
            } else {
                // reseed an empty cluster from the farthest point
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(data.row(a), centroids.row(memberships[a]));
                        let db = sq_dist(data.row(b), centroids.row(memberships[b]));
                        da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                    })
                    .unwrap();
                centroids.row_mut(c).assign(&data.row(far));
            }
        }
    }

    let inertia = history.last().copied().unwrap_or(0.0);
    Ok(KmeansResult { centroids, memberships, inertia, inertia_history: history, iterations, converged })
}

/// Isotropic white-noise matrix used as a null case in tests and examples.
pub fn white_noise_matrix(n: usize, p: usize, sigma: f64, seed: u64) -> Result<DataMatrix> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let values = Array2::from_shape_fn((n, p), |_| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v * sigma
    });
    DataMatrix::new(values, crate::spectral::SpectralAxis::unit(p)?)
}
