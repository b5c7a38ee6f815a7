//! Synthetic benchmark datasets: Gaussian pseudo-spectra, convex mixing
//! and SNR-controlled white noise.
//!
//! Each endmember is a sum of 1..=6 Gaussian peaks with height U[0,1),
//! integer-snapped center across the axis and width U[1,50). Mixtures draw
//! uniform-simplex weights (normalized unit exponentials), the pure spectra
//! are appended once each, and the matrix is shuffled with the pure-row
//! positions recorded. Noise is white Gaussian with one sigma for the whole
//! matrix, chosen so the weakest row still meets the requested SNR
//! (sigma = min-row-RMS / snr).

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ChemdimError, Result};
use crate::metrics::e_rms;
use crate::seed;
use crate::spectral::{DataMatrix, SpectralAxis};

/// Default number of Gaussian peaks to draw from.
pub const DEFAULT_MAX_PEAKS: usize = 6;

/// Description of one synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SyntheticSpec {
    /// Ground-truth endmember count.
    pub k: usize,
    /// Total samples (mixtures plus the pure rows).
    pub n: usize,
    /// Channels.
    #[serde(default = "default_p")]
    pub p: usize,
    /// Axis range, inclusive.
    #[serde(default = "default_axis_start")]
    pub axis_start: f64,
    #[serde(default = "default_axis_end")]
    pub axis_end: f64,
    /// Signal-to-noise ratio, e.g. 1000.0 for 1000:1.
    pub snr: f64,
    pub seed: u64,
    /// Scale endmembers to unit length before mixing.
    #[serde(default = "default_true")]
    pub normalize_endmembers: bool,
}

fn default_p() -> usize {
    1001
}
fn default_axis_start() -> f64 {
    900.0
}
fn default_axis_end() -> f64 {
    1900.0
}
fn default_true() -> bool {
    true
}

impl SyntheticSpec {
    pub fn new(k: usize, n: usize, snr: f64, seed: u64) -> Self {
        SyntheticSpec {
            k,
            n,
            p: default_p(),
            axis_start: default_axis_start(),
            axis_end: default_axis_end(),
            snr,
            seed,
            normalize_endmembers: true,
        }
    }

    pub fn axis(&self) -> Result<SpectralAxis> {
        SpectralAxis::linspace(self.axis_start, self.axis_end, self.p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(ChemdimError::validation("synthetic spec needs k >= 2"));
        }
        if self.n < self.k {
            return Err(ChemdimError::validation("synthetic spec needs n >= k"));
        }
        if !(self.snr > 0.0) {
            return Err(ChemdimError::validation("synthetic spec needs snr > 0"));
        }
        Ok(())
    }
}

/// What actually went into a generated dataset.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Noiseless endmember spectra, k-by-p.
    pub endmembers: Array2<f64>,
    /// Mixing weights per final row, n-by-k; rows sum to one.
    pub weights: Array2<f64>,
    /// Final row position of each pure endmember, in endmember order.
    pub pure_rows: Vec<usize>,
}

/// Draw `k` pseudo-spectra over `axis`. Each is a sum of `1..=max_peaks`
/// Gaussians with height U[0,1), integer peak center across the axis range
/// and width U[1,50).
pub fn generate_endmembers(
    k: usize,
    axis: &SpectralAxis,
    seed_value: u64,
    max_peaks: usize,
    normalize: bool,
) -> Result<Array2<f64>> {
    if k < 1 {
        return Err(ChemdimError::validation("generate_endmembers needs k >= 1"));
    }
    if max_peaks < 1 {
        return Err(ChemdimError::validation("max_peaks must be at least 1"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed_value);
    let p = axis.len();
    let lo = axis.values()[0].ceil() as i64;
    let hi = axis.values()[p - 1].floor() as i64;
    let mut spectra = Array2::zeros((k, p));
    for mut row in spectra.rows_mut() {
        let peaks = rng.random_range(1..=max_peaks);
        for _ in 0..peaks {
            let height: f64 = rng.random();
            let center = rng.random_range(lo..=hi) as f64;
            let width = 1.0 + rng.random::<f64>() * 49.0;
            for (j, &x) in axis.values().iter().enumerate() {
                let d = x - center;
                row[j] += height * (-d * d / (2.0 * width * width)).exp();
            }
        }
        if normalize {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
    }
    Ok(spectra)
}

/// Convexly mix `endmembers` into `n` rows: n-k uniform-simplex mixtures
/// plus one pure row per endmember, all shuffled.
pub fn mix_dataset(
    endmembers: &Array2<f64>,
    axis: &SpectralAxis,
    n: usize,
    seed_value: u64,
) -> Result<(DataMatrix, GroundTruth)> {
    let k = endmembers.nrows();
    let p = endmembers.ncols();
    if k < 1 {
        return Err(ChemdimError::validation("mix_dataset needs at least one endmember"));
    }
    if n < k {
        return Err(ChemdimError::validation(format!(
            "mix_dataset needs n >= k, got n = {n}, k = {k}"
        )));
    }
    if axis.len() != p {
        return Err(ChemdimError::validation("axis length must match endmember channels"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed_value);

    // weights in pre-shuffle order: mixtures first, pure rows appended
    let mut weights = Array2::zeros((n, k));
    for r in 0..n - k {
        // uniform on the simplex via normalized unit exponentials
        let mut total = 0.0;
        for j in 0..k {
            let e = -(1.0 - rng.random::<f64>()).ln();
            weights[[r, j]] = e;
            total += e;
        }
        for j in 0..k {
            weights[[r, j]] /= total;
        }
    }
    for i in 0..k {
        weights[[n - k + i, i]] = 1.0;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    // order[dst] = src: row dst of the final matrix is pre-shuffle row src
    let mut final_weights = Array2::zeros((n, k));
    let mut values = Array2::zeros((n, p));
    let mut pure_rows = vec![0usize; k];
    for (dst, &src) in order.iter().enumerate() {
        for j in 0..k {
            final_weights[[dst, j]] = weights[[src, j]];
        }
        if src >= n - k {
            pure_rows[src - (n - k)] = dst;
        }
        let w = weights.row(src);
        for c in 0..p {
            let mut acc = 0.0;
            for j in 0..k {
                acc += w[j] * endmembers[[j, c]];
            }
            values[[dst, c]] = acc;
        }
    }
    // pure rows stay bit-exact copies of their endmember
    for (i, &dst) in pure_rows.iter().enumerate() {
        for c in 0..p {
            values[[dst, c]] = endmembers[[i, c]];
        }
    }

    let matrix = DataMatrix::new(values, axis.clone())?;
    let truth =
        GroundTruth { endmembers: endmembers.clone(), weights: final_weights, pure_rows };
    Ok((matrix, truth))
}

/// Add white Gaussian noise sized from the weakest row:
/// `sigma = min-row-RMS / snr`, the same sigma for every entry.
pub fn add_noise(z: &DataMatrix, snr: f64, seed_value: u64) -> Result<DataMatrix> {
    if !(snr > 0.0) {
        return Err(ChemdimError::validation("snr must be positive"));
    }
    let min_rms = z
        .values()
        .rows()
        .into_iter()
        .map(|row| e_rms(row))
        .fold(f64::INFINITY, f64::min);
    if min_rms == 0.0 {
        return Err(ChemdimError::validation(
            "weakest row has zero RMS; cannot reach the requested SNR",
        ));
    }
    let sigma = min_rms / snr;
    let mut rng = ChaCha12Rng::seed_from_u64(seed_value);
    let mut values = z.values().clone();
    for v in values.iter_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += e * sigma;
    }
    DataMatrix::new(values, z.axis().clone())
}

/// Generate the complete dataset for a spec: endmembers, convex mixtures
/// and noise, each stage on its own derived sub-seed.
pub fn generate(spec: &SyntheticSpec) -> Result<(DataMatrix, GroundTruth)> {
    spec.validate()?;
    let axis = spec.axis()?;
    let endmembers = generate_endmembers(
        spec.k,
        &axis,
        seed::derive(spec.seed, 1),
        DEFAULT_MAX_PEAKS,
        spec.normalize_endmembers,
    )?;
    let (clean, truth) = mix_dataset(&endmembers, &axis, spec.n, seed::derive(spec.seed, 2))?;
    let noisy = add_noise(&clean, spec.snr, seed::derive(spec.seed, 3))?;
    Ok((noisy, truth))
}
