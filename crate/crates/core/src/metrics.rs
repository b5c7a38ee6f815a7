//! Residual-based model metrics.
//!
//! For a factorization with `u` sources the residual matrix is
//! `R_u = V - (W H)ᵀ`. From the residuals we compute the sum of squared
//! errors, its max-normalized form ε, the error reduction ρ (ratio of
//! successive ε drops), and a Shannon entropy of the normalized absolute
//! residual derivatives. Entropy is high when a residual looks like
//! structureless noise and low when it still carries spectral shape, which
//! is what the dimensionality selection rule keys on.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{ChemdimError, Result};
use crate::numerics::SemiNmfModel;
use crate::spectral::SpectralAxis;

/// Reconstruction residuals of one factorization: `R_u = V - (W H)ᵀ`.
#[derive(Debug, Clone)]
pub struct ResidualMatrix {
    pub u: usize,
    values: Array2<f64>,
}

impl ResidualMatrix {
    /// Residuals of `model` against the candidate spectra `v` (m-by-p).
    pub fn from_model(v: ArrayView2<'_, f64>, model: &SemiNmfModel) -> ResidualMatrix {
        let recon = model.w.dot(&model.h); // p×m
        let values = &v - &recon.t();
        ResidualMatrix { u: model.u, values }
    }

    pub fn from_values(u: usize, values: Array2<f64>) -> ResidualMatrix {
        ResidualMatrix { u, values }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Sum of squared residual entries.
pub fn sse(r: &ResidualMatrix) -> f64 {
    r.values.iter().map(|v| v * v).sum()
}

/// Normalize SSE values to ε ∈ [0, 1] by dividing by the largest entry.
pub fn normalize_sse(s: &[f64]) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(ChemdimError::validation("normalize_sse: empty input"));
    }
    if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(ChemdimError::validation("normalize_sse: entries must be finite and >= 0"));
    }
    let max = s.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return Err(ChemdimError::validation(
            "normalize_sse: all-zero SSE (perfect fit at every order)",
        ));
    }
    Ok(s.iter().map(|v| v / max).collect())
}

/// Error reduction ρ(u) = (ε_{u-1} - ε_u) / (ε_u - ε_{u+1}) for
/// u = 2..=g-1 (input indexed from u = 1).
///
/// Sentinels keep the argmax well defined when differences vanish: a real
/// improvement followed by no improvement maps to +∞, no improvement at u
/// maps to 0 (covering the 0/0 case). ε is max-normalized, so differences
/// under 1e-12 are below double-precision resolution of the curve and are
/// treated as zero; without that floor, converged-model noise at the SSE
/// floor (where s_u can wiggle slightly upward) would either fake +∞ peaks
/// past the true order or erase the genuine peak with a negative
/// denominator. ρ is always in [0, ∞].
pub fn error_reduction(epsilon: &[f64]) -> Result<Vec<f64>> {
    let g = epsilon.len();
    if g < 3 {
        return Err(ChemdimError::validation("error_reduction needs at least 3 orders"));
    }
    let quantize = |d: f64| if d.abs() < 1e-12 { 0.0 } else { d };
    let mut rho = Vec::with_capacity(g - 2);
    for u in 2..g {
        let num = quantize(epsilon[u - 2] - epsilon[u - 1]);
        let den = quantize(epsilon[u - 1] - epsilon[u]);
        let value = if num > 0.0 {
            if den > 0.0 {
                num / den
            } else {
                f64::INFINITY
            }
        } else {
            0.0
        };
        rho.push(value);
    }
    Ok(rho)
}

/// Shannon entropy of the normalized absolute derivative of a residual
/// spectrum: `b_i ∝ |Δr_i / Δν_i|`, `H = -Σ b ln b` with `0 ln 0 = 0`.
/// A constant residual (all derivatives zero) has entropy 0 by convention:
/// a vanished residual carries no noise-likeness evidence.
pub fn residual_entropy(r: ArrayView1<'_, f64>, axis: &SpectralAxis) -> f64 {
    let p = axis.len();
    assert!(p >= 3, "residual entropy needs at least 3 channels");
    assert_eq!(r.len(), p, "residual length must match the axis");
    let nu = axis.values();
    let mut slopes = Vec::with_capacity(p - 1);
    let mut total = 0.0;
    for i in 1..p {
        let s = ((r[i] - r[i - 1]) / (nu[i] - nu[i - 1])).abs();
        slopes.push(s);
        total += s;
    }
    if total == 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for s in slopes {
        let b = s / total;
        if b > 0.0 {
            h -= b * b.ln();
        }
    }
    h
}

/// Total reconstruction entropy: sum of [`residual_entropy`] over all rows.
pub fn total_entropy(r: &ResidualMatrix, axis: &SpectralAxis) -> f64 {
    r.values.rows().into_iter().map(|row| residual_entropy(row, axis)).sum()
}

/// Root-mean-square intensity of a spectrum.
pub fn e_rms(spectrum: ArrayView1<'_, f64>) -> f64 {
    let p = spectrum.len();
    if p == 0 {
        return 0.0;
    }
    (spectrum.iter().map(|v| v * v).sum::<f64>() / p as f64).sqrt()
}

/// The per-order metric curves driving dimensionality selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricCurves {
    /// SSE per order, u = 1..=g.
    pub sse: Vec<f64>,
    /// Max-normalized SSE, u = 1..=g.
    pub epsilon: Vec<f64>,
    /// Error reduction, u = 2..=g-1 (may contain +∞ sentinels).
    #[serde(with = "rho_serde")]
    pub rho: Vec<f64>,
    /// Total reconstruction entropy per order, u = 1..=g.
    pub entropy: Vec<f64>,
}

impl MetricCurves {
    pub fn g(&self) -> usize {
        self.sse.len()
    }

    /// ρ(u) with u in 2..=g-1.
    pub fn rho_at(&self, u: usize) -> f64 {
        self.rho[u - 2]
    }

    /// Entropy change S_u - S_{u-1}, defined for u >= 2.
    pub fn entropy_delta(&self, u: usize) -> f64 {
        self.entropy[u - 1] - self.entropy[u - 2]
    }

    /// Orders u >= 2 where SSE increased over the previous order. The
    /// selection rule tolerates these; they are surfaced for diagnostics.
    pub fn sse_monotonicity_violations(&self) -> Vec<usize> {
        (2..=self.g())
            .filter(|&u| self.sse[u - 1] > self.sse[u - 2])
            .collect()
    }
}

/// JSON-safe serialization for ρ: +∞ sentinels become the string "inf".
mod rho_serde {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Num(f64),
        Str(String),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = v
            .iter()
            .map(|&x| if x.is_finite() { Entry::Num(x) } else { Entry::Str("inf".into()) })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        entries
            .into_iter()
            .map(|e| match e {
                Entry::Num(x) => Ok(x),
                Entry::Str(s) if s == "inf" => Ok(f64::INFINITY),
                Entry::Str(s) => Err(D::Error::custom(format!("bad rho entry {s:?}"))),
            })
            .collect()
    }
}
