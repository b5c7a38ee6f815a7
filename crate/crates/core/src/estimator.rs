//! Dimensionality estimation.
//!
//! Fits one semi-NMF per assumed source count u = 1..=g on the candidate
//! matrix, computes the metric curves, and selects the dimensionality:
//! take z = argmax ρ(u) over u ∈ [2, g-1]; if the entropy rose at z
//! (S_z > S_{z-1}) that is the answer, otherwise search outward from z for
//! the nearest order with an entropy increase. The search trace is kept in
//! the report so every selection can be replayed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ChemdimError, Result};
use crate::metrics::{self, MetricCurves, ResidualMatrix};
use crate::numerics::{semi_nmf, SemiNmfModel, SemiNmfParams};
use crate::seed;
use crate::simplex::{self, CandidateMatrix};
use crate::spectral::DataMatrix;

/// Tuning knobs for a full estimation run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EstimateParams {
    /// Largest source count to consider; models run for u = 1..=g.
    pub g: usize,
    /// Sweep cap per simplex maximization pass.
    pub max_sweeps: usize,
    /// Relative objective tolerance for semi-NMF convergence.
    pub nmf_tol: f64,
    /// Iteration cap per semi-NMF fit.
    pub nmf_max_iter: usize,
    /// Scale every row of the input to unit length before estimation.
    pub normalize: bool,
}

impl Default for EstimateParams {
    fn default() -> Self {
        EstimateParams {
            g: 20,
            max_sweeps: simplex::DEFAULT_MAX_SWEEPS,
            nmf_tol: 1e-6,
            nmf_max_iter: 200,
            normalize: false,
        }
    }
}

impl EstimateParams {
    pub fn nmf(&self) -> SemiNmfParams {
        SemiNmfParams { tol: self.nmf_tol, max_iter: self.nmf_max_iter }
    }
}

/// One step of the entropy search: the order that was examined, its entropy
/// change, and whether it was taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub u: usize,
    pub delta_s: f64,
    pub accepted: bool,
}

/// Outcome of the selection rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selection {
    /// argmax of the error reduction.
    pub z: usize,
    /// Selected dimensionality.
    pub k_cd: usize,
    /// Orders examined, in order, with their entropy deltas.
    pub trace: Vec<SelectionStep>,
    /// True when no entropy increase existed anywhere and z was returned
    /// as a fallback.
    pub fallback: bool,
}

/// Full record of one estimation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionalityReport {
    pub g: usize,
    pub seed: u64,
    pub normalized: bool,
    pub curves: MetricCurves,
    pub z: usize,
    pub k_cd: usize,
    pub trace: Vec<SelectionStep>,
    pub fallback: bool,
    /// Orders where SSE rose against the previous order (logged, tolerated).
    pub sse_monotonicity_violations: Vec<usize>,
    pub params: EstimateParams,
    pub version: String,
}

/// Fit semi-NMF models for u = 1..=g on the candidate matrix and compute
/// the metric curves. Model u is seeded from `(seed, u)`; the fits are
/// independent and run concurrently.
pub fn fit_models(
    v: &CandidateMatrix,
    g: usize,
    seed_value: u64,
    params: SemiNmfParams,
) -> Result<(Vec<SemiNmfModel>, MetricCurves)> {
    if v.m() < g {
        return Err(ChemdimError::validation(format!(
            "fit_models: g = {g} exceeds the {} candidate rows",
            v.m()
        )));
    }
    if g < 3 {
        return Err(ChemdimError::validation("fit_models needs g >= 3"));
    }
    let x = v.spectra().t(); // p×m
    let models: Vec<SemiNmfModel> = (1..=g)
        .into_par_iter()
        .map(|u| semi_nmf(x.view(), u, seed::derive(seed_value, u as u64), params))
        .collect::<Result<_>>()?;

    let per_model: Vec<(f64, f64)> = models
        .par_iter()
        .map(|model| {
            let r = ResidualMatrix::from_model(v.spectra().view(), model);
            (metrics::sse(&r), metrics::total_entropy(&r, v.axis()))
        })
        .collect();
    let sse: Vec<f64> = per_model.iter().map(|t| t.0).collect();
    let entropy: Vec<f64> = per_model.iter().map(|t| t.1).collect();
    let epsilon = metrics::normalize_sse(&sse)?;
    let rho = metrics::error_reduction(&epsilon)?;
    Ok((models, MetricCurves { sse, epsilon, rho, entropy }))
}

/// Apply the selection rule to complete metric curves.
pub fn select_dimensionality(curves: &MetricCurves) -> Result<Selection> {
    let g = curves.g();
    if g < 3 {
        return Err(ChemdimError::validation("selection needs curves for g >= 3 orders"));
    }
    if curves.epsilon.len() != g || curves.entropy.len() != g || curves.rho.len() != g - 2 {
        return Err(ChemdimError::validation("selection needs complete curves for u = 1..=g"));
    }

    // z = argmax ρ(u), ties to the smallest u
    let mut z = 2;
    let mut best = curves.rho_at(2);
    for u in 3..=g - 1 {
        let r = curves.rho_at(u);
        if r > best {
            best = r;
            z = u;
        }
    }

    let mut trace = Vec::new();
    let delta_z = curves.entropy_delta(z);
    if delta_z > 0.0 {
        trace.push(SelectionStep { u: z, delta_s: delta_z, accepted: true });
        return Ok(Selection { z, k_cd: z, trace, fallback: false });
    }
    trace.push(SelectionStep { u: z, delta_s: delta_z, accepted: false });

    // expand outward from z inside [2, g-1]
    let mut radius = 1;
    loop {
        let lower = z.checked_sub(radius).filter(|&u| u >= 2);
        let upper = Some(z + radius).filter(|&u| u <= g - 1);
        if lower.is_none() && upper.is_none() {
            return Ok(Selection { z, k_cd: z, trace, fallback: true });
        }
        let lower_delta = lower.map(|u| curves.entropy_delta(u));
        let upper_delta = upper.map(|u| curves.entropy_delta(u));
        let lower_hit = lower_delta.map_or(false, |d| d > 0.0);
        let upper_hit = upper_delta.map_or(false, |d| d > 0.0);
        let winner = match (lower_hit, upper_hit) {
            (true, true) => {
                // both sides rose; take the greater increase, ties toward
                // the smaller order
                if lower_delta.unwrap() >= upper_delta.unwrap() {
                    lower
                } else {
                    upper
                }
            }
            (true, false) => lower,
            (false, true) => upper,
            (false, false) => None,
        };
        if let Some(u) = lower {
            trace.push(SelectionStep {
                u,
                delta_s: lower_delta.unwrap(),
                accepted: winner == Some(u),
            });
        }
        if let Some(u) = upper {
            trace.push(SelectionStep {
                u,
                delta_s: upper_delta.unwrap(),
                accepted: winner == Some(u),
            });
        }
        if let Some(k_cd) = winner {
            return Ok(Selection { z, k_cd, trace, fallback: false });
        }
        radius += 1;
    }
}

/// Run the whole estimation: candidate harvesting, model fitting and
/// selection. Deterministic for a fixed `(z, params, seed)` regardless of
/// thread count.
pub fn estimate(z: &DataMatrix, params: &EstimateParams, seed_value: u64) -> Result<DimensionalityReport> {
    let work = if params.normalize { z.normalized_rows() } else { z.clone() };
    let v = simplex::build_candidates(&work, params.g, seed_value, params.max_sweeps)?;
    estimate_from_candidates(&v, params, seed_value)
}

/// As [`estimate`] but starting from an existing candidate matrix.
pub fn estimate_from_candidates(
    v: &CandidateMatrix,
    params: &EstimateParams,
    seed_value: u64,
) -> Result<DimensionalityReport> {
    let (_, curves) = fit_models(v, params.g, seed_value, params.nmf())?;
    let selection = select_dimensionality(&curves)?;
    Ok(DimensionalityReport {
        g: params.g,
        seed: seed_value,
        normalized: params.normalize,
        sse_monotonicity_violations: curves.sse_monotonicity_violations(),
        curves,
        z: selection.z,
        k_cd: selection.k_cd,
        trace: selection.trace,
        fallback: selection.fallback,
        params: *params,
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}
