//! Chemical dimensionality analysis for hyperspectral datasets.
//!
//! The library estimates the number of spectrally separable sources in a
//! hyperspectral scene, extracts their endmember spectra, and reconstructs
//! per-endmember abundance images. The pipeline is:
//!
//! 1. Unfold a datacube into a samples-by-channels matrix ([`spectral`]).
//! 2. Harvest a pool of candidate endmembers by repeated simplex-volume
//!    maximization in an increasing number of dimensions ([`simplex`]).
//! 3. Fit one semi-nonnegative factorization per assumed source count and
//!    score each model by its sum of squared residuals and the Shannon
//!    entropy of the residual derivatives ([`numerics`], [`metrics`]).
//! 4. Select the dimensionality from the error-reduction and entropy curves
//!    ([`estimator`]), then pick concrete endmember spectra out of the
//!    candidate pool by iterative swapping ([`extractor`]).
//!
//! [`baselines`] provides reference dimensionality estimators (HFC, AIC,
//! MDL, factor indicator function, explained-variance thresholds) and
//! k-means++ clustering for comparison, and [`synth`]/[`benchmark`] generate
//! synthetic mixtures and drive repeated-run benchmarks.
//!
//! All stochastic operations take explicit seeds and produce results that do
//! not depend on the number of worker threads.

pub mod baselines;
pub mod benchmark;
pub mod error;
pub mod estimator;
pub mod extractor;
pub mod io;
pub mod metrics;
pub mod numerics;
pub mod seed;
pub mod simplex;
pub mod spectral;
pub mod synth;

pub use error::{ChemdimError, Result};
pub use estimator::{estimate, DimensionalityReport, EstimateParams};
pub use extractor::{extract, reconstruct, EndmemberSet};
pub use simplex::CandidateMatrix;
pub use spectral::{AbundanceMap, DataMatrix, HyperCube, PixelIndexMap, SpectralAxis};
