//! Simplex volume maximization and candidate endmember harvesting.
//!
//! A simplex with `i` vertices in (i-1)-dimensional reduced coordinates is
//! scored by `|det(E)| / (i-1)!`, where `E` is the vertex matrix augmented
//! with a leading all-ones row. One maximization pass sweeps every sample
//! into every vertex slot and keeps substitutions that strictly increase
//! the volume. Running the pass for vertex counts 2..=g and stacking the
//! winning spectra yields the candidate matrix the rest of the pipeline
//! works on; g = 20 gives the usual 209-row pool.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{ChemdimError, Result};
use crate::numerics::{svd_reduce, ReducedScores};
use crate::spectral::{DataMatrix, SpectralAxis};

/// Default sweep cap per maximization pass.
pub const DEFAULT_MAX_SWEEPS: usize = 5;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Volume of a simplex given its augmented vertex matrix: the first row is
/// all ones, column `j` carries vertex `j`'s reduced coordinates below it.
/// A singular matrix (degenerate simplex) has volume zero.
pub fn simplex_volume(augmented: &Array2<f64>) -> Result<f64> {
    let i = augmented.nrows();
    if i < 2 || augmented.ncols() != i {
        return Err(ChemdimError::validation(format!(
            "simplex volume needs a square augmented matrix with i >= 2, got {}x{}",
            augmented.nrows(),
            augmented.ncols()
        )));
    }
    if augmented.iter().any(|v| !v.is_finite()) {
        return Err(ChemdimError::validation("simplex matrix contains non-finite values"));
    }
    let m = DMatrix::from_fn(i, i, |r, c| augmented[[r, c]]);
    Ok(m.lu().determinant().abs() / factorial(i - 1))
}

/// Build the augmented matrix from `i` vertices given as rows of reduced
/// coordinates (each of length i-1).
pub fn augment(vertices: &Array2<f64>) -> Result<Array2<f64>> {
    let i = vertices.nrows();
    if i < 2 || vertices.ncols() != i - 1 {
        return Err(ChemdimError::validation(format!(
            "expected i vertices of dimension i-1, got {}x{}",
            vertices.nrows(),
            vertices.ncols()
        )));
    }
    let mut e = Array2::ones((i, i));
    for (j, v) in vertices.rows().into_iter().enumerate() {
        for (r, &x) in v.iter().enumerate() {
            e[[r + 1, j]] = x;
        }
    }
    Ok(e)
}

/// Outcome of one maximization pass.
#[derive(Debug, Clone)]
pub struct NfindrPass {
    /// Row indices of the winning vertices, one per slot.
    pub vertex_rows: Vec<usize>,
    /// Volume of the returned simplex.
    pub volume: f64,
    /// Volume of the random initial simplex.
    pub initial_volume: f64,
    /// Sweeps actually executed.
    pub sweeps: usize,
    /// True when the last sweep made no substitution (local maximum).
    pub converged: bool,
}

/// Working state for a pass: the augmented matrix, its determinant and its
/// inverse. Replacing column `j` by a candidate `v` scales the determinant
/// by `(E⁻¹ v)_j`, so each candidate is screened with one matrix-vector
/// product instead of a fresh determinant.
struct SimplexState {
    e: DMatrix<f64>,
    det_abs: f64,
    inv: Option<DMatrix<f64>>,
}

impl SimplexState {
    fn new(scores: &ReducedScores, rows: &[usize]) -> Self {
        let i = rows.len();
        let s = scores.scores();
        let e = DMatrix::from_fn(i, i, |r, c| if r == 0 { 1.0 } else { s[[rows[c], r - 1]] });
        let lu = e.clone().lu();
        let det_abs = lu.determinant().abs();
        let inv = if det_abs > 0.0 { lu.try_inverse() } else { None };
        SimplexState { e, det_abs, inv }
    }

    fn replace_column(&mut self, j: usize, scores: &ReducedScores, row: usize) {
        let s = scores.scores();
        let i = self.e.nrows();
        for r in 0..i {
            self.e[(r, j)] = if r == 0 { 1.0 } else { s[[row, r - 1]] };
        }
        let lu = self.e.clone().lu();
        self.det_abs = lu.determinant().abs();
        self.inv = if self.det_abs > 0.0 { lu.try_inverse() } else { None };
    }
}

/// One simplex maximization pass over reduced scores with `d = i - 1`.
///
/// Starts from `i` distinct random rows, then sweeps every row into every
/// vertex slot, keeping substitutions that strictly increase the volume,
/// until a sweep changes nothing or `max_sweeps` is exhausted.
pub fn nfindr_pass(
    scores: &ReducedScores,
    i: usize,
    seed: u64,
    max_sweeps: usize,
) -> Result<NfindrPass> {
    let n = scores.n();
    if i < 2 {
        return Err(ChemdimError::validation("nfindr needs at least 2 vertices"));
    }
    if n < i {
        return Err(ChemdimError::validation(format!("nfindr needs at least {i} rows, got {n}")));
    }
    if scores.d() != i - 1 {
        return Err(ChemdimError::validation(format!(
            "nfindr with {i} vertices needs {} reduced components, got {}",
            i - 1,
            scores.d()
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = rand::seq::index::sample(&mut rng, n, i).into_vec();
    let mut state = SimplexState::new(scores, &rows);
    let initial_volume = state.det_abs / factorial(i - 1);

    let mut sweeps = 0;
    let mut converged = false;
    let mut candidate = nalgebra::DVector::zeros(i);
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut changed = false;
        for r in 0..n {
            candidate[0] = 1.0;
            for c in 0..i - 1 {
                candidate[c + 1] = scores.scores()[[r, c]];
            }
            if let Some(inv) = &state.inv {
                // ratio test per slot; accept the first strict improvement
                let t = inv * &candidate;
                if let Some(j) = (0..i).find(|&j| t[j].abs() > 1.0) {
                    rows[j] = r;
                    state.replace_column(j, scores, r);
                    changed = true;
                }
            } else {
                // degenerate simplex: fall back to full determinants
                let base = state.det_abs;
                let mut accepted = None;
                for j in 0..i {
                    let mut trial = state.e.clone();
                    for c in 0..i {
                        trial[(c, j)] = candidate[c];
                    }
                    if trial.lu().determinant().abs() > base {
                        accepted = Some(j);
                        break;
                    }
                }
                if let Some(j) = accepted {
                    rows[j] = r;
                    state.replace_column(j, scores, r);
                    changed = true;
                }
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }

    Ok(NfindrPass {
        vertex_rows: rows,
        volume: state.det_abs / factorial(i - 1),
        initial_volume,
        sweeps,
        converged,
    })
}

/// Where a candidate row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CandidateProvenance {
    /// Vertex count of the maximization that produced the row.
    pub vertex_count: usize,
    /// Slot within that simplex.
    pub slot: usize,
    /// Source row in the input matrix.
    pub source_row: usize,
}

/// Pool of candidate endmember spectra harvested across simplex dimensions.
/// Every row is a bit-exact copy of a row of the input matrix.
#[derive(Debug, Clone)]
pub struct CandidateMatrix {
    spectra: Array2<f64>,
    provenance: Vec<CandidateProvenance>,
    axis: SpectralAxis,
}

impl CandidateMatrix {
    pub fn from_parts(
        spectra: Array2<f64>,
        provenance: Vec<CandidateProvenance>,
        axis: SpectralAxis,
    ) -> Result<Self> {
        if spectra.nrows() != provenance.len() {
            return Err(ChemdimError::validation("provenance length must match row count"));
        }
        if spectra.ncols() != axis.len() {
            return Err(ChemdimError::validation("candidate channels must match axis length"));
        }
        Ok(CandidateMatrix { spectra, provenance, axis })
    }

    pub fn m(&self) -> usize {
        self.spectra.nrows()
    }

    pub fn p(&self) -> usize {
        self.spectra.ncols()
    }

    pub fn spectra(&self) -> &Array2<f64> {
        &self.spectra
    }

    pub fn provenance(&self) -> &[CandidateProvenance] {
        &self.provenance
    }

    pub fn axis(&self) -> &SpectralAxis {
        &self.axis
    }

    pub fn row(&self, r: usize) -> ArrayView1<'_, f64> {
        self.spectra.row(r)
    }
}

/// Candidate count for a given `g`: sum of 2..=g.
pub fn candidate_count(g: usize) -> usize {
    g * (g + 1) / 2 - 1
}

/// Harvest the candidate matrix for vertex counts 2..=g.
///
/// Reduction happens once at g-1 components; pass `i` uses the leading
/// i-1 columns, which equal a direct (i-1)-component reduction. Pass `i`
/// is seeded with `seed ^ i`, so the per-dimension maximizations are
/// independent and can run concurrently; rows are stacked in ascending `i`
/// regardless of scheduling.
pub fn build_candidates(
    z: &DataMatrix,
    g: usize,
    seed: u64,
    max_sweeps: usize,
) -> Result<CandidateMatrix> {
    validate_g(z, g)?;
    let scores = svd_reduce(z, g - 1)?;
    build_candidates_from_scores(z, &scores, g, seed, max_sweeps)
}

/// As [`build_candidates`] but with a caller-provided reduction (at least
/// g-1 components). Lets repeated runs on the same data share the one
/// expensive decomposition.
pub fn build_candidates_from_scores(
    z: &DataMatrix,
    scores: &ReducedScores,
    g: usize,
    seed: u64,
    max_sweeps: usize,
) -> Result<CandidateMatrix> {
    validate_g(z, g)?;
    if scores.d() < g - 1 {
        return Err(ChemdimError::validation(format!(
            "need {} reduced components for g = {g}, got {}",
            g - 1,
            scores.d()
        )));
    }
    if scores.n() != z.nrows() {
        return Err(ChemdimError::validation("scores row count must match data"));
    }

    let passes: Vec<NfindrPass> = (2..=g)
        .into_par_iter()
        .map(|i| {
            let truncated = scores.truncated(i - 1);
            nfindr_pass(&truncated, i, seed ^ i as u64, max_sweeps)
        })
        .collect::<Result<_>>()?;

    let m = candidate_count(g);
    let p = z.ncols();
    let mut spectra = Array2::zeros((m, p));
    let mut provenance = Vec::with_capacity(m);
    let mut out = 0;
    for (idx, pass) in passes.iter().enumerate() {
        let i = idx + 2;
        for (slot, &row) in pass.vertex_rows.iter().enumerate() {
            spectra.row_mut(out).assign(&z.row(row));
            provenance.push(CandidateProvenance { vertex_count: i, slot, source_row: row });
            out += 1;
        }
    }
    debug_assert_eq!(out, m);
    CandidateMatrix::from_parts(spectra, provenance, z.axis().clone())
}

fn validate_g(z: &DataMatrix, g: usize) -> Result<()> {
    if g < 3 {
        return Err(ChemdimError::validation("candidate harvesting needs g >= 3"));
    }
    if z.nrows() < g {
        return Err(ChemdimError::validation(format!(
            "candidate harvesting needs at least g = {g} rows, got {}",
            z.nrows()
        )));
    }
    if g - 1 > z.nrows().min(z.ncols()) {
        return Err(ChemdimError::validation(format!(
            "g = {g} needs rank {} but the matrix is {}x{}",
            g - 1,
            z.nrows(),
            z.ncols()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SpectralAxis;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn scores_from(points: Array2<f64>) -> ReducedScores {
        let d = points.ncols();
        ReducedScores::from_parts(points, Array2::zeros((0, d)), vec![0.0; d])
    }

    #[test]
    fn unit_interval_simplex_has_volume_one() {
        let e = array![[1.0, 1.0], [0.0, 1.0]];
        assert_eq!(simplex_volume(&e).unwrap(), 1.0);
    }

    #[test]
    fn unit_right_triangle_has_volume_half() {
        let vertices = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let e = augment(&vertices).unwrap();
        assert!((simplex_volume(&e).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn duplicated_vertex_gives_zero_volume() {
        let vertices = array![[0.0, 0.0], [1.0, 2.0], [1.0, 2.0]];
        let e = augment(&vertices).unwrap();
        assert_eq!(simplex_volume(&e).unwrap(), 0.0);
    }

    #[test]
    fn nfindr_finds_triangle_vertices_among_interior_points() {
        // extreme points win regardless of the random start
        let mut pts = vec![[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]];
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..40 {
            let a = rng.random::<f64>();
            let b = rng.random::<f64>() * (1.0 - a);
            let c = 1.0 - a - b;
            pts.push([4.0 * b + 0.2 * c, 4.0 * c + 0.2 * a]);
        }
        let points = Array2::from_shape_fn((pts.len(), 2), |(r, c)| pts[r][c]);
        let scores = scores_from(points);
        for seed in 0..5 {
            let pass = nfindr_pass(&scores, 3, seed, 10).unwrap();
            let mut rows = pass.vertex_rows.clone();
            rows.sort_unstable();
            assert_eq!(rows, vec![0, 1, 2], "seed {seed}");
            assert!(pass.converged);
            assert!((pass.volume - 8.0).abs() < 1e-12); // |det|/2! = 8
        }
    }

    #[test]
    fn identical_rows_give_zero_volume_and_terminate() {
        let points = Array2::from_elem((10, 2), 3.0);
        let scores = scores_from(points);
        let pass = nfindr_pass(&scores, 3, 1, 5).unwrap();
        assert_eq!(pass.volume, 0.0);
        assert_eq!(pass.vertex_rows.len(), 3);
        assert!(pass.converged);
    }

    #[test]
    fn one_dimensional_pass_matches_exhaustive_pair_search() {
        // two ground-truth endpoints plus convex mixtures
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let mut vals = vec![-2.5, 7.0];
        for _ in 0..60 {
            let t = rng.random::<f64>();
            vals.push(-2.5 * t + 7.0 * (1.0 - t));
        }
        let n = vals.len();
        let points = Array2::from_shape_fn((n, 1), |(r, _)| vals[r]);
        let scores = scores_from(points);

        // brute force: the pair with the largest |a - b|
        let mut best = (0, 1, 0.0);
        for a in 0..n {
            for b in (a + 1)..n {
                let vol = (vals[a] - vals[b]).abs();
                if vol > best.2 {
                    best = (a, b, vol);
                }
            }
        }
        let pass = nfindr_pass(&scores, 2, 9, 10).unwrap();
        let mut rows = pass.vertex_rows.clone();
        rows.sort_unstable();
        assert_eq!(rows, vec![best.0.min(best.1), best.0.max(best.1)]);
        assert!((pass.volume - best.2).abs() < 1e-12);
    }

    #[test]
    fn volume_never_drops_below_initial() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let points = Array2::from_shape_fn((30, 3), |_| rng.random::<f64>());
        let scores = scores_from(points);
        for seed in 0..10 {
            let pass = nfindr_pass(&scores, 4, seed, 5).unwrap();
            assert!(pass.volume >= pass.initial_volume);
        }
    }

    fn random_data(n: usize, p: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        DataMatrix::new(
            Array2::from_shape_fn((n, p), |_| rng.random::<f64>()),
            SpectralAxis::unit(p).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn candidate_counts_follow_the_g_formula() {
        assert_eq!(candidate_count(3), 5);
        assert_eq!(candidate_count(15), 119);
        assert_eq!(candidate_count(20), 209);
        assert_eq!(candidate_count(30), 464);
    }

    #[test]
    fn g3_harvest_yields_five_copies_of_input_rows() {
        let z = random_data(25, 8, 2);
        let v = build_candidates(&z, 3, 7, 5).unwrap();
        assert_eq!(v.m(), 5);
        for (row, prov) in v.spectra().rows().into_iter().zip(v.provenance()) {
            let source = z.row(prov.source_row);
            for (a, b) in row.iter().zip(source.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn g15_harvest_has_119_rows_in_ascending_order() {
        let z = random_data(60, 20, 3);
        let v = build_candidates(&z, 15, 11, 5).unwrap();
        assert_eq!(v.m(), 119);
        let mut counts = std::collections::BTreeMap::new();
        for prov in v.provenance() {
            *counts.entry(prov.vertex_count).or_insert(0usize) += 1;
        }
        for i in 2..=15 {
            assert_eq!(counts[&i], i);
        }
        let levels: Vec<usize> = v.provenance().iter().map(|p| p.vertex_count).collect();
        assert!(levels.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn harvest_is_deterministic_for_a_fixed_seed() {
        let z = random_data(40, 12, 4);
        let a = build_candidates(&z, 8, 21, 5).unwrap();
        let b = build_candidates(&z, 8, 21, 5).unwrap();
        assert_eq!(a.provenance(), b.provenance());
        for (x, y) in a.spectra().iter().zip(b.spectra().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let c = build_candidates(&z, 8, 22, 5).unwrap();
        assert_ne!(a.provenance(), c.provenance());
    }

    #[test]
    fn precomputed_scores_match_direct_harvest() {
        let z = random_data(40, 12, 6);
        let direct = build_candidates(&z, 8, 5, 5).unwrap();
        let scores = svd_reduce(&z, 10).unwrap();
        let shared = build_candidates_from_scores(&z, &scores, 8, 5, 5).unwrap();
        assert_eq!(direct.provenance(), shared.provenance());
    }

    #[test]
    fn harvest_rejects_bad_g() {
        let z = random_data(10, 4, 1);
        assert!(build_candidates(&z, 2, 0, 5).is_err());
        assert!(build_candidates(&z, 11, 0, 5).is_err()); // n < g
        assert!(build_candidates(&z, 6, 0, 5).is_err()); // g-1 > min(n, p)
    }
}
