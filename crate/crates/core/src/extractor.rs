//! Endmember extraction and abundance reconstruction.
//!
//! Extraction starts from the k lowest-norm distinct candidate spectra and
//! then loops over the candidate pool: each candidate is tried in every
//! endmember slot, substitutions that lower the total reconstruction L2
//! are collected, and among those the one with the highest reconstruction
//! entropy is accepted (whether or not it is also the L2 minimum). Every
//! accepted swap strictly lowers the L2 score, so no endmember set can
//! repeat and the loop terminates.
//!
//! All candidate-set solves run against the Gram matrix of the pool:
//! endmembers are rows of the pool, so every normal-equation block is a
//! submatrix of one precomputed m-by-m product.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{ChemdimError, Result};
use crate::metrics;
use crate::numerics::{nnls_batch, nnls_batch_gram};
use crate::simplex::CandidateMatrix;
use crate::spectral::{refold, AbundanceMap, DataMatrix, PixelIndexMap};

/// A selected set of endmember spectra. Rows are bit-exact copies of
/// candidate rows, pairwise distinct.
#[derive(Debug, Clone)]
pub struct EndmemberSet {
    spectra: Array2<f64>,
    candidate_indices: Vec<usize>,
    source_rows: Vec<usize>,
    p_l2: f64,
    p_s: f64,
    /// Total L2 after initialization and after each accepted swap;
    /// strictly decreasing.
    swap_history: Vec<f64>,
}

impl EndmemberSet {
    pub fn k(&self) -> usize {
        self.spectra.nrows()
    }

    /// k-by-p endmember spectra.
    pub fn spectra(&self) -> &Array2<f64> {
        &self.spectra
    }

    /// Row indices into the candidate matrix.
    pub fn candidate_indices(&self) -> &[usize] {
        &self.candidate_indices
    }

    /// Row indices into the original data matrix the candidates came from.
    pub fn source_rows(&self) -> &[usize] {
        &self.source_rows
    }

    pub fn p_l2(&self) -> f64 {
        self.p_l2
    }

    pub fn p_s(&self) -> f64 {
        self.p_s
    }

    pub fn swap_history(&self) -> &[f64] {
        &self.swap_history
    }

    pub fn ids(&self) -> Vec<String> {
        (0..self.k()).map(|i| format!("endmember_{i:02}")).collect()
    }
}

fn rows_equal(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| x == y)
}

/// Indices of the `k` distinct candidate rows with the smallest L2 norms.
/// Exact duplicate rows are skipped; ties in norm break toward the lower
/// row index.
fn lowest_norm_distinct(v: &CandidateMatrix, k: usize) -> Result<Vec<usize>> {
    let m = v.m();
    if k < 1 {
        return Err(ChemdimError::validation("endmember count must be at least 1"));
    }
    let mut order: Vec<(f64, usize)> = (0..m)
        .map(|r| (v.row(r).iter().map(|x| x * x).sum::<f64>(), r))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for (_, r) in order {
        if chosen.iter().any(|&c| rows_equal(v.row(c), v.row(r))) {
            continue;
        }
        chosen.push(r);
        if chosen.len() == k {
            return Ok(chosen);
        }
    }
    Err(ChemdimError::validation(format!(
        "only {} distinct candidate rows, need {k}",
        chosen.len()
    )))
}

/// Gram-backed scorer for candidate index sets.
struct SetScorer<'a> {
    v: &'a CandidateMatrix,
    gram: Array2<f64>,
}

impl<'a> SetScorer<'a> {
    fn new(v: &'a CandidateMatrix) -> Self {
        let gram = v.spectra().dot(&v.spectra().t());
        SetScorer { v, gram }
    }

    /// NNLS weights of every pool row against the set, plus the total
    /// squared reconstruction L2.
    fn solve(&self, indices: &[usize]) -> (Array2<f64>, f64) {
        let k = indices.len();
        let m = self.v.m();
        let a = Array2::from_shape_fn((k, k), |(r, c)| self.gram[[indices[r], indices[c]]]);
        let b = Array2::from_shape_fn((k, m), |(r, c)| self.gram[[indices[r], c]]);
        let x = nnls_batch_gram(&a, &b);
        let mut p_l2 = 0.0;
        for c in 0..m {
            let mut cross = 0.0;
            let mut fit = 0.0;
            for r in 0..k {
                cross += x[[r, c]] * b[[r, c]];
                for s in 0..k {
                    fit += x[[r, c]] * a[[r, s]] * x[[s, c]];
                }
            }
            p_l2 += (self.gram[[c, c]] - 2.0 * cross + fit).max(0.0);
        }
        (x, p_l2)
    }

    /// Total reconstruction entropy of the residuals for a solved set.
    fn entropy(&self, indices: &[usize], x: &Array2<f64>) -> f64 {
        let k = indices.len();
        let p = self.v.p();
        let mut e = Array2::zeros((k, p));
        for (r, &idx) in indices.iter().enumerate() {
            e.row_mut(r).assign(&self.v.row(idx));
        }
        let residuals = &x.t().dot(&e) - self.v.spectra();
        let r = metrics::ResidualMatrix::from_values(k, residuals);
        metrics::total_entropy(&r, self.v.axis())
    }
}

fn build_set(
    v: &CandidateMatrix,
    indices: Vec<usize>,
    p_l2: f64,
    p_s: f64,
    swap_history: Vec<f64>,
) -> EndmemberSet {
    let k = indices.len();
    let p = v.p();
    let mut spectra = Array2::zeros((k, p));
    for (r, &idx) in indices.iter().enumerate() {
        spectra.row_mut(r).assign(&v.row(idx));
    }
    let source_rows = indices.iter().map(|&i| v.provenance()[i].source_row).collect();
    EndmemberSet { spectra, candidate_indices: indices, source_rows, p_l2, p_s, swap_history }
}

/// Initialize an endmember set with the `k` lowest-norm distinct candidates.
pub fn init_endmembers(v: &CandidateMatrix, k: usize) -> Result<EndmemberSet> {
    let indices = lowest_norm_distinct(v, k)?;
    let scorer = SetScorer::new(v);
    let (x, p_l2) = scorer.solve(&indices);
    let p_s = scorer.entropy(&indices, &x);
    Ok(build_set(v, indices, p_l2, p_s, vec![p_l2]))
}

/// Reconstruction scores of a set against the pool: the total squared L2
/// of the NNLS residuals and their total entropy.
pub fn score_set(e: &EndmemberSet, v: &CandidateMatrix) -> Result<(f64, f64)> {
    if e.spectra.ncols() != v.p() {
        return Err(ChemdimError::validation("endmember channels must match the pool"));
    }
    let design = e.spectra.t(); // p×k
    let targets = v.spectra().t(); // p×m
    let x = nnls_batch(design.view(), targets.view())?;
    let residuals = &x.t().dot(&e.spectra) - v.spectra();
    let p_l2 = residuals.iter().map(|r| r * r).sum();
    let r = metrics::ResidualMatrix::from_values(e.k(), residuals);
    let p_s = metrics::total_entropy(&r, v.axis());
    Ok((p_l2, p_s))
}

/// Extract `k_cd` endmembers from the candidate pool by iterative swapping.
///
/// Deterministic: candidates are visited in ascending pool order and slot
/// evaluations are combined in slot order regardless of scheduling.
pub fn extract(v: &CandidateMatrix, k_cd: usize) -> Result<EndmemberSet> {
    let mut indices = lowest_norm_distinct(v, k_cd)?;
    let scorer = SetScorer::new(v);
    let (_, mut p_l2) = scorer.solve(&indices);
    let mut history = vec![p_l2];
    let m = v.m();
    let k = k_cd;

    loop {
        let mut swapped = false;
        for c in 0..m {
            // a candidate equal to a current member is either a no-op (its
            // own slot) or breaks distinctness (any other slot)
            if indices.iter().any(|&i| rows_equal(v.row(i), v.row(c))) {
                continue;
            }
            let current = p_l2;
            // try the candidate in every slot; keep L2-improving trials
            let trials: Vec<Option<(usize, f64, Array2<f64>)>> = (0..k)
                .into_par_iter()
                .map(|j| {
                    let mut trial = indices.clone();
                    trial[j] = c;
                    let (x, pl2) = scorer.solve(&trial);
                    (pl2 < current).then_some((j, pl2, x))
                })
                .collect();
            let improving: Vec<(usize, f64, Array2<f64>)> = trials.into_iter().flatten().collect();
            if improving.is_empty() {
                continue;
            }
            // among the improving substitutions take the entropy maximum
            let scored: Vec<(usize, f64, f64)> = improving
                .into_par_iter()
                .map(|(j, pl2, x)| {
                    let mut trial = indices.clone();
                    trial[j] = c;
                    let ps = scorer.entropy(&trial, &x);
                    (j, pl2, ps)
                })
                .collect();
            let mut best = scored[0];
            for s in &scored[1..] {
                if s.2 > best.2 {
                    best = *s;
                }
            }
            indices[best.0] = c;
            p_l2 = best.1;
            history.push(p_l2);
            swapped = true;
        }
        if !swapped {
            break;
        }
    }

    let (x, final_l2) = scorer.solve(&indices);
    let p_s = scorer.entropy(&indices, &x);
    Ok(build_set(v, indices, final_l2, p_s, history))
}

/// NNLS abundance weights of every sample in `z` against the endmembers,
/// with per-endmember image grids when a pixel map is given.
pub fn reconstruct(
    z: &DataMatrix,
    e: &EndmemberSet,
    map: Option<&PixelIndexMap>,
) -> Result<(AbundanceMap, Option<Vec<Array2<f64>>>)> {
    reconstruct_spectra(z, &e.spectra, &e.ids(), map)
}

/// As [`reconstruct`] for bare spectra rows (endmembers loaded from disk).
pub fn reconstruct_spectra(
    z: &DataMatrix,
    spectra: &Array2<f64>,
    ids: &[String],
    map: Option<&PixelIndexMap>,
) -> Result<(AbundanceMap, Option<Vec<Array2<f64>>>)> {
    if z.ncols() != spectra.ncols() {
        return Err(ChemdimError::validation(format!(
            "data has {} channels but endmembers have {}",
            z.ncols(),
            spectra.ncols()
        )));
    }
    if ids.len() != spectra.nrows() {
        return Err(ChemdimError::validation("one id per endmember row required"));
    }
    if let Some(map) = map {
        if map.len() != z.nrows() {
            return Err(ChemdimError::validation(format!(
                "pixel map covers {} pixels but data has {} rows",
                map.len(),
                z.nrows()
            )));
        }
    }
    let k = spectra.nrows();
    let n = z.nrows();
    let a = spectra.dot(&spectra.t()); // k×k

    // fixed-size column blocks keep memory flat and make the parallel
    // split independent of the thread count
    const BLOCK: usize = 2048;
    let blocks: Vec<(usize, usize)> =
        (0..n).step_by(BLOCK).map(|s| (s, (s + BLOCK).min(n))).collect();
    let solved: Vec<Array2<f64>> = blocks
        .par_iter()
        .map(|&(start, end)| {
            let rows = z.values().slice(ndarray::s![start..end, ..]);
            let b = spectra.dot(&rows.t()); // k×block
            nnls_batch_gram(&a, &b)
        })
        .collect();

    let mut weights = Array2::zeros((n, k));
    for (&(start, end), block) in blocks.iter().zip(&solved) {
        for (offset, r) in (start..end).enumerate() {
            for j in 0..k {
                weights[[r, j]] = block[[j, offset]];
            }
        }
    }
    let abundance = AbundanceMap::new(weights, ids.to_vec())?;

    let images = match map {
        Some(map) => {
            let mut grids = Vec::with_capacity(k);
            for j in 0..k {
                let column: Vec<f64> =
                    (0..n).map(|r| abundance.weights()[[r, j]]).collect();
                grids.push(refold(map, &column, map.nx(), map.ny())?);
            }
            Some(grids)
        }
        None => None,
    };
    Ok((abundance, images))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::CandidateProvenance;
    use crate::spectral::{unfold, HyperCube, SpectralAxis};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn pool(spectra: Array2<f64>) -> CandidateMatrix {
        let m = spectra.nrows();
        let p = spectra.ncols();
        let prov = (0..m)
            .map(|r| CandidateProvenance { vertex_count: 2, slot: 0, source_row: r + 100 })
            .collect();
        CandidateMatrix::from_parts(spectra, prov, SpectralAxis::unit(p).unwrap()).unwrap()
    }

    #[test]
    fn init_skips_duplicates_and_orders_by_norm() {
        // norms 1, 2, 2 (duplicate), 3
        let v = pool(array![
            [1.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.0, 0.0, 3.0],
        ]);
        let e = init_endmembers(&v, 2).unwrap();
        assert_eq!(e.candidate_indices(), &[0, 1]);
        let e3 = init_endmembers(&v, 3).unwrap();
        assert_eq!(e3.candidate_indices(), &[0, 1, 3]);
        assert!(init_endmembers(&v, 4).is_err());
    }

    #[test]
    fn init_matches_sort_and_dedup_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        let base = Array2::from_shape_fn((30, 6), |_| rng.random::<f64>());
        // duplicate a third of the rows
        let mut rows: Vec<Vec<f64>> = base.rows().into_iter().map(|r| r.to_vec()).collect();
        for i in 0..10 {
            let src = rows[i].clone();
            rows.push(src);
        }
        let m = rows.len();
        let spectra = Array2::from_shape_fn((m, 6), |(r, c)| rows[r][c]);
        let v = pool(spectra.clone());

        // independent oracle: sort (norm, index), then first k pairwise-new rows
        let mut order: Vec<usize> = (0..m).collect();
        let norm = |r: usize| rows[r].iter().map(|x| x * x).sum::<f64>();
        order.sort_by(|&a, &b| norm(a).partial_cmp(&norm(b)).unwrap().then(a.cmp(&b)));
        let mut expected = Vec::new();
        for r in order {
            if expected.iter().all(|&e: &usize| rows[e] != rows[r]) {
                expected.push(r);
            }
            if expected.len() == 5 {
                break;
            }
        }
        let e = init_endmembers(&v, 5).unwrap();
        assert_eq!(e.candidate_indices(), expected.as_slice());
    }

    #[test]
    fn conical_span_scores_zero_l2() {
        let e_rows = array![[1.0, 0.0, 0.5, 0.0], [0.0, 1.0, 0.0, 0.5]];
        // every pool row is a nonnegative combination of the two endmembers
        let combos = [(1.0, 0.0), (0.0, 1.0), (0.5, 0.5), (2.0, 0.3), (0.0, 0.0)];
        let spectra = Array2::from_shape_fn((5, 4), |(r, c)| {
            combos[r].0 * e_rows[[0, c]] + combos[r].1 * e_rows[[1, c]]
        });
        let v = pool(spectra);
        let set = init_endmembers(&v, 2).unwrap();
        // lowest norms are the zero row and another combo; score the true pair
        let full = extract(&v, 2).unwrap();
        assert!(full.p_l2() < 1e-16, "P_L2 = {}", full.p_l2());
        let (pl2, _) = score_set(&full, &v).unwrap();
        assert!(pl2 < 1e-16);
        drop(set);
    }

    #[test]
    fn score_matches_per_row_nnls_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let spectra = Array2::from_shape_fn((5, 4), |_| rng.random::<f64>());
        let v = pool(spectra.clone());
        let e = init_endmembers(&v, 2).unwrap();
        let (pl2, _) = score_set(&e, &v).unwrap();
        // oracle: single NNLS per pool row
        let design = e.spectra().t().to_owned();
        let mut total = 0.0;
        for r in 0..5 {
            let x = crate::numerics::nnls(design.view(), spectra.row(r)).unwrap();
            let fit = design.dot(&x);
            total += fit
                .iter()
                .zip(spectra.row(r).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        assert_abs_diff_eq!(pl2, total, epsilon = 1e-9 * (1.0 + total));
    }

    #[test]
    fn pool_with_exactly_k_distinct_rows_returns_them() {
        let distinct = array![[1.0, 0.0, 1.0], [0.0, 2.0, 0.0], [3.0, 0.0, 0.0]];
        let mut rows = Vec::new();
        for r in 0..9 {
            rows.push(distinct.row(r % 3).to_vec());
        }
        let spectra = Array2::from_shape_fn((9, 3), |(r, c)| rows[r][c]);
        let v = pool(spectra);
        let e = extract(&v, 3).unwrap();
        assert!(e.p_l2() < 1e-18);
        let mut got: Vec<Vec<f64>> =
            e.spectra().rows().into_iter().map(|r| r.to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<Vec<f64>> =
            distinct.rows().into_iter().map(|r| r.to_vec()).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    /// Pool of conical mixtures that also contains the planted spectra.
    fn planted_pool(k: usize, m: usize, p: usize, seed: u64) -> (CandidateMatrix, Vec<usize>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut sources = Array2::zeros((k, p));
        for i in 0..k {
            for j in 0..p {
                let center = (i * p / k + p / (2 * k)) as f64;
                let d = j as f64 - center;
                sources[[i, j]] = (-d * d / 6.0).exp();
            }
        }
        let mut spectra = Array2::zeros((m, p));
        let mut planted = Vec::new();
        for r in 0..m {
            if r % (m / k).max(1) == 0 && planted.len() < k {
                spectra.row_mut(r).assign(&sources.row(planted.len()));
                planted.push(r);
            } else {
                let mut w = vec![0.0; k];
                let mut total = 0.0;
                for wi in w.iter_mut() {
                    *wi = rng.random::<f64>();
                    total += *wi;
                }
                for j in 0..p {
                    let mut acc = 0.0;
                    for i in 0..k {
                        acc += w[i] / total * sources[[i, j]];
                    }
                    spectra[[r, j]] = acc;
                }
            }
        }
        (pool(spectra), planted)
    }

    #[test]
    fn extraction_recovers_planted_pure_rows() {
        let (v, planted) = planted_pool(3, 40, 24, 77);
        let e = extract(&v, 3).unwrap();
        let mut got = e.candidate_indices().to_vec();
        got.sort_unstable();
        let mut want = planted;
        want.sort_unstable();
        assert_eq!(got, want, "P_L2 = {}", e.p_l2());
    }

    #[test]
    fn swap_history_is_strictly_decreasing_and_extract_is_deterministic() {
        let (v, _) = planted_pool(4, 50, 30, 5);
        let a = extract(&v, 4).unwrap();
        for w in a.swap_history().windows(2) {
            assert!(w[1] < w[0], "history not strictly decreasing: {:?}", a.swap_history());
        }
        let b = extract(&v, 4).unwrap();
        assert_eq!(a.candidate_indices(), b.candidate_indices());
        assert_eq!(a.p_l2().to_bits(), b.p_l2().to_bits());
    }

    #[test]
    fn extracted_rows_are_bit_exact_pool_rows_and_distinct() {
        let (v, _) = planted_pool(3, 30, 16, 9);
        let e = extract(&v, 3).unwrap();
        for (row, &idx) in e.spectra().rows().into_iter().zip(e.candidate_indices()) {
            for (a, b) in row.iter().zip(v.row(idx).iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        for i in 0..e.k() {
            for j in (i + 1)..e.k() {
                assert!(!rows_equal(e.spectra().row(i), e.spectra().row(j)));
            }
        }
    }

    #[test]
    fn reconstruct_on_endmember_pixels_gives_indicator_rows() {
        let (v, planted) = planted_pool(3, 30, 20, 13);
        let e = extract(&v, 3).unwrap();
        drop(planted);
        // data rows are the endmembers themselves
        let z = DataMatrix::new(e.spectra().clone(), v.axis().clone()).unwrap();
        let (ab, images) = reconstruct(&z, &e, None).unwrap();
        assert!(images.is_none());
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(ab.weights()[[i, j]], expected, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn zero_pixel_gets_zero_weights_and_images_refold() {
        let axis = SpectralAxis::unit(3).unwrap();
        let e_spectra = array![[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]];
        let v = pool(e_spectra.clone());
        let e = extract(&v, 2).unwrap();

        // 2x2 cube: one zero pixel, three mixtures
        let vals = vec![
            0.0, 0.0, 0.0, // (0,0)
            1.0, 0.0, 0.0, // (0,1)
            0.0, 2.0, 2.0, // (1,0)
            1.0, 1.0, 1.0, // (1,1)
        ];
        let cube = HyperCube::new(2, 2, vals, axis).unwrap();
        let (z, map) = unfold(&cube);
        let (ab, images) = reconstruct(&z, &e, Some(&map)).unwrap();
        let images = images.unwrap();
        assert_eq!(images.len(), 2);
        for j in 0..2 {
            assert_abs_diff_eq!(ab.weights()[[0, j]], 0.0, epsilon = 1e-12);
        }
        // image grids carry the per-pixel weights at their (x, y) spots
        for j in 0..2 {
            assert_abs_diff_eq!(images[j][[0, 0]], ab.weights()[[0, j]], epsilon = 1e-12);
            assert_abs_diff_eq!(images[j][[1, 1]], ab.weights()[[3, j]], epsilon = 1e-12);
        }
    }

    #[test]
    fn reconstruct_rejects_channel_mismatch() {
        let v = pool(array![[1.0, 0.0, 0.2], [0.0, 1.0, 0.1]]);
        let e = extract(&v, 2).unwrap();
        let z = DataMatrix::new(Array2::zeros((2, 4)), SpectralAxis::unit(4).unwrap()).unwrap();
        assert!(reconstruct(&z, &e, None).is_err());
    }
}
