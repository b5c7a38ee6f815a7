//! Core data types: spectral axis, sample matrices, datacubes and the
//! unfold/refold mapping between them.
//!
//! A datacube holds one spectrum per spatial pixel. Unfolding reshapes it
//! into a 2-D matrix (one row per pixel) and records where each row came
//! from, so abundance values computed on rows can be folded back into
//! images. Unfolding is row-major over (x, y) and preserves channel order,
//! making the map deterministic.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{ChemdimError, Result};

/// Channel positions (wavenumbers or plain channel indices), strictly
/// increasing, length at least 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralAxis {
    values: Vec<f64>,
}

impl SpectralAxis {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(ChemdimError::validation(format!(
                "spectral axis needs at least 2 channels, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ChemdimError::validation("spectral axis contains non-finite values"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ChemdimError::validation(
                "spectral axis must be strictly increasing",
            ));
        }
        Ok(SpectralAxis { values })
    }

    /// Unitless axis 0, 1, …, p-1 for data without calibrated channels.
    pub fn unit(p: usize) -> Result<Self> {
        SpectralAxis::new((0..p).map(|i| i as f64).collect())
    }

    /// Evenly spaced axis from `start` to `end` inclusive with `p` channels.
    pub fn linspace(start: f64, end: f64, p: usize) -> Result<Self> {
        if p < 2 {
            return Err(ChemdimError::validation("linspace needs p >= 2"));
        }
        let step = (end - start) / (p - 1) as f64;
        SpectralAxis::new((0..p).map(|i| start + step * i as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A samples-by-channels intensity matrix with its spectral axis.
///
/// Intensities may be weakly negative (a side effect of upstream baseline
/// correction) but must be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    axis: SpectralAxis,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>, axis: SpectralAxis) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(ChemdimError::validation("data matrix needs at least one row"));
        }
        if values.ncols() != axis.len() {
            return Err(ChemdimError::validation(format!(
                "data matrix has {} channels but the axis has {}",
                values.ncols(),
                axis.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ChemdimError::validation("data matrix contains non-finite values"));
        }
        Ok(DataMatrix { values, axis })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn axis(&self) -> &SpectralAxis {
        &self.axis
    }

    pub fn row(&self, r: usize) -> ArrayView1<'_, f64> {
        self.values.row(r)
    }

    /// Scale every row to unit Euclidean length. Zero rows are left as-is.
    pub fn normalized_rows(&self) -> DataMatrix {
        let mut values = self.values.clone();
        for mut row in values.rows_mut() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
        DataMatrix { values, axis: self.axis.clone() }
    }
}

/// A 3-D hyperspectral scene: `nx * ny` pixels, each holding a spectrum of
/// `axis.len()` channels. Values are stored channel-fastest in row-major
/// (x, y) order.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
    axis: SpectralAxis,
}

impl HyperCube {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>, axis: SpectralAxis) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(ChemdimError::validation("cube extents must be positive"));
        }
        let expected = nx * ny * axis.len();
        if values.len() != expected {
            return Err(ChemdimError::validation(format!(
                "cube of {}x{}x{} needs {} values, got {}",
                nx,
                ny,
                axis.len(),
                expected,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ChemdimError::validation("cube contains non-finite values"));
        }
        Ok(HyperCube { nx, ny, values, axis })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn channels(&self) -> usize {
        self.axis.len()
    }

    pub fn axis(&self) -> &SpectralAxis {
        &self.axis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Spectrum of pixel (x, y).
    pub fn spectrum(&self, x: usize, y: usize) -> &[f64] {
        let p = self.axis.len();
        let start = (x * self.ny + y) * p;
        &self.values[start..start + p]
    }
}

/// Per-row pixel origins of an unfolded cube, with the source grid extents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelIndexMap {
    nx: usize,
    ny: usize,
    origins: Vec<(usize, usize)>,
}

impl PixelIndexMap {
    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origins
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

/// Per-pixel nonnegative mixing weights for a set of endmembers.
///
/// Weights are conical (no sum-to-one constraint).
#[derive(Debug, Clone)]
pub struct AbundanceMap {
    weights: Array2<f64>,
    endmember_ids: Vec<String>,
}

impl AbundanceMap {
    pub fn new(weights: Array2<f64>, endmember_ids: Vec<String>) -> Result<Self> {
        if weights.ncols() != endmember_ids.len() {
            return Err(ChemdimError::validation(format!(
                "{} weight columns but {} endmember ids",
                weights.ncols(),
                endmember_ids.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ChemdimError::validation(
                "abundance weights must be finite and nonnegative",
            ));
        }
        Ok(AbundanceMap { weights, endmember_ids })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn endmember_ids(&self) -> &[String] {
        &self.endmember_ids
    }
}

/// Reshape a cube into a pixels-by-channels matrix, recording each row's
/// spatial origin. Row `x * ny + y` holds the spectrum of pixel (x, y).
pub fn unfold(cube: &HyperCube) -> (DataMatrix, PixelIndexMap) {
    let (nx, ny, p) = (cube.nx, cube.ny, cube.axis.len());
    let values =
        Array2::from_shape_vec((nx * ny, p), cube.values.clone()).expect("cube shape checked");
    let origins = (0..nx).flat_map(|x| (0..ny).map(move |y| (x, y))).collect();
    let matrix = DataMatrix { values, axis: cube.axis.clone() };
    (matrix, PixelIndexMap { nx, ny, origins })
}

/// Fold one value per unfolded row back into an `nx` by `ny` image grid.
pub fn refold(map: &PixelIndexMap, values: &[f64], nx: usize, ny: usize) -> Result<Array2<f64>> {
    if values.len() != map.len() {
        return Err(ChemdimError::validation(format!(
            "refold got {} values for {} mapped pixels",
            values.len(),
            map.len()
        )));
    }
    if map.len() != nx * ny {
        return Err(ChemdimError::validation(format!(
            "pixel map covers {} pixels but the grid is {}x{}",
            map.len(),
            nx,
            ny
        )));
    }
    let mut grid = Array2::zeros((nx, ny));
    let mut seen = vec![false; nx * ny];
    for (&(x, y), &v) in map.origins.iter().zip(values) {
        if x >= nx || y >= ny {
            return Err(ChemdimError::validation(format!(
                "pixel origin ({x}, {y}) outside {nx}x{ny} grid"
            )));
        }
        if std::mem::replace(&mut seen[x * ny + y], true) {
            return Err(ChemdimError::validation(format!(
                "pixel origin ({x}, {y}) mapped twice"
            )));
        }
        grid[[x, y]] = v;
    }
    Ok(grid)
}

/// Rebuild a cube from an unfolded matrix and its pixel map (inverse of
/// [`unfold`]).
pub fn fold_matrix(matrix: &DataMatrix, map: &PixelIndexMap, nx: usize, ny: usize) -> Result<HyperCube> {
    if matrix.nrows() != map.len() || map.len() != nx * ny {
        return Err(ChemdimError::validation("matrix, map and grid sizes disagree"));
    }
    let p = matrix.ncols();
    let mut values = vec![f64::NAN; nx * ny * p];
    for (r, &(x, y)) in map.origins.iter().enumerate() {
        if x >= nx || y >= ny {
            return Err(ChemdimError::validation(format!(
                "pixel origin ({x}, {y}) outside {nx}x{ny} grid"
            )));
        }
        let start = (x * ny + y) * p;
        for (c, &v) in matrix.row(r).iter().enumerate() {
            values[start + c] = v;
        }
    }
    HyperCube::new(nx, ny, values, matrix.axis().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn axis(p: usize) -> SpectralAxis {
        SpectralAxis::unit(p).unwrap()
    }

    #[test]
    fn axis_rejects_short_and_non_monotone() {
        assert!(SpectralAxis::new(vec![1.0]).is_err());
        assert!(SpectralAxis::new(vec![1.0, 1.0]).is_err());
        assert!(SpectralAxis::new(vec![2.0, 1.0]).is_err());
        assert!(SpectralAxis::new(vec![1.0, f64::NAN]).is_err());
        assert!(SpectralAxis::new(vec![900.0, 901.5]).is_ok());
    }

    #[test]
    fn matrix_rejects_non_finite_and_shape_mismatch() {
        let a = axis(3);
        assert!(DataMatrix::new(array![[1.0, 2.0, f64::INFINITY]], a.clone()).is_err());
        assert!(DataMatrix::new(array![[1.0, 2.0]], a).is_err());
    }

    #[test]
    fn unfold_single_pixel() {
        let cube = HyperCube::new(1, 1, vec![1.0, 2.0, 3.0], axis(3)).unwrap();
        let (m, map) = unfold(&cube);
        assert_eq!(m.values(), &array![[1.0, 2.0, 3.0]]);
        assert_eq!(map.origins(), &[(0, 0)]);
    }

    #[test]
    fn unfold_refold_round_trip_2x2x2() {
        let vals: Vec<f64> = (0..8).map(|i| i as f64 * 0.5 - 1.0).collect();
        let cube = HyperCube::new(2, 2, vals, axis(2)).unwrap();
        let (m, map) = unfold(&cube);
        assert_eq!(m.nrows(), 4);
        assert_eq!(m.ncols(), 2);
        let back = fold_matrix(&m, &map, 2, 2).unwrap();
        assert_eq!(back, cube);
    }

    #[test]
    fn unfold_row_count_matches_pixel_count() {
        // matches the scale of a real CARS scene: nx*ny rows, channels preserved
        let (nx, ny, p) = (56, 41, 33);
        let vals = vec![0.25; nx * ny * p];
        let cube = HyperCube::new(nx, ny, vals, axis(p)).unwrap();
        let (m, map) = unfold(&cube);
        assert_eq!(m.nrows(), nx * ny);
        assert_eq!(m.ncols(), p);
        assert_eq!(map.len(), nx * ny);
        // row r holds the spectrum of pixel map[r]
        for r in [0usize, 40, 41, nx * ny - 1] {
            let (x, y) = map.origins()[r];
            assert_eq!(m.row(r).to_vec().as_slice(), cube.spectrum(x, y));
        }
    }

    #[test]
    fn refold_constant_vector_gives_constant_image() {
        let cube = HyperCube::new(2, 3, vec![1.0; 12], axis(2)).unwrap();
        let (_, map) = unfold(&cube);
        let grid = refold(&map, &[7.0; 6], 2, 3).unwrap();
        assert!(grid.iter().all(|&v| v == 7.0));
    }

    #[test]
    fn refold_hand_layout_4_pixels() {
        // 2x2 cube, rows in (x, y) row-major order: (0,0), (0,1), (1,0), (1,1).
        // An abundance column [10, 20, 30, 40] must land as
        //   grid[0][0]=10  grid[0][1]=20
        //   grid[1][0]=30  grid[1][1]=40
        let cube = HyperCube::new(2, 2, (0..8).map(f64::from).collect(), axis(2)).unwrap();
        let (_, map) = unfold(&cube);
        let grid = refold(&map, &[10.0, 20.0, 30.0, 40.0], 2, 2).unwrap();
        assert_eq!(grid, array![[10.0, 20.0], [30.0, 40.0]]);
    }

    #[test]
    fn refold_rejects_length_mismatch() {
        let cube = HyperCube::new(2, 2, vec![0.0; 8], axis(2)).unwrap();
        let (_, map) = unfold(&cube);
        assert!(refold(&map, &[1.0, 2.0, 3.0], 2, 2).is_err());
    }

    #[test]
    fn normalized_rows_have_unit_norm() {
        let m = DataMatrix::new(array![[3.0, 4.0], [0.0, 0.0], [1.0, 1.0]], axis(2)).unwrap();
        let n = m.normalized_rows();
        let norm0: f64 = n.row(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm0 - 1.0).abs() < 1e-12);
        assert_eq!(n.row(1).to_vec(), vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn refold_unfold_identity(nx in 1usize..6, ny in 1usize..6, p in 2usize..5, seed in 0u64..1000) {
            // pseudo-random but reproducible cube contents
            let n = nx * ny * p;
            let vals: Vec<f64> = (0..n)
                .map(|i| {
                    let h = crate::seed::derive(seed, i as u64);
                    (h % 10_000) as f64 / 100.0 - 50.0
                })
                .collect();
            let cube = HyperCube::new(nx, ny, vals, SpectralAxis::unit(p).unwrap()).unwrap();
            let (m, map) = unfold(&cube);
            let back = fold_matrix(&m, &map, nx, ny).unwrap();
            prop_assert_eq!(back, cube.clone());
            // per-channel refold agrees with direct cube indexing
            for c in 0..p {
                let col: Vec<f64> = (0..m.nrows()).map(|r| m.values()[[r, c]]).collect();
                let grid = refold(&map, &col, nx, ny).unwrap();
                for x in 0..nx {
                    for y in 0..ny {
                        prop_assert_eq!(grid[[x, y]], cube.spectrum(x, y)[c]);
                    }
                }
            }
        }
    }
}
