//! File formats: CSV matrices, HSDC binary cubes, PGM images and JSON
//! documents.
//!
//! CSV and HSDC round-trip losslessly: CSV fields use Rust's shortest
//! round-trip float formatting, HSDC stores raw little-endian f64. PGM
//! images are 16-bit ASCII (`P2`) with per-image min/max scaling recorded in
//! a `<image>.json` sidecar so pixel values remain recoverable.
//!
//! All writers go through [`write_atomic`]: content lands in a `.partial`
//! file first and is renamed into place only when complete.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{ChemdimError, Result};
use crate::spectral::{DataMatrix, HyperCube, SpectralAxis};

const HSDC_MAGIC: &[u8; 4] = b"HSDC";

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Write `content` to `path` via a `.partial` sibling and an atomic rename.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    let mut f = fs::File::create(&partial).map_err(|e| ChemdimError::io(display(&partial), e))?;
    f.write_all(content).map_err(|e| ChemdimError::io(display(&partial), e))?;
    f.sync_all().map_err(|e| ChemdimError::io(display(&partial), e))?;
    drop(f);
    fs::rename(&partial, path).map_err(|e| ChemdimError::io(display(path), e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV matrices
// ---------------------------------------------------------------------------

/// Write a matrix as CSV, one sample per row. With `with_axis` the first row
/// holds the channel positions.
pub fn write_matrix_csv(path: &Path, matrix: &DataMatrix, with_axis: bool) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        if with_axis {
            let row: Vec<String> =
                matrix.axis().values().iter().map(|v| v.to_string()).collect();
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
        for row in matrix.values().rows() {
            let rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| ChemdimError::io(display(path), e))?;
    }
    write_atomic(path, &buf)
}

fn csv_err(path: &Path, e: csv::Error) -> ChemdimError {
    ChemdimError::parse(display(path), e.to_string())
}

/// Read a CSV matrix. With `axis_row` the first row is the spectral axis;
/// otherwise a unit axis 0..p-1 is attached.
pub fn read_matrix_csv(path: &Path, axis_row: bool) -> Result<DataMatrix> {
    let content = fs::read_to_string(path).map_err(|e| ChemdimError::io(display(path), e))?;
    parse_matrix_csv(&content, axis_row, &display(path))
}

fn parse_matrix_csv(content: &str, axis_row: bool, origin: &str) -> Result<DataMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(content.as_bytes());
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| ChemdimError::parse(origin, e.to_string()))?;
        let row: Vec<f64> = record
            .iter()
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| {
                    ChemdimError::parse(origin, format!("row {}: bad number {:?}", i + 1, field))
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ChemdimError::parse(origin, "empty file"));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(ChemdimError::parse(origin, "ragged rows"));
    }
    let (axis, data_rows) = if axis_row {
        if rows.len() < 2 {
            return Err(ChemdimError::parse(origin, "axis row present but no data rows"));
        }
        (SpectralAxis::new(rows[0].clone())?, &rows[1..])
    } else {
        (SpectralAxis::unit(p)?, &rows[..])
    };
    let flat: Vec<f64> = data_rows.iter().flatten().copied().collect();
    let values = Array2::from_shape_vec((data_rows.len(), p), flat)
        .map_err(|e| ChemdimError::parse(origin, e.to_string()))?;
    DataMatrix::new(values, axis)
}

// ---------------------------------------------------------------------------
// HSDC binary cubes
// ---------------------------------------------------------------------------

/// Write a cube: magic `HSDC`, little-endian u32 nx, ny, channels, then the
/// f64 payload channel-fastest in (x, y) row-major order.
pub fn write_cube(path: &Path, cube: &HyperCube) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + cube.values().len() * 8);
    buf.extend_from_slice(HSDC_MAGIC);
    buf.extend_from_slice(&(cube.nx() as u32).to_le_bytes());
    buf.extend_from_slice(&(cube.ny() as u32).to_le_bytes());
    buf.extend_from_slice(&(cube.channels() as u32).to_le_bytes());
    for v in cube.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &buf)
}

/// Read an HSDC cube. The axis is not stored in the file; pass one, or
/// `None` for a unit axis.
pub fn read_cube(path: &Path, axis: Option<SpectralAxis>) -> Result<HyperCube> {
    let bytes = fs::read(path).map_err(|e| ChemdimError::io(display(path), e))?;
    let origin = display(path);
    if bytes.len() < 16 {
        return Err(ChemdimError::parse(origin, "file too short for HSDC header"));
    }
    if &bytes[0..4] != HSDC_MAGIC {
        return Err(ChemdimError::parse(origin, "bad magic, expected HSDC"));
    }
    let nx = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let ny = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let nc = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let count = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nc))
        .ok_or_else(|| ChemdimError::parse(&origin, "header dimensions overflow"))?;
    let expected = 16 + count * 8;
    if bytes.len() != expected {
        return Err(ChemdimError::parse(
            origin,
            format!("payload is {} bytes, header implies {}", bytes.len() - 16, count * 8),
        ));
    }
    let mut values = Vec::with_capacity(count);
    for chunk in bytes[16..].chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(ChemdimError::parse(&origin, "non-finite value in payload"));
        }
        values.push(v);
    }
    let axis = match axis {
        Some(a) => {
            if a.len() != nc {
                return Err(ChemdimError::validation(format!(
                    "axis has {} channels but cube has {}",
                    a.len(),
                    nc
                )));
            }
            a
        }
        None => SpectralAxis::unit(nc)?,
    };
    HyperCube::new(nx, ny, values, axis)
}

// ---------------------------------------------------------------------------
// PGM images
// ---------------------------------------------------------------------------

/// Scaling metadata stored next to each PGM so gray levels map back to
/// physical values: `value = min + gray / 65535 * (max - min)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PgmSidecar {
    pub min: f64,
    pub max: f64,
    pub rows: usize,
    pub cols: usize,
    pub maxval: u32,
}

/// Write a grid as 16-bit ASCII PGM (`P2`) plus a `<path>.json` sidecar with
/// the min/max scaling. Grid rows become image rows.
pub fn write_pgm(path: &Path, grid: &Array2<f64>) -> Result<PgmSidecar> {
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(ChemdimError::validation("image contains non-finite values"));
    }
    let min = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let max = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let maxval = 65535u32;
    let mut text = format!("P2\n{} {}\n{}\n", grid.ncols(), grid.nrows(), maxval);
    for row in grid.rows() {
        let line: Vec<String> = row
            .iter()
            .map(|&v| {
                let g = if span > 0.0 {
                    ((v - min) / span * maxval as f64).round() as u32
                } else {
                    0
                };
                g.min(maxval).to_string()
            })
            .collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())?;
    let sidecar =
        PgmSidecar { min, max, rows: grid.nrows(), cols: grid.ncols(), maxval };
    let mut sidecar_path = path.as_os_str().to_owned();
    sidecar_path.push(".json");
    write_json(&PathBuf::from(sidecar_path), &sidecar)?;
    Ok(sidecar)
}

/// Read a P2 PGM back into gray levels.
pub fn read_pgm(path: &Path) -> Result<(Array2<u32>, u32)> {
    let text = fs::read_to_string(path).map_err(|e| ChemdimError::io(display(path), e))?;
    let origin = display(path);
    let mut tokens = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split_whitespace());
    if tokens.next() != Some("P2") {
        return Err(ChemdimError::parse(origin, "expected P2 magic"));
    }
    let mut next_num = |name: &str| -> Result<u32> {
        tokens
            .next()
            .ok_or_else(|| ChemdimError::parse(&origin, format!("missing {name}")))?
            .parse::<u32>()
            .map_err(|_| ChemdimError::parse(&origin, format!("bad {name}")))
    };
    let cols = next_num("width")? as usize;
    let rows = next_num("height")? as usize;
    let maxval = next_num("maxval")?;
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        values.push(next_num("pixel")?);
    }
    let grid = Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| ChemdimError::parse(&origin, e.to_string()))?;
    Ok((grid, maxval))
}

// ---------------------------------------------------------------------------
// JSON documents
// ---------------------------------------------------------------------------

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| ChemdimError::parse(display(path), e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| ChemdimError::io(display(path), e))?;
    serde_json::from_str(&text).map_err(|e| ChemdimError::parse(display(path), e.to_string()))
}
