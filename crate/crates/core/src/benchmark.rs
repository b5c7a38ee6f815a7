//! Repeated-run benchmarks over synthetic dataset grids.
//!
//! For every spec in a grid the dataset is generated once; the stochastic
//! estimator is then re-run `repeats` times on the fixed data with derived
//! seeds, while the deterministic baseline estimators run once per dataset
//! (re-running them could only repeat the same value). Results land in
//! per-method confusion tables plus a comparison table with one row per
//! (spec, method).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::error::{ChemdimError, Result};
use crate::estimator::{estimate_from_candidates, EstimateParams};
use crate::io::write_atomic;
use crate::numerics::svd_reduce;
use crate::seed;
use crate::simplex::build_candidates_from_scores;
use crate::synth::{generate, SyntheticSpec};

/// Estimators the benchmark can tabulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cd,
    Hfc,
    Aic,
    Mdl,
    Fif,
    Lambda95,
    Lambda99,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Cd,
        Method::Hfc,
        Method::Aic,
        Method::Mdl,
        Method::Fif,
        Method::Lambda95,
        Method::Lambda99,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Cd => "cd",
            Method::Hfc => "hfc",
            Method::Aic => "aic",
            Method::Mdl => "mdl",
            Method::Fif => "fif",
            Method::Lambda95 => "lambda95",
            Method::Lambda99 => "lambda99",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ChemdimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cd" => Ok(Method::Cd),
            "hfc" => Ok(Method::Hfc),
            "aic" => Ok(Method::Aic),
            "mdl" => Ok(Method::Mdl),
            "fif" => Ok(Method::Fif),
            "lambda95" | "l95" => Ok(Method::Lambda95),
            "lambda99" | "l99" => Ok(Method::Lambda99),
            other => Err(ChemdimError::validation(format!("unknown method {other:?}"))),
        }
    }
}

/// Knobs shared by all benchmark cells.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BenchmarkParams {
    pub estimate: EstimateParams,
    /// False-alarm probability for HFC.
    pub pf: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        BenchmarkParams { estimate: EstimateParams::default(), pf: 1e-5 }
    }
}

/// One estimator outcome for one (spec, repeat) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cell {
    pub k: usize,
    pub n: usize,
    pub snr: f64,
    pub method: Method,
    pub repeat: usize,
    pub estimate: Option<usize>,
    pub degenerate: bool,
    pub error: Option<String>,
}

/// All cells of one benchmark run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub repeats: usize,
    pub methods: Vec<Method>,
    pub cells: Vec<Cell>,
}

/// Run the benchmark over `grid`. Deterministic for fixed specs and
/// parameters; the dataset for each spec is fixed and only the estimator
/// seed varies across repeats.
pub fn run_benchmark(
    grid: &[SyntheticSpec],
    repeats: usize,
    methods: &[Method],
    params: &BenchmarkParams,
) -> Result<BenchmarkOutcome> {
    if repeats < 1 {
        return Err(ChemdimError::validation("benchmark needs at least one repeat"));
    }
    if methods.is_empty() {
        return Err(ChemdimError::validation("benchmark needs at least one method"));
    }
    let mut cells = Vec::new();
    // one spec at a time keeps the resident set to a single dataset
    for spec in grid {
        spec.validate()?;
        let (data, _) = generate(spec)?;
        let mut spec_cells: Vec<Cell> = Vec::new();

        if methods.contains(&Method::Cd) {
            let g = params.estimate.g;
            let work =
                if params.estimate.normalize { data.normalized_rows() } else { data.clone() };
            let scores = svd_reduce(&work, g - 1)?;
            let mut cd_cells: Vec<Cell> = (0..repeats)
                .into_par_iter()
                .map(|repeat| {
                    let run_seed = seed::derive(spec.seed, 0x1000 + repeat as u64);
                    let outcome = build_candidates_from_scores(
                        &work,
                        &scores,
                        g,
                        run_seed,
                        params.estimate.max_sweeps,
                    )
                    .and_then(|v| estimate_from_candidates(&v, &params.estimate, run_seed));
                    match outcome {
                        Ok(report) => Cell {
                            k: spec.k,
                            n: spec.n,
                            snr: spec.snr,
                            method: Method::Cd,
                            repeat,
                            estimate: Some(report.k_cd),
                            degenerate: false,
                            error: None,
                        },
                        Err(e) => Cell {
                            k: spec.k,
                            n: spec.n,
                            snr: spec.snr,
                            method: Method::Cd,
                            repeat,
                            estimate: None,
                            degenerate: false,
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect();
            spec_cells.append(&mut cd_cells);
        }

        for &method in methods.iter().filter(|&&m| m != Method::Cd) {
            let result = match method {
                Method::Hfc => baselines::hfc(&data, params.pf),
                Method::Aic => baselines::aic(&data),
                Method::Mdl => baselines::mdl(&data),
                Method::Fif => baselines::fif(&data),
                Method::Lambda95 => baselines::variance_threshold(&data, 0.95),
                Method::Lambda99 => baselines::variance_threshold(&data, 0.99),
                Method::Cd => unreachable!(),
            };
            // deterministic estimators: one run per dataset, tabulated once
            // per repeat so confusion counts stay comparable with CD
            for repeat in 0..repeats {
                let cell = match &result {
                    Ok(r) => Cell {
                        k: spec.k,
                        n: spec.n,
                        snr: spec.snr,
                        method,
                        repeat,
                        estimate: r.estimate,
                        degenerate: r.degenerate,
                        error: None,
                    },
                    Err(e) => Cell {
                        k: spec.k,
                        n: spec.n,
                        snr: spec.snr,
                        method,
                        repeat,
                        estimate: None,
                        degenerate: false,
                        error: Some(e.to_string()),
                    },
                };
                spec_cells.push(cell);
            }
        }
        cells.append(&mut spec_cells);
    }
    Ok(BenchmarkOutcome { repeats, methods: methods.to_vec(), cells })
}

impl BenchmarkOutcome {
    /// Estimated-vs-true counts for one method: (truth, estimate) -> count.
    /// Failed cells count under `None`.
    pub fn confusion(&self, method: Method) -> BTreeMap<(usize, Option<usize>), usize> {
        let mut counts = BTreeMap::new();
        for cell in self.cells.iter().filter(|c| c.method == method) {
            *counts.entry((cell.k, cell.estimate)).or_insert(0) += 1;
        }
        counts
    }

    /// Modal estimate for one (truth, method) pair with its share of
    /// repeats; ties resolve toward the smaller estimate.
    pub fn mode(&self, k: usize, method: Method) -> Option<(usize, f64)> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        let mut total = 0usize;
        for cell in self.cells.iter().filter(|c| c.method == method && c.k == k) {
            total += 1;
            if let Some(est) = cell.estimate {
                *counts.entry(est).or_insert(0) += 1;
            }
        }
        let (est, hits) = counts.into_iter().max_by_key(|&(est, n)| (n, std::cmp::Reverse(est)))?;
        Some((est, hits as f64 / total.max(1) as f64))
    }

    /// Write `confusion_<method>.csv` per method plus `comparison_table.csv`.
    /// Returns the created paths.
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)
            .map_err(|e| ChemdimError::io(dir.display().to_string(), e))?;
        let mut written = Vec::new();

        for &method in &self.methods {
            let counts = self.confusion(method);
            let mut truths: Vec<usize> = counts.keys().map(|(k, _)| *k).collect();
            truths.sort_unstable();
            truths.dedup();
            let mut estimates: Vec<Option<usize>> = counts.keys().map(|(_, e)| *e).collect();
            estimates.sort_unstable();
            estimates.dedup();

            let mut text = String::from("truth");
            for e in &estimates {
                match e {
                    Some(v) => text.push_str(&format!(",{v}")),
                    None => text.push_str(",failed"),
                }
            }
            text.push('\n');
            for &truth in &truths {
                text.push_str(&truth.to_string());
                for e in &estimates {
                    let c = counts.get(&(truth, *e)).copied().unwrap_or(0);
                    text.push_str(&format!(",{c}"));
                }
                text.push('\n');
            }
            let path = dir.join(format!("confusion_{method}.csv"));
            write_atomic(&path, text.as_bytes())?;
            written.push(path);
        }

        // comparison table: one row per (spec, method) with the modal value;
        // degenerate baseline cells print as "--" like the source tables
        let mut text = String::from("k,n,snr,method,estimate,share\n");
        let mut specs: Vec<(usize, usize, u64)> = self
            .cells
            .iter()
            .map(|c| (c.k, c.n, c.snr.to_bits()))
            .collect();
        specs.sort_unstable();
        specs.dedup();
        for (k, n, snr_bits) in specs {
            let snr = f64::from_bits(snr_bits);
            for &method in &self.methods {
                let degenerate = self
                    .cells
                    .iter()
                    .any(|c| c.method == method && c.k == k && c.n == n && c.degenerate);
                let entry = self
                    .cells
                    .iter()
                    .find(|c| c.method == method && c.k == k && c.n == n);
                let (shown, share) = if degenerate {
                    ("--".to_string(), 1.0)
                } else if let Some((est, share)) = self.mode_for(k, n, snr, method) {
                    (est.to_string(), share)
                } else if entry.and_then(|c| c.error.as_ref()).is_some() {
                    ("failed".to_string(), 0.0)
                } else {
                    ("--".to_string(), 0.0)
                };
                text.push_str(&format!("{k},{n},{snr},{method},{shown},{share:.2}\n"));
            }
        }
        let path = dir.join("comparison_table.csv");
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
        Ok(written)
    }

    fn mode_for(&self, k: usize, n: usize, snr: f64, method: Method) -> Option<(usize, f64)> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        let mut total = 0usize;
        for cell in self
            .cells
            .iter()
            .filter(|c| c.method == method && c.k == k && c.n == n && c.snr == snr)
        {
            total += 1;
            if let Some(est) = cell.estimate {
                *counts.entry(est).or_insert(0) += 1;
            }
        }
        let (est, hits) = counts.into_iter().max_by_key(|&(est, n)| (n, std::cmp::Reverse(est)))?;
        Some((est, hits as f64 / total.max(1) as f64))
    }
}
