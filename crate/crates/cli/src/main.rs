//! `chemdim` — command-line workflows for chemical dimensionality analysis.
//!
//! Subcommands: `synth` (generate benchmark data), `estimate` (dimensionality
//! report), `extract` (endmember spectra), `reconstruct` (abundance maps and
//! images), `baselines` (reference estimators) and `bench` (confusion-matrix
//! grids). Every stochastic command takes an explicit `--seed`; every output
//! directory receives a `run_manifest.json` with the parameters, seed and
//! input hashes needed to reproduce the outputs bit for bit. Wall-clock
//! timings go to stderr only, so outputs stay byte-identical across thread
//! counts.
//!
//! Exit codes: 0 ok, 2 validation, 3 io/parse, 4 numerical failure.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use chemdim_core::baselines;
use chemdim_core::benchmark::{run_benchmark, BenchmarkParams, Method};
use chemdim_core::error::ChemdimError;
use chemdim_core::estimator::{estimate, DimensionalityReport, EstimateParams};
use chemdim_core::extractor::{extract, reconstruct_spectra};
use chemdim_core::io;
use chemdim_core::simplex::build_candidates;
use chemdim_core::spectral::{unfold, DataMatrix};
use chemdim_core::synth::{self, SyntheticSpec};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "chemdim", version, about = "Chemical dimensionality analysis")]
struct Cli {
    /// Worker threads (default: all cores; env fallback CHEMDIM_THREADS).
    /// Results are identical for every thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic mixture dataset (matrix CSV + ground truth).
    Synth(SynthArgs),
    /// Estimate the chemical dimensionality of a dataset.
    Estimate(EstimateArgs),
    /// Extract endmember spectra from a dataset.
    Extract(ExtractArgs),
    /// Reconstruct abundance maps and per-endmember images for a cube.
    Reconstruct(ReconstructArgs),
    /// Run reference dimensionality estimators on a dataset.
    Baselines(BaselinesArgs),
    /// Run a benchmark grid and tabulate confusion matrices.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Ground-truth endmember count.
    #[arg(long)]
    k: usize,
    /// Total samples.
    #[arg(long)]
    n: usize,
    /// Channels.
    #[arg(long, default_value_t = 1001)]
    p: usize,
    /// Signal-to-noise ratio (1000 means 1000:1).
    #[arg(long)]
    snr: f64,
    #[arg(long)]
    seed: u64,
    /// Keep endmembers at their raw scale instead of unit length.
    #[arg(long)]
    no_normalize: bool,
    /// Output directory (data.csv, ground_truth.json, run_manifest.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InputArgs {
    /// Matrix CSV input (first row is the spectral axis unless
    /// --no-axis-row).
    #[arg(long = "in", conflicts_with = "cube")]
    input: Option<PathBuf>,
    /// HSDC binary cube input.
    #[arg(long)]
    cube: Option<PathBuf>,
    /// The CSV has no leading axis row; channels are numbered 0..p-1.
    #[arg(long)]
    no_axis_row: bool,
}

impl InputArgs {
    fn load(&self) -> Result<(DataMatrix, Option<chemdim_core::spectral::PixelIndexMap>), ChemdimError> {
        match (&self.input, &self.cube) {
            (Some(path), None) => {
                let m = io::read_matrix_csv(path, !self.no_axis_row)?;
                Ok((m, None))
            }
            (None, Some(path)) => {
                let cube = io::read_cube(path, None)?;
                let (m, map) = unfold(&cube);
                Ok((m, Some(map)))
            }
            _ => Err(ChemdimError::validation("exactly one of --in or --cube is required")),
        }
    }

    fn path(&self) -> Option<&Path> {
        self.input.as_deref().or(self.cube.as_deref())
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Largest source count to consider.
    #[arg(long, default_value_t = 20)]
    g: usize,
    #[arg(long)]
    seed: u64,
    /// Scale every row to unit length before estimation.
    #[arg(long)]
    normalize: bool,
    /// Sweep cap per simplex maximization pass.
    #[arg(long, default_value_t = 5)]
    max_sweeps: usize,
    /// Semi-NMF relative objective tolerance.
    #[arg(long, default_value_t = 1e-6)]
    nmf_tol: f64,
    /// Semi-NMF iteration cap.
    #[arg(long, default_value_t = 200)]
    nmf_max_iter: usize,
    /// Report JSON path; curves land next to it as <stem>.curves.csv.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of endmembers to extract (at least 2).
    #[arg(long, conflicts_with = "from_report")]
    k: Option<usize>,
    /// Take k from an estimation report instead.
    #[arg(long)]
    from_report: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    g: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 5)]
    max_sweeps: usize,
    /// Output directory (endmembers.csv, endmembers.json, run_manifest.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    /// HSDC cube to reconstruct.
    #[arg(long)]
    cube: PathBuf,
    /// Endmember CSV (axis row + one spectrum per row), as written by
    /// `chemdim extract`.
    #[arg(long)]
    endmembers: PathBuf,
    /// Output directory (abundance.csv, <id>.pgm + sidecars, images.json).
    #[arg(long)]
    outdir: PathBuf,
}

#[derive(Args)]
struct BaselinesArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Comma-separated methods: hfc,aic,mdl,fif,lambda95,lambda99.
    #[arg(long, value_delimiter = ',', default_values_t = [
        "hfc".to_string(), "aic".to_string(), "mdl".to_string(),
        "fif".to_string(), "lambda95".to_string(), "lambda99".to_string(),
    ])]
    methods: Vec<String>,
    /// False-alarm probability for HFC.
    #[arg(long, default_value_t = 1e-5)]
    pf: f64,
    #[arg(long)]
    normalize: bool,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON array of dataset specs
    /// ({"k", "n", "snr", "seed", optional "p", "axis_start", "axis_end",
    /// "normalize_endmembers"}).
    #[arg(long)]
    grid_file: PathBuf,
    #[arg(long)]
    repeats: usize,
    /// Comma-separated methods (default: cd plus all baselines).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, default_value_t = 20)]
    g: usize,
    #[arg(long, default_value_t = 1e-5)]
    pf: f64,
    /// Output directory for confusion CSVs and the comparison table.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("CHEMDIM_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("chemdim: thread pool already initialized");
        }
    }
    let started = Instant::now();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Reconstruct(args) => cmd_reconstruct(args),
        Command::Baselines(args) => cmd_baselines(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => {
            eprintln!("chemdim: done in {:.2?}", started.elapsed());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("chemdim: error: {e}");
            let code = match e {
                ChemdimError::Validation(_) => 2,
                ChemdimError::Io { .. } | ChemdimError::Parse { .. } => 3,
                ChemdimError::Numerical(_) | ChemdimError::SemiNmfBreakdown { .. } => 4,
            };
            ExitCode::from(code)
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), ChemdimError> {
    std::fs::create_dir_all(dir).map_err(|e| ChemdimError::io(dir.display().to_string(), e))
}

fn cmd_synth(args: SynthArgs) -> Result<(), ChemdimError> {
    let spec = SyntheticSpec {
        k: args.k,
        n: args.n,
        p: args.p,
        snr: args.snr,
        seed: args.seed,
        normalize_endmembers: !args.no_normalize,
        ..SyntheticSpec::new(args.k, args.n, args.snr, args.seed)
    };
    spec.validate()?;
    ensure_dir(&args.out)?;
    let (data, truth) = synth::generate(&spec)?;
    let data_path = args.out.join("data.csv");
    io::write_matrix_csv(&data_path, &data, true)?;

    let truth_doc = serde_json::json!({
        "spec": spec,
        "pure_rows": truth.pure_rows,
        "endmembers": truth.endmembers.rows().into_iter()
            .map(|r| r.to_vec()).collect::<Vec<_>>(),
        "weights": truth.weights.rows().into_iter()
            .map(|r| r.to_vec()).collect::<Vec<_>>(),
    });
    let truth_path = args.out.join("ground_truth.json");
    io::write_json(&truth_path, &truth_doc)?;

    RunManifest::new("synth", serde_json::to_value(&spec).unwrap(), Some(args.seed))
        .outputs(&args.out, &[&data_path, &truth_path])
        .write(&args.out.join("run_manifest.json"))
}

fn estimate_params(g: usize, max_sweeps: usize, tol: f64, max_iter: usize, normalize: bool) -> EstimateParams {
    EstimateParams { g, max_sweeps, nmf_tol: tol, nmf_max_iter: max_iter, normalize }
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), ChemdimError> {
    let (data, _) = args.input.load()?;
    let params = estimate_params(args.g, args.max_sweeps, args.nmf_tol, args.nmf_max_iter, args.normalize);
    let report = estimate(&data, &params, args.seed)?;
    eprintln!(
        "chemdim: k_cd = {} (z = {}, fallback = {})",
        report.k_cd, report.z, report.fallback
    );

    io::write_json(&args.report, &report)?;
    let curves_path = sibling(&args.report, "curves.csv");
    write_curves_csv(&curves_path, &report)?;

    let out_dir = args.report.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut params_doc = serde_json::to_value(&params).unwrap();
    params_doc["input_kind"] = if args.input.cube.is_some() { "cube".into() } else { "csv".into() };
    RunManifest::new("estimate", params_doc, Some(args.seed))
        .input(args.input.path().unwrap())?
        .outputs(&out_dir, &[&args.report, &curves_path])
        .write(&out_dir.join("run_manifest.json"))
}

/// `<dir>/<stem>.<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write_curves_csv(path: &Path, report: &DimensionalityReport) -> Result<(), ChemdimError> {
    let mut text = String::from("u,sse,epsilon,rho,entropy\n");
    for u in 1..=report.g {
        let rho = if (2..=report.g - 1).contains(&u) {
            let v = report.curves.rho_at(u);
            if v.is_finite() { v.to_string() } else { "inf".to_string() }
        } else {
            String::new()
        };
        text.push_str(&format!(
            "{u},{},{},{rho},{}\n",
            report.curves.sse[u - 1],
            report.curves.epsilon[u - 1],
            report.curves.entropy[u - 1]
        ));
    }
    io::write_atomic(path, text.as_bytes())
}

fn cmd_extract(args: ExtractArgs) -> Result<(), ChemdimError> {
    let (data, _) = args.input.load()?;
    let k = match (args.k, &args.from_report) {
        (Some(k), None) => k,
        (None, Some(path)) => {
            let report: DimensionalityReport = io::read_json(path)?;
            report.k_cd
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
        (None, None) => {
            return Err(ChemdimError::validation("one of --k or --from-report is required"))
        }
    };
    if k < 2 {
        return Err(ChemdimError::validation("endmember count must be at least 2"));
    }
    let work = if args.normalize { data.normalized_rows() } else { data };
    let v = build_candidates(&work, args.g, args.seed, args.max_sweeps)?;
    let set = extract(&v, k)?;
    eprintln!(
        "chemdim: extracted {} endmembers, P_L2 = {:.6e}, P_S = {:.4}",
        set.k(),
        set.p_l2(),
        set.p_s()
    );

    ensure_dir(&args.out)?;
    let spectra = DataMatrix::new(set.spectra().clone(), work.axis().clone())?;
    let csv_path = args.out.join("endmembers.csv");
    io::write_matrix_csv(&csv_path, &spectra, true)?;
    let meta_path = args.out.join("endmembers.json");
    io::write_json(
        &meta_path,
        &serde_json::json!({
            "ids": set.ids(),
            "candidate_indices": set.candidate_indices(),
            "source_rows": set.source_rows(),
            "p_l2": set.p_l2(),
            "p_s": set.p_s(),
            "swaps": set.swap_history().len() - 1,
            "k": set.k(),
            "g": args.g,
        }),
    )?;

    let params = serde_json::json!({
        "k": k, "g": args.g, "max_sweeps": args.max_sweeps,
        "normalize": args.normalize,
        "from_report": args.from_report.as_ref().map(|p| p.display().to_string()),
    });
    RunManifest::new("extract", params, Some(args.seed))
        .input(args.input.path().unwrap())?
        .outputs(&args.out, &[&csv_path, &meta_path])
        .write(&args.out.join("run_manifest.json"))
}

fn cmd_reconstruct(args: ReconstructArgs) -> Result<(), ChemdimError> {
    let endmembers = io::read_matrix_csv(&args.endmembers, true)?;
    let cube = io::read_cube(&args.cube, Some(endmembers.axis().clone()))?;
    let (data, map) = unfold(&cube);
    let ids: Vec<String> =
        (0..endmembers.nrows()).map(|i| format!("endmember_{i:02}")).collect();
    let (abundance, images) =
        reconstruct_spectra(&data, endmembers.values(), &ids, Some(&map))?;
    let images = images.expect("map given");

    ensure_dir(&args.outdir)?;
    let mut outputs: Vec<PathBuf> = Vec::new();

    let abundance_path = args.outdir.join("abundance.csv");
    let mut text = ids.join(",");
    text.push('\n');
    for row in abundance.weights().rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    io::write_atomic(&abundance_path, text.as_bytes())?;
    outputs.push(abundance_path);

    let mut image_entries = Vec::new();
    for (id, grid) in ids.iter().zip(&images) {
        let pgm_path = args.outdir.join(format!("{id}.pgm"));
        let sidecar = io::write_pgm(&pgm_path, grid)?;
        image_entries.push(serde_json::json!({
            "id": id,
            "image": format!("{id}.pgm"),
            "sidecar": format!("{id}.pgm.json"),
            "min": sidecar.min,
            "max": sidecar.max,
        }));
        outputs.push(pgm_path);
    }
    let images_path = args.outdir.join("images.json");
    io::write_json(&images_path, &serde_json::json!({ "images": image_entries }))?;
    outputs.push(images_path);

    let params = serde_json::json!({ "endmembers": ids.len() });
    let out_refs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    RunManifest::new("reconstruct", params, None)
        .input(&args.cube)?
        .input(&args.endmembers)?
        .outputs(&args.outdir, &out_refs)
        .write(&args.outdir.join("run_manifest.json"))
}

fn cmd_baselines(args: BaselinesArgs) -> Result<(), ChemdimError> {
    let (data, _) = args.input.load()?;
    let work = if args.normalize { data.normalized_rows() } else { data };
    let mut rows = String::from("method,estimate,degenerate,parameter\n");
    for name in &args.methods {
        let method: Method = name.parse()?;
        let result = match method {
            Method::Hfc => baselines::hfc(&work, args.pf)?,
            Method::Aic => baselines::aic(&work)?,
            Method::Mdl => baselines::mdl(&work)?,
            Method::Fif => baselines::fif(&work)?,
            Method::Lambda95 => baselines::variance_threshold(&work, 0.95)?,
            Method::Lambda99 => baselines::variance_threshold(&work, 0.99)?,
            Method::Cd => {
                return Err(ChemdimError::validation(
                    "cd is not a baseline; use `chemdim estimate`",
                ))
            }
        };
        let shown = if result.degenerate {
            "--".to_string()
        } else {
            result.estimate.map_or("--".into(), |v| v.to_string())
        };
        rows.push_str(&format!(
            "{},{},{},{}\n",
            result.method,
            shown,
            result.degenerate,
            result.parameter.map_or(String::new(), |v| v.to_string()),
        ));
    }
    match &args.out {
        Some(path) => io::write_atomic(path, rows.as_bytes())?,
        None => print!("{rows}"),
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), ChemdimError> {
    let grid: Vec<SyntheticSpec> = io::read_json(&args.grid_file)?;
    if args.repeats < 1 {
        return Err(ChemdimError::validation("--repeats must be at least 1"));
    }
    let methods: Vec<Method> = match &args.methods {
        Some(names) => names.iter().map(|n| n.parse()).collect::<Result<_, _>>()?,
        None => Method::ALL.to_vec(),
    };
    let params = BenchmarkParams {
        estimate: EstimateParams { g: args.g, ..Default::default() },
        pf: args.pf,
    };
    let outcome = run_benchmark(&grid, args.repeats, &methods, &params)?;
    ensure_dir(&args.out)?;
    let files = outcome.write_csvs(&args.out)?;
    let cells_path = args.out.join("cells.json");
    io::write_json(&cells_path, &outcome)?;

    let params_doc = serde_json::json!({
        "grid": grid,
        "repeats": args.repeats,
        "methods": methods,
        "g": args.g,
        "pf": args.pf,
    });
    let mut outputs: Vec<&Path> = files.iter().map(|p| p.as_path()).collect();
    outputs.push(cells_path.as_path());
    RunManifest::new("bench", params_doc, None)
        .input(&args.grid_file)?
        .outputs(&args.out, &outputs)
        .write(&args.out.join("run_manifest.json"))
}

