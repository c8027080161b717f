//! Subcommand implementations. Every command resolves its configuration
//! (seed defaults, env fallback) up front; the resolved form is what lands
//! in the run manifest, so replaying a manifest reruns the exact same
//! computation.

use crate::manifest::{write_manifest, RunManifest};
use clap::{Args, ValueEnum};
use dualkern::activations::{
    self, dual_from_expansion, hermite_expand, write_dual_table, Activation,
};
use dualkern::compkernel::{
    encode_categorical, encode_scalar, gram, kernel_eval, tower_fixed_point_from, InputPoint,
    KernelError,
};
use dualkern::experiments::{
    approximation_experiment, bound_from_dims, run_convergence, BoundMode, ConvergenceConfig,
    Dataset, ExperimentError, Loss,
};
use dualkern::realization::RealizeError;
use dualkern::skeleton::{parse_skeleton, Skeleton};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Shape(String),
    Experiment(String),
    NonConvergence(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m)
            | CliError::Shape(m)
            | CliError::Experiment(m)
            | CliError::NonConvergence(m) => f.write_str(m),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => crate::EXIT_USAGE,
            CliError::Shape(_) => crate::EXIT_SHAPE,
            CliError::Experiment(_) => crate::EXIT_EXPERIMENT,
            CliError::NonConvergence(_) => crate::EXIT_NONCONVERGENCE,
        }
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::ShapeMismatch { .. }
            | KernelError::InconsistentDim { .. }
            | KernelError::NotUnit { .. } => CliError::Shape(e.to_string()),
            KernelError::TowerNonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            KernelError::RhoAtBoundary(_)
            | KernelError::BadTolerance(_)
            | KernelError::ScalarOutOfRange(_)
            | KernelError::CategoryOutOfRange { .. }
            | KernelError::EmptyPoint => CliError::Usage(e.to_string()),
            other => CliError::Experiment(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::BadConfig(_) => CliError::Usage(e.to_string()),
            ExperimentError::Kernel(k) => CliError::from(k),
            ExperimentError::Realize(r) => CliError::from(r),
            other => CliError::Experiment(other.to_string()),
        }
    }
}

impl From<RealizeError> for CliError {
    fn from(e: RealizeError) -> Self {
        match e {
            RealizeError::ShapeMismatch { .. } => CliError::Shape(e.to_string()),
            other => CliError::Experiment(other.to_string()),
        }
    }
}

impl From<activations::ActivationError> for CliError {
    fn from(e: activations::ActivationError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn write_failure(path: &Path, e: std::io::Error) -> CliError {
    CliError::Experiment(format!("writing {}: {e}", path.display()))
}

/// Resolve the master seed: explicit flag, then DUALKERN_SEED, then 0.
fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.or_else(|| {
        std::env::var("DUALKERN_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}

fn load_skeleton(path: &Path) -> Result<Skeleton, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("reading {}: {e}", path.display())))?;
    parse_skeleton(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| write_failure(path, e)),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodeMode {
    /// Rows are n·d raw unit-vector components.
    None,
    /// Rows are n scalars in [−1, 1], embedded into the circle (d = 2).
    Scalar,
    /// Rows are n category indices in 1..d, one-hot encoded.
    Categorical,
}

fn parse_number_row(line: &str) -> Result<Vec<f64>, String> {
    line.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

/// Read numeric CSV rows (`#` comments allowed); `labeled` splits off the
/// last column.
fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("reading {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_number_row(line)
            .map_err(|e| usage(format!("{} line {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(usage(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

fn row_to_point(row: &[f64], s: &Skeleton, encode: EncodeMode) -> Result<InputPoint, CliError> {
    let n = s.coordinate_count();
    let d = s.coordinate_dim();
    let coords: Vec<Vec<f64>> = match encode {
        EncodeMode::None => {
            if row.len() != n * d {
                return Err(CliError::Shape(format!(
                    "row has {} values, skeleton expects n·d = {}",
                    row.len(),
                    n * d
                )));
            }
            row.chunks(d).map(|c| c.to_vec()).collect()
        }
        EncodeMode::Scalar => {
            if d != 2 {
                return Err(usage(format!(
                    "scalar encoding produces dimension 2, skeleton expects d = {d}"
                )));
            }
            if row.len() != n {
                return Err(CliError::Shape(format!(
                    "row has {} values, skeleton expects n = {n}",
                    row.len()
                )));
            }
            row.iter()
                .map(|&x| encode_scalar(x).map(|v| v.to_vec()))
                .collect::<Result<_, _>>()?
        }
        EncodeMode::Categorical => {
            if row.len() != n {
                return Err(CliError::Shape(format!(
                    "row has {} values, skeleton expects n = {n}",
                    row.len()
                )));
            }
            row.iter()
                .map(|&x| {
                    if x.fract() != 0.0 || x < 1.0 {
                        Err(usage(format!("category index must be a positive integer, got {x}")))
                    } else {
                        encode_categorical(x as usize, d).map_err(CliError::from)
                    }
                })
                .collect::<Result<_, _>>()?
        }
    };
    InputPoint::new(coords).map_err(CliError::from)
}

fn read_points(path: &Path, s: &Skeleton, encode: EncodeMode) -> Result<Vec<InputPoint>, CliError> {
    read_rows(path)?
        .iter()
        .map(|row| row_to_point(row, s, encode))
        .collect()
}

fn read_dataset(path: &Path, s: &Skeleton, encode: EncodeMode) -> Result<Dataset, CliError> {
    let rows = read_rows(path)?;
    let mut inputs = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for row in &rows {
        let (label, coords) = row
            .split_last()
            .ok_or_else(|| usage("dataset rows need coordinates and a label"))?;
        inputs.push(row_to_point(coords, s, encode)?);
        labels.push(*label);
    }
    Ok(Dataset { inputs, labels })
}

// ---------------------------------------------------------------------------
// duals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DualsArgs {
    /// Catalog activation kind (identity | relu | step | exp | sin | hermite).
    #[arg(long)]
    pub kind: String,
    /// Scale parameter for exp/sin.
    #[arg(long)]
    pub a: Option<f64>,
    /// Degree parameter for hermite.
    #[arg(long)]
    pub n: Option<u32>,
    /// Truncation degree of the coefficient table.
    #[arg(long, default_value_t = 50)]
    pub degree: usize,
    /// Also evaluate the dual on a ρ-grid with this many points.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Gauss-Hermite nodes backing the expansion contract.
    #[arg(long, default_value_t = 200)]
    pub quad_points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn build_activation(kind: &str, a: Option<f64>, n: Option<u32>) -> Result<Activation, CliError> {
    if a.is_some() && n.is_some() {
        return Err(usage("give either --a or --n, not both"));
    }
    let param = a.or(n.map(f64::from));
    activations::make_activation(kind, param).map_err(CliError::from)
}

pub fn run_duals(args: &DualsArgs) -> Result<(), CliError> {
    let act = build_activation(&args.kind, args.a, args.n)?;
    let quad = args.quad_points.max(2 * args.degree + 32);
    let expansion = hermite_expand(&act, args.degree, quad)?;
    let dual = dual_from_expansion(&expansion);
    let param = args.a.or(args.n.map(f64::from));
    let mut table = Vec::new();
    write_dual_table(&mut table, &args.kind, param, &expansion, &dual)
        .expect("in-memory write cannot fail");
    let mut content = String::from_utf8(table).expect("csv is utf-8");
    if let Some(grid) = args.grid {
        if grid < 2 {
            return Err(usage("--grid needs at least 2 points"));
        }
        let mut grid_csv = String::from("kind,param,rho,dual\n");
        let param_text = param.map(|p| p.to_string()).unwrap_or_default();
        for k in 0..grid {
            let rho = -1.0 + 2.0 * k as f64 / (grid - 1) as f64;
            let value = dual.eval(rho).map_err(CliError::from)?;
            let _ = writeln!(grid_csv, "{},{},{rho},{value}", args.kind, param_text);
        }
        match &args.out {
            Some(path) => {
                let grid_path = path_with_suffix(path, ".grid.csv");
                std::fs::write(&grid_path, grid_csv).map_err(|e| write_failure(&grid_path, e))?;
            }
            None => {
                content.push('\n');
                content.push_str(&grid_csv);
            }
        }
    }
    emit(args.out.as_deref(), &content)?;
    if let Some(out) = &args.out {
        write_manifest(
            out,
            &RunManifest::new("duals", 0, None, serde_json::to_value(args.clone()).unwrap()),
        )?;
    }
    Ok(())
}

fn path_with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(suffix);
    os.into()
}

// ---------------------------------------------------------------------------
// kernel / gram
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct KernelArgs {
    /// Skeleton file (.skel).
    #[arg(long)]
    pub skel: PathBuf,
    /// Input CSV (one point per row).
    #[arg(long)]
    pub inputs: PathBuf,
    #[arg(long, value_enum, default_value_t = EncodeMode::None)]
    pub encode: EncodeMode,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_kernel(args: &KernelArgs) -> Result<(), CliError> {
    let s = load_skeleton(&args.skel)?;
    let points = read_points(&args.inputs, &s, args.encode)?;
    let content = if points.len() == 2 {
        let value = kernel_eval(&s, &points[0], &points[1])?;
        format!("{value}\n")
    } else {
        let g = gram(&s, &points)?;
        let mut csv = Vec::new();
        g.to_csv(&mut csv).expect("in-memory write cannot fail");
        String::from_utf8(csv).expect("csv is utf-8")
    };
    emit(args.out.as_deref(), &content)?;
    if let Some(out) = &args.out {
        write_manifest(
            out,
            &RunManifest::new(
                "kernel",
                0,
                Some(s.hash()),
                serde_json::to_value(args.clone()).unwrap(),
            ),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GramArgs {
    #[arg(long)]
    pub skel: PathBuf,
    #[arg(long)]
    pub inputs: PathBuf,
    #[arg(long, value_enum, default_value_t = EncodeMode::None)]
    pub encode: EncodeMode,
    /// Also write the dense binary form here.
    #[arg(long)]
    pub binary: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_gram(args: &GramArgs) -> Result<(), CliError> {
    let s = load_skeleton(&args.skel)?;
    let points = read_points(&args.inputs, &s, args.encode)?;
    let g = gram(&s, &points)?;
    let mut csv = Vec::new();
    g.to_csv(&mut csv).expect("in-memory write cannot fail");
    if let Some(bin_path) = &args.binary {
        let mut bin = Vec::new();
        g.to_binary(&mut bin).expect("in-memory write cannot fail");
        std::fs::write(bin_path, bin).map_err(|e| write_failure(bin_path, e))?;
    }
    emit(
        args.out.as_deref(),
        &String::from_utf8(csv).expect("csv is utf-8"),
    )?;
    if let Some(out) = &args.out {
        write_manifest(
            out,
            &RunManifest::new(
                "gram",
                0,
                Some(s.hash()),
                serde_json::to_value(args.clone()).unwrap(),
            ),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// converge
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConvergeArgs {
    #[arg(long)]
    pub skel: PathBuf,
    /// Replication factors, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub r: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Number of random input pairs (fixed by the seed).
    #[arg(long, default_value_t = 10)]
    pub pairs: usize,
    /// Error budget for the failure-rate summary.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_converge(args: &ConvergeArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed);
    let s = load_skeleton(&args.skel)?;
    if args.pairs == 0 {
        return Err(usage("--pairs must be ≥ 1"));
    }
    let cfg = ConvergenceConfig {
        pairs: ConvergenceConfig::random_pairs(&s, args.pairs, seed),
        skeleton: s.clone(),
        r_list: args.r.clone(),
        trials: args.trials,
        eps: args.eps,
        seed,
        beta: args.beta,
    };
    let report = run_convergence(&cfg)?;
    let mut csv = Vec::new();
    report.to_csv(&mut csv).expect("in-memory write cannot fail");
    let csv = String::from_utf8(csv).expect("csv is utf-8");
    let summary = report.summary_json();
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|e| write_failure(path, e))?;
            let summary_path = path_with_suffix(path, ".summary.json");
            std::fs::write(&summary_path, &summary)
                .map_err(|e| write_failure(&summary_path, e))?;
            let mut resolved = args.clone();
            resolved.seed = Some(seed);
            write_manifest(
                path,
                &RunManifest::new(
                    "converge",
                    seed,
                    Some(s.hash()),
                    serde_json::to_value(resolved).unwrap(),
                ),
            )?;
        }
        None => {
            print!("{csv}\n{summary}\n");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// tower
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TowerArgs {
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub n: Option<u32>,
    /// Start point, strictly inside (−1, 1).
    #[arg(long)]
    pub rho: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_tower(args: &TowerArgs) -> Result<(), CliError> {
    let act = build_activation(&args.kind, args.a, args.n)?;
    let dual = act.dual();
    // run to the fixed point first so a non-convergent run emits nothing
    let fp = tower_fixed_point_from(&dual, args.rho, args.tol, args.max_iter)?;
    let mut csv = String::from("m,alpha\n");
    let _ = writeln!(csv, "0,{}", args.rho);
    let mut value = args.rho;
    for m in 1..=fp.iterations {
        value = dual
            .eval(value.clamp(-1.0, 1.0))
            .map_err(CliError::from)?;
        let _ = writeln!(csv, "{m},{value}");
    }
    emit(args.out.as_deref(), &csv)?;
    if let Some(out) = &args.out {
        write_manifest(
            out,
            &RunManifest::new(
                "tower",
                0,
                None,
                serde_json::to_value(args.clone()).unwrap(),
            ),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// learn
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LearnArgs {
    #[arg(long)]
    pub skel: PathBuf,
    /// Dataset CSV: coordinates then a label per row.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Replication factors for the empirical spaces (analytic only if absent).
    #[arg(long, value_delimiter = ',')]
    pub r: Vec<usize>,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "squared")]
    pub loss: String,
    /// Training fraction of the dataset split.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long, value_enum, default_value_t = EncodeMode::None)]
    pub encode: EncodeMode,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_learn(args: &LearnArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed);
    let s = load_skeleton(&args.skel)?;
    let dataset = read_dataset(&args.dataset, &s, args.encode)?;
    let loss =
        Loss::parse(&args.loss).ok_or_else(|| usage(format!("unknown loss `{}`", args.loss)))?;
    let table = approximation_experiment(&s, &args.r, &dataset, args.lambda, loss, seed, args.split)?;
    let mut csv = Vec::new();
    table.to_csv(&mut csv).expect("in-memory write cannot fail");
    emit(
        args.out.as_deref(),
        &String::from_utf8(csv).expect("csv is utf-8"),
    )?;
    if let Some(out) = &args.out {
        let mut resolved = args.clone();
        resolved.seed = Some(seed);
        write_manifest(
            out,
            &RunManifest::new(
                "learn",
                seed,
                Some(s.hash()),
                serde_json::to_value(resolved).unwrap(),
            ),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bound
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundModeArg {
    Cbounded,
    Relu,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BoundArgs {
    #[arg(long)]
    pub skel: PathBuf,
    #[arg(long, value_enum)]
    pub mode: BoundModeArg,
    /// Activation bound C (cbounded mode).
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_bound(args: &BoundArgs) -> Result<(), CliError> {
    let s = load_skeleton(&args.skel)?;
    let mode = match args.mode {
        BoundModeArg::Cbounded => {
            let c = args.c.ok_or_else(|| usage("cbounded mode requires --c"))?;
            BoundMode::CBounded { c }
        }
        BoundModeArg::Relu => {
            if args.c.is_some() {
                return Err(usage("--c applies only to cbounded mode"));
            }
            BoundMode::Relu
        }
    };
    let report = bound_from_dims(s.depth(), s.size(), mode, args.eps, args.delta)?;
    let mut content = format!(
        "r={}\ndepth={}\nsize={}\n",
        report.r,
        s.depth(),
        s.size()
    );
    if let Some(ok) = report.relu_small_eps {
        // the relu bound hides a universal constant and needs eps ≲ 1/depth
        let _ = writeln!(content, "eps_within_regime={ok}");
        let _ = writeln!(content, "note=bound is up to a universal constant");
    }
    emit(args.out.as_deref(), &content)?;
    if let Some(out) = &args.out {
        write_manifest(
            out,
            &RunManifest::new(
                "bound",
                0,
                Some(s.hash()),
                serde_json::to_value(args.clone()).unwrap(),
            ),
        )?;
    }
    Ok(())
}
