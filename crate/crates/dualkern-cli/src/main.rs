//! Command-line front end: dual-activation tables, kernel and Gram
//! evaluation, Monte Carlo convergence runs, tower traces, learning
//! comparisons, and theorem-bound calculations, all file-based and
//! reproducible from a manifest.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit codes: 0 ok, 2 usage or parse error, 3 shape mismatch,
/// 4 experiment failure, 5 non-convergence.
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_SHAPE: u8 = 3;
pub const EXIT_EXPERIMENT: u8 = 4;
pub const EXIT_NONCONVERGENCE: u8 = 5;

#[derive(Parser)]
#[command(name = "dualkern", version, about = "Compositional kernels and their random-network realizations")]
struct Cli {
    /// Replay a run manifest, reproducing its artifacts byte-exactly.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,

    /// Override the output path when replaying a manifest.
    #[arg(long, value_name = "FILE", requires = "manifest")]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores). Outputs do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Hermite/dual coefficient tables for a catalog activation.
    Duals(commands::DualsArgs),
    /// Kernel value for a pair of inputs (or a Gram matrix for more).
    Kernel(commands::KernelArgs),
    /// Gram matrix of a skeleton kernel over an input set.
    Gram(commands::GramArgs),
    /// Monte Carlo convergence of empirical kernels to the analytic kernel.
    Converge(commands::ConvergeArgs),
    /// Iterate a dual activation; the collapsing-tower trace.
    Tower(commands::TowerArgs),
    /// Compare analytic-kernel regression with last-layer training.
    Learn(commands::LearnArgs),
    /// Replication bounds from the concentration theorems.
    Bound(commands::BoundArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: failed to configure {threads} threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match (cli.manifest, cli.command) {
        (Some(path), None) => manifest::replay(&path, cli.out.as_deref()),
        (None, Some(command)) => dispatch(command),
        (Some(_), Some(_)) => {
            eprintln!("error: --manifest cannot be combined with a subcommand");
            return ExitCode::from(EXIT_USAGE);
        }
        (None, None) => {
            eprintln!("error: provide a subcommand or --manifest FILE (see --help)");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), commands::CliError> {
    match command {
        Command::Duals(args) => commands::run_duals(&args),
        Command::Kernel(args) => commands::run_kernel(&args),
        Command::Gram(args) => commands::run_gram(&args),
        Command::Converge(args) => commands::run_converge(&args),
        Command::Tower(args) => commands::run_tower(&args),
        Command::Learn(args) => commands::run_learn(&args),
        Command::Bound(args) => commands::run_bound(&args),
    }
}
