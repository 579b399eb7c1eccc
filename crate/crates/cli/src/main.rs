//! `net2rdm`: compute RDMs from activations and compare them with brain data.

mod commands;
mod error;
mod output;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "net2rdm", version, about = "Representational similarity analysis for networks and brains")]
struct Cli {
    /// Worker threads for the whole process (default: all cores).
    #[arg(long, global = true, env = "NET2RDM_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute one RDM per layer from an activation manifest.
    Rdm(RdmArgs),
    /// Classical RSA of model layers against brain RDMs.
    Rsa(RsaArgs),
    /// Weighted RSA: fit non-negative layer weights with cross-validation.
    Wrsa(WrsaArgs),
    /// Volumetric searchlight RSA over a voxel dataset.
    Searchlight(SearchlightArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory; must be empty or absent unless --force is given.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct RdmArgs {
    #[arg(long)]
    pub activations: PathBuf,
    /// correlation, euclidean or cosine.
    #[arg(long, default_value = "correlation")]
    pub metric: String,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// RDM manifest (or directory holding one); repeat for several models.
    #[arg(long = "model-rdms", required = true)]
    pub model_rdms: Vec<PathBuf>,
    /// Brain manifest of kind "rdm".
    #[arg(long)]
    pub brain: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub fdr_q: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Force Monte-Carlo sign flipping with this many samples.
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Also write report.svg.
    #[arg(long)]
    pub plot: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RsaArgs {
    #[command(flatten)]
    pub common: CompareArgs,
}

#[derive(Debug, Args)]
pub struct WrsaArgs {
    #[command(flatten)]
    pub common: CompareArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub nnls_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub nnls_max_iter: usize,
}

#[derive(Debug, Args)]
pub struct SearchlightArgs {
    /// Brain manifest of kind "voxel".
    #[arg(long)]
    pub brain: PathBuf,
    /// RDM manifest (.json, pick a layer with --layer) or a bare .npy RDM
    /// in the brain manifest's condition order.
    #[arg(long = "model-rdm")]
    pub model_rdm: PathBuf,
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 5)]
    pub min_voxels: usize,
    /// Metric for the neural RDM inside each sphere.
    #[arg(long, default_value = "correlation")]
    pub metric: String,
    /// Number of best centres listed in summary.json.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

fn init_workers(workers: Option<usize>) -> CliResult<()> {
    let Some(n) = workers else { return Ok(()) };
    if n == 0 {
        return Err(CliError::args("--workers must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::new("E_INTERNAL", e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    init_workers(cli.workers)?;
    match cli.command {
        Command::Rdm(a) => commands::cmd_rdm(&a),
        Command::Rsa(a) => commands::cmd_rsa(&a),
        Command::Wrsa(a) => commands::cmd_wrsa(&a),
        Command::Searchlight(a) => commands::cmd_searchlight(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("{}", CliError::args(first.trim_start_matches("error: ")));
            return ExitCode::from(1);
        }
    };
    let outcome = std::panic::catch_unwind(|| run(cli));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => {
            eprintln!("E_INTERNAL: internal invariant violated");
            ExitCode::from(2)
        }
    }
}
