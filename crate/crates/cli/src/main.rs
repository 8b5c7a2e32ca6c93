mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tsdist::analysis::Metric;
use tsdist::Error;

#[derive(Parser, Debug)]
#[command(name = "tsdist", version, about = "Time-series dataset similarity via Gaussian 2-Wasserstein distance")]
struct Cli {
    /// Worker threads. Defaults to the machine's available parallelism.
    #[arg(long, global = true, env = "TSDIST_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct SamplingArgs {
    /// Window length L.
    #[arg(long, default_value_t = 48)]
    pub window_length: usize,
    /// Windows drawn per dataset (N).
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    /// Random seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Consecutive constant windows tolerated before giving up on a dataset.
    #[arg(long, default_value_t = 1000)]
    pub max_resample_attempts: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one Gaussian sketch per dataset.
    Fit {
        /// Dataset files (.jsonl or long-format .csv).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        sampling: SamplingArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise distance matrix with CSV, JSON and heatmap outputs.
    Matrix {
        /// Dataset files, or sketch files ending in .sketch.json.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// wasserstein, euclidean, dtw, link-min, link-avg or link-max.
        #[arg(long, default_value = "wasserstein")]
        metric: Metric,
        #[command(flatten)]
        sampling: SamplingArgs,
        /// Cap on windows per dataset for linkage metrics. Makes them approximate.
        #[arg(long)]
        subsample_linkage: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Kamada-Kawai layout of a distance matrix.
    Layout {
        /// Matrix file (.csv or .json).
        matrix: PathBuf,
        /// Optional `label,css_color` file.
        #[arg(long)]
        color_map: Option<PathBuf>,
        /// Seed for the initial jitter.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlate distances from a source dataset with per-dataset losses.
    Correlate {
        /// Matrix file (.csv or .json).
        matrix: PathBuf,
        /// Label of the source dataset.
        #[arg(long)]
        source: String,
        /// `label,loss` CSV.
        #[arg(long)]
        losses: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Anything that is the caller's fault maps to exit code 2.
fn is_user_error(e: &Error) -> bool {
    match e {
        Error::Pair { source, .. } => is_user_error(source),
        Error::NoConvergence(_)
        | Error::NotSquare { .. }
        | Error::ShapeMismatch(_)
        | Error::LengthMismatch { .. }
        | Error::EmptyInput
        | Error::EmptyMatrix => false,
        _ => true,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let threads = match cli.threads {
        Some(0) => return Err(Error::InvalidConfig("--threads must be positive".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    log::debug!("using {threads} worker threads");

    pool.install(|| match cli.command {
        Command::Fit { inputs, sampling, out } => commands::fit(&inputs, &sampling, &out),
        Command::Matrix {
            inputs,
            metric,
            sampling,
            subsample_linkage,
            out,
        } => commands::matrix(&inputs, metric, &sampling, subsample_linkage, &out),
        Command::Layout {
            matrix,
            color_map,
            seed,
            out,
        } => commands::layout(&matrix, color_map.as_deref(), seed, &out),
        Command::Correlate {
            matrix,
            source,
            losses,
            out,
        } => commands::correlate(&matrix, &source, &losses, &out),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if is_user_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
