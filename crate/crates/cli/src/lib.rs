//! Command-line front end: argument parsing, exit codes and the command
//! implementations, kept in a library so they can be driven in-process.

pub mod commands;
mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use spectralens::diversity::KernelKind;
use spectralens::io::ReportFormat;
use spectralens::Precision;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_WRITE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "SPECTRALENS_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "spectralens",
    version,
    about = "Spectral diagnostics for weight matrices and embedding sets"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Output directory.
    #[arg(long, global = true, default_value = "spectralens-out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value = "json", value_parser = parse_format)]
    pub format: ReportFormat,
    /// Seed for every stochastic step; overrides a seed in a lab config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Treat loaded weight matrices as stored in this precision.
    #[arg(long, global = true, value_parser = parse_precision)]
    pub precision: Option<Precision>,
    /// Also write SVG line charts of the per-layer series (compare only).
    #[arg(long, global = true)]
    pub svg: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-layer scale and shape metrics for every checkpoint in a manifest.
    Metrics {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// ΔM relative to a baseline category, with adjusted ANOVA and pairwise tests.
    Compare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "baseline")]
        baseline: String,
        /// Average over settings and datasets before subtracting the baseline.
        #[arg(long)]
        average_first: bool,
    },
    /// Vendi Score of an embedding set, optionally weighted by alignment.
    Vendi {
        #[arg(long)]
        embeddings: PathBuf,
        /// Index-aligned counterpart of `--embeddings` (the augmented set).
        #[arg(long)]
        paired: Option<PathBuf>,
        /// Synthetic rows for a mixing-ratio sweep against `--embeddings`.
        #[arg(long)]
        synthetic: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9,1.0")]
        ratios: Vec<f64>,
        #[arg(long, default_value = "cosine", value_parser = parse_kernel)]
        kernel: KernelKind,
        /// Subtract column means before forming the kernel.
        #[arg(long)]
        center: bool,
    },
    /// Generate synthetic pre/post checkpoints from the closed-form lab.
    Lab {
        /// Scenario config (JSON). Without it: baseline and ridge α = 0.1.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the dropout and weight-decay grids instead of a config.
        #[arg(long, conflicts_with = "config")]
        reference_grid: bool,
    },
    /// Power-law tail fit, ESD histogram and Marchenko-Pastur comparison.
    Fit {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    s.parse()
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        other => Err(format!("unknown precision {other:?} (expected f32 or f64)")),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spectralens::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use spectralens::lab::LabError;
        use spectralens::Error;
        match self {
            CliError::Usage(_) => EXIT_VALIDATION,
            CliError::Core(Error::Write { .. }) | CliError::Core(Error::Lab(LabError::Write { .. })) => EXIT_WRITE,
            CliError::Core(e) if e.is_validation() => EXIT_VALIDATION,
            CliError::Core(_) => EXIT_NUMERIC,
        }
    }
}

impl From<spectralens::io::MatrixIoError> for CliError {
    fn from(e: spectralens::io::MatrixIoError) -> Self {
        CliError::Core(e.into())
    }
}

fn configure_threads() {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
                log::debug!("thread pool already initialized");
            }
        }
        _ => log::warn!("ignoring {THREADS_ENV}={raw:?}: expected a positive integer"),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr; stdout receives one summary
/// line on success.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout())
}

/// As [`run`], writing the summary line to `out`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match commands::execute(&cli) {
        Ok(summary) => match writeln!(out, "{summary}") {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: cannot write summary: {e}");
                EXIT_WRITE
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
