//! `rfid` command-line pipeline.
//!
//! Every subcommand validates its arguments before doing any work, writes
//! its outputs plus a JSON manifest, and exits with 0 on success, 1 on a
//! usage error and 2 on a computation error.

mod commands;
mod cuts;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use cuts::{cut_rows, CutKind, CutRow};
pub use manifest::{manifest_path, Manifest};

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "RFID_THREADS";

#[derive(Debug, Parser)]
#[command(name = "rfid", version, about = "Identify and synthesize 2D homogeneous Gaussian random fields")]
pub struct Cli {
    /// Worker threads (default: RFID_THREADS, then all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate realizations of a PSD model.
    Simulate(SimulateArgs),
    /// Generate Voronoi aggregates and surrogate stress fields.
    Microstructure(MicrostructureArgs),
    /// Project scattered `x,y,value` data onto a grid.
    Project(ProjectArgs),
    /// Averaged modified periodogram of a set of grids.
    Periodogram(PeriodogramArgs),
    /// Fit PSD model families to a periodogram.
    Fit(FitArgs),
    /// CV curves of ensemble moments.
    Homogeneity(HomogeneityArgs),
    /// Empirical vs fitted periodogram along axis and diagonal cuts.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub nx: usize,
    #[arg(long)]
    pub ny: usize,
    #[arg(long, default_value_t = 1.0)]
    pub dx: f64,
    #[arg(long, default_value_t = 1.0)]
    pub dy: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub origin_x: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub origin_y: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model parameter file (JSON).
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mean: f64,
    /// `circulant` or `spectral`.
    #[arg(long, default_value = "circulant")]
    pub method: String,
    /// Torus size per axis as a multiple of the grid.
    #[arg(long, default_value_t = 2)]
    pub embedding_factor: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MicrostructureArgs {
    #[arg(long)]
    pub grains: usize,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Surrogate parameter file (JSON); built-in defaults when absent.
    #[arg(long)]
    pub surrogate: Option<PathBuf>,
    /// Number of surrogate realizations.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Keep the first tessellation and orientations for all realizations.
    #[arg(long)]
    pub fixed_geometry: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Scattered CSV with header `x,y,value`.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// `nearest` or `idw`.
    #[arg(long, default_value = "idw")]
    pub method: String,
    #[arg(long, default_value_t = 2.0)]
    pub power: f64,
    #[arg(long, default_value_t = 4)]
    pub neighbors: usize,
    /// Output grid file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PeriodogramArgs {
    /// Grid files or directories of `*.rfg` files (read in name order).
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value = "blackman")]
    pub window: String,
    /// Subtract each field's spatial mean first.
    #[arg(long)]
    pub demean: bool,
    /// Fraction trimmed from every edge before windowing.
    #[arg(long, default_value_t = 0.0)]
    pub trim: f64,
    /// Output periodogram file (a `.meta` sidecar is written next to it).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub periodogram: PathBuf,
    /// One family or a comma list to select from.
    #[arg(long, default_value = "mixed")]
    pub family: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 8)]
    pub multistarts: usize,
    /// Units label stored with the fitted parameters.
    #[arg(long)]
    pub units: Option<String>,
    /// Output fit report (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HomogeneityArgs {
    /// Grid files or directories of `*.rfg` files (read in name order).
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Shuffle the member order with this seed instead of using name order.
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub periodogram: PathBuf,
    /// Comma list of `x`, `y`, `diag`.
    #[arg(long, default_value = "x,y,diag")]
    pub cuts: String,
    /// Bin offsets of the cut lines from the zero-frequency line.
    #[arg(long, default_value = "0,1")]
    pub offsets: String,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Compute(_) => 2,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Compute(e)
    }
}

impl From<rfid_core::Error> for CliError {
    fn from(e: rfid_core::Error) -> Self {
        CliError::Compute(e.into())
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn thread_count(flag: Option<u16>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n as usize));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let recorded: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let result = thread_count(cli.threads).and_then(|threads| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| CliError::Compute(anyhow::anyhow!("thread pool: {e}")))?;
        pool.install(|| commands::dispatch(&cli.command, &recorded))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => {
                    eprintln!("error: {msg}");
                    eprintln!("\nFor more information, try '--help'.");
                }
                CliError::Compute(err) => eprintln!("error: {err:#}"),
            }
            e.exit_code()
        }
    }
}
