//! `helmlab` — batch front end for the layered-helmholtz laboratory.
//!
//! Subcommands: `forward` (synthesize boundary data), `crosscheck`
//! (frequency vs time domain consistency), `invert` (reconstruct sources
//! from boundary data), `sweep` (stability trends over bandwidth and
//! attenuation), `bounds` (closed-form bound evaluations).
//!
//! Exit codes: 0 success, 1 assertion failure (a consistency or trend check
//! ran and failed), 2 invalid input (bad flags, unreadable or malformed
//! config, violated preconditions).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Command failures, split by exit code: invalid input (2) versus a failed
/// runtime assertion (1).
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Assertion(String),
}

impl CliError {
    /// Library errors surface from input validation, so they map to
    /// "invalid input".
    pub fn from_lib(e: layered_helmholtz::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "helmlab",
    version,
    about = "Forward and inverse source experiments for the attenuated \
             two-layer Helmholtz equation on (-1, 1)",
    after_help = "All commands read one JSON config (see configs/ for \
                  documented examples) and write CSV/JSON artifacts stamped \
                  with the config's SHA-256. Identical configs and seeds \
                  produce byte-identical outputs."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the JSON experiment config.
    #[arg(long, global = true, value_name = "path")]
    config: Option<PathBuf>,

    /// Directory for output artifacts (created if absent).
    #[arg(long, global = true, value_name = "dir", default_value = "out")]
    out: PathBuf,

    /// Worker threads for parallel commands (default: all cores).
    #[arg(long, global = true, value_name = "n")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize multi-frequency boundary data (optionally noised) and
    /// write it as CSV plus a JSON sidecar.
    Forward,
    /// Compare frequency-domain boundary data against the Fourier transform
    /// of the time-domain evolution (homogeneous unit medium only).
    Crosscheck,
    /// Reconstruct the source pair from boundary data and report errors
    /// against the configured truth.
    Invert,
    /// Run the (bandwidth, attenuation, seed) reconstruction grid at pinned
    /// data energy and judge the stability trends.
    Sweep,
    /// Evaluate the closed-form bound functions at configured parameters.
    Bounds,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Assertion(msg)) => {
            eprintln!("helmlab: assertion failure: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Invalid(msg)) => {
            eprintln!("helmlab: invalid input: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Invalid("--jobs must be >= 1".into()));
        }
        // First caller wins; a failure here only means a pool already
        // exists, which is fine.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Invalid("missing required flag --config <path>".into()))?;
    let loaded = config::load(&config_path)?;
    let ctx = commands::Ctx::new(loaded, &cli.out)?;
    match cli.command {
        Command::Forward => commands::cmd_forward(&ctx),
        Command::Crosscheck => commands::cmd_crosscheck(&ctx),
        Command::Invert => commands::cmd_invert(&ctx),
        Command::Sweep => commands::cmd_sweep(&ctx),
        Command::Bounds => commands::cmd_bounds(&ctx),
    }
}
