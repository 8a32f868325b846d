//! Command-line front end: simulate | estimate | irf | diagnose | export.
//!
//! Exit codes: 0 success, 2 validation/schema error, 3 numerical abort,
//! 4 I/O or integrity error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{EstimateOptions, IrfOptions, UnitsChoice};
use fsvar::error::Error;

#[derive(Parser)]
#[command(
    name = "fsvar",
    about = "Factor-structural Bayesian VARs: estimation and impulse-response analysis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunDirArg {
    /// Run directory produced by `estimate`.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known parameters.
    Simulate {
        /// Simulation config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Reject an unstable generating process instead of rescaling it.
        #[arg(long)]
        strict: bool,
    },
    /// Run the Gibbs sampler and write a run directory.
    Estimate {
        /// Estimation config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of independent chains (chain_k/ subdirectories).
        #[arg(long)]
        chains: Option<usize>,
        /// Worker threads for within-iteration parallelism.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Summarize impulse responses from a run directory.
    Irf {
        #[command(flatten)]
        run_dir: RunDirArg,
        /// Shock indices (comma separated); all shocks when omitted.
        #[arg(long, value_delimiter = ',')]
        shocks: Option<Vec<usize>>,
        /// Response horizon.
        #[arg(long, default_value_t = 36)]
        horizon: usize,
        /// Evaluation periods for time-varying responses (comma separated).
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<usize>>,
        /// Reporting units: standardized, original, or both.
        #[arg(long, default_value = "both")]
        units: String,
    },
    /// Convergence diagnostics for a run directory.
    Diagnose {
        #[command(flatten)]
        run_dir: RunDirArg,
    },
    /// Convert the binary draws record to CSV.
    Export {
        #[command(flatten)]
        run_dir: RunDirArg,
        /// Output path (default: `<run>/draws.csv`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Schema(_)
        | Error::Parse { .. }
        | Error::Coverage { .. }
        | Error::Domain(_)
        | Error::Argument(_)
        | Error::Validation(_) => 2,
        Error::Numerical { .. } => 3,
        Error::Integrity(_) | Error::Io { .. } | Error::Json { .. } => 4,
    }
}

fn run(cli: Cli) -> fsvar::Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            strict,
        } => commands::cmd_simulate(&config, seed, strict),
        Command::Estimate {
            config,
            seed,
            chains,
            threads,
        } => {
            let opts = EstimateOptions {
                seed_override: seed,
                chains_override: chains,
                threads,
            };
            commands::cmd_estimate(&config, &opts).map(|_| ())
        }
        Command::Irf {
            run_dir,
            shocks,
            horizon,
            times,
            units,
        } => {
            let units = match units.as_str() {
                "standardized" | "std" => UnitsChoice::Standardized,
                "original" | "orig" => UnitsChoice::Original,
                "both" => UnitsChoice::Both,
                other => {
                    return Err(Error::argument(format!(
                        "unknown units {other:?} (expected standardized, original, or both)"
                    )))
                }
            };
            let opts = IrfOptions {
                shocks,
                horizon,
                times,
                units,
            };
            commands::cmd_irf(&run_dir.run, &opts)
        }
        Command::Diagnose { run_dir } => commands::cmd_diagnose(&run_dir.run),
        Command::Export { run_dir, output } => {
            commands::cmd_export(&run_dir.run, output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
