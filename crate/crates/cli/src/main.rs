//! `doa-sim`: runs the partial noise subspace experiments from a TOML
//! configuration and writes CSV tables, SVG plots and a replay manifest.

mod commands;
mod config;
mod error;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "doa-sim",
    version,
    about = "Partial noise subspace MUSIC simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Overrides {
    /// Number of Monte Carlo trials per operating point.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated methods: music, partial-oracle, root-music, esprit, heuristic.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Worker threads for the trial loop.
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// RMSE versus SNR.
    SweepSnr {
        /// Experiment configuration; the bundled default when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// RMSE versus number of snapshots.
    SweepSnapshots {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Pseudo-spectrum of one generated trial for a given mask.
    Spectrum {
        #[arg(long)]
        config: Option<PathBuf>,
        /// "full", "oracle", or a 0/1 string with one digit per noise eigenvector.
        #[arg(long)]
        mask: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-runs a previous command from its manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory (sweeps) or CSV path (spectrum).
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints the bundled default configuration.
    DefaultConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SweepSnr {
            config,
            out,
            overrides,
        } => {
            let cfg = commands::load_with_overrides(config.as_deref(), &overrides)?;
            commands::sweep(config::SweepKind::Snr, &cfg, &out)
        }
        Command::SweepSnapshots {
            config,
            out,
            overrides,
        } => {
            let cfg = commands::load_with_overrides(config.as_deref(), &overrides)?;
            commands::sweep(config::SweepKind::Snapshots, &cfg, &out)
        }
        Command::Spectrum {
            config,
            mask,
            out,
            seed,
        } => {
            let overrides = Overrides {
                seed,
                ..Overrides::default()
            };
            let cfg = commands::load_with_overrides(config.as_deref(), &overrides)?;
            commands::spectrum(&cfg, &mask, &out)
        }
        Command::Replay { manifest, out } => commands::replay(&manifest, &out),
        Command::DefaultConfig => {
            print!("{}", config::DEFAULT_CONFIG);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("doa-sim: {e}");
            e.exit_code()
        }
    }
}
