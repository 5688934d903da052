//! `semtrack`: generate synthetic data, train, track and evaluate.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "semtrack", version, about = "Category-aware visual tracker with inter-supervised online adaptation")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

/// Flags accepted by every command. Precedence: built-in defaults, then the
/// config file, then these flags.
#[derive(Debug, Clone, Args)]
pub struct Shared {
    /// TOML run configuration with optional [gen], [train] and [track] sections.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; every stage derives its own seed from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Disable online adaptation.
    #[arg(long, global = true)]
    pub no_adapt: bool,
    /// Disable NetC gating: every candidate counts as the active category
    /// and the branch is chosen manually (first branch unless overridden).
    #[arg(long, global = true)]
    pub no_netc: bool,
    /// Track with this category's branch instead of the voted one.
    #[arg(long, global = true, value_name = "CATEGORY")]
    pub branch_override: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset: <out>/train/* and <out>/test/*.
    Gen,
    /// Offline training; writes <out>/model.bin and <out>/train_report.json.
    Train {
        /// Training sequences (a dataset root with a train/ folder also works).
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Track every sequence; writes <out>/<name>.txt and <out>/<name>.json.
    Track {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Test sequences (a dataset root with a test/ folder also works).
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Success plots and AUC; writes <out>/report.json and <out>/curve.csv.
    Eval {
        /// Folder of <name>.txt result files.
        #[arg(long, value_name = "DIR")]
        results: PathBuf,
        /// Sequences with ground truth (a dataset root with a test/ folder also works).
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen => commands::gen(&cli.shared),
        Command::Train { data } => commands::train(&cli.shared, data),
        Command::Track { model, data } => commands::track(&cli.shared, model, data),
        Command::Eval { results, data } => commands::eval(&cli.shared, results, data),
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            log::error!("{n} error(s) recorded");
            ExitCode::from(1)
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(1)
        }
    }
}
