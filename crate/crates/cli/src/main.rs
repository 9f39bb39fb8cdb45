//! `hhnas`: run, resume, compare and report on architecture searches.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Common;

#[derive(Parser)]
#[command(name = "hhnas", version, about = "Adaptive hierarchical architecture search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `engine.iterations=20`. Repeatable.
    #[arg(short = 'o', long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output root; beats `output_dir` in the config and HHNAS_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress per-iteration progress.
    #[arg(short, long)]
    quiet: bool,
}

impl From<ConfigArgs> for Common {
    fn from(a: ConfigArgs) -> Self {
        Common { config: a.config, overrides: a.overrides, out: a.out, quiet: a.quiet }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a search into a fresh timestamped directory.
    Run {
        #[command(flatten)]
        args: ConfigArgs,
        /// Engine seed, overriding the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Continue an interrupted run from its checkpoint.
    Resume {
        /// Run directory or checkpoint file.
        path: PathBuf,
        #[arg(short, long)]
        quiet: bool,
    },
    /// Compare policies over the seeds in the config's `bench` section.
    Bench {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Write per-architecture CSVs for a finished or partial run.
    Report {
        run_dir: PathBuf,
        #[arg(short, long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { args, seed } => commands::run(args.into(), seed),
        Command::Resume { path, quiet } => commands::resume(&path, quiet),
        Command::Bench { args } => commands::bench(args.into()),
        Command::Report { run_dir, quiet } => commands::report(&run_dir, quiet),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hhnas: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
