//! `tot`: generate reports from tables, score them and summarize traces.

mod config;
mod evaluate;
mod output;
mod run;
mod usage;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Overrides;
use run::Strategy;

/// Outcome of a command, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Success,
    Partial,
    Exhausted,
}

const EXIT_CONFIG: u8 = 1;

impl Status {
    fn code(self) -> ExitCode {
        match self {
            Status::Success => ExitCode::SUCCESS,
            Status::Partial => ExitCode::from(2),
            Status::Exhausted => ExitCode::from(3),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tot", version, about = "Tree-structured report generation from tables")]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// JSON run config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a report per sample with the operation tree.
    Generate(RunArgs),
    /// Generate a report per sample with one whole-table prompt.
    Baseline(RunArgs),
    /// Score generated reports against the gold reports.
    Evaluate(RunArgs),
    /// Operation usage rate per tree depth, as CSV.
    UsageStats {
        /// Directory searched recursively for trace.json files.
        dir: PathBuf,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    match cli.command {
        Command::Generate(a) => {
            let cfg = config::resolve(a.config.as_deref(), &a.overrides)?;
            run::generate(&cfg, Strategy::Tree)
        }
        Command::Baseline(a) => {
            let cfg = config::resolve(a.config.as_deref(), &a.overrides)?;
            run::generate(&cfg, Strategy::SinglePrompt)
        }
        Command::Evaluate(a) => {
            let cfg = config::resolve(a.config.as_deref(), &a.overrides)?;
            evaluate::evaluate(&cfg)
        }
        Command::UsageStats { dir, out } => {
            let csv = usage::usage_stats(&dir)?;
            match out {
                Some(path) => output::write_atomic(&path, csv.as_bytes())?,
                None => print!("{csv}"),
            }
            Ok(Status::Success)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
