use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simaug_core::BackendKind;

mod commands;
mod output;
mod report;

#[derive(Parser)]
#[command(name = "simaug", version, about = "Similarity-gated text augmentation pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the configured backend kind.
    #[arg(long, global = true)]
    pub backend: Option<BackendKind>,
    /// Override both the backend and the split seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Maximum in-flight backend calls during generation.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Recompute results with independent checks and fail on disagreement.
    #[arg(long, global = true)]
    pub verify: bool,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, embed and score every record.
    Phase1,
    /// Compute thresholds and write the augmented datasets.
    Phase2 {
        /// Temp dataset (default: <out>/phase1/temp.jsonl).
        #[arg(long)]
        temp: Option<PathBuf>,
    },
    /// Evaluate the original dataset and the given augmented datasets.
    Phase3 {
        /// Dataset files to compare against the original.
        datasets: Vec<PathBuf>,
        /// Also evaluate every dataset the configured plan has phase 2 write.
        #[arg(long)]
        from_phase2: bool,
    },
    /// Summarize whatever phase outputs exist.
    Report,
    /// All three phases followed by the report.
    Run,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Report => commands::report_only(&cli.common),
        command => commands::Context::load(&cli.common).and_then(|ctx| match command {
            Command::Phase1 => ctx.phase1().map(|_| ()),
            Command::Phase2 { temp } => ctx.phase2(temp.as_deref()).map(|_| ()),
            Command::Phase3 { datasets, from_phase2 } => ctx.phase3(&datasets, from_phase2).map(|_| ()),
            Command::Run => ctx.run(),
            Command::Report => unreachable!(),
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
