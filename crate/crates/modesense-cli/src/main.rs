//! Command-line front end for the mobility-mode detection pipeline.
//!
//! Each subcommand runs one file-based stage against a run directory;
//! `reproduce` chains all of them. Exit codes: 0 success, 2 configuration
//! error, 3 data error, 4 training error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use modesense::pipeline::{
    load_config, reproduce, stage_evaluate, stage_extract, stage_rank, stage_report,
    stage_simulate, stage_train, PipelineConfig, PipelineError,
};
use modesense::seed::RngSeed;

#[derive(Parser)]
#[command(
    name = "modesense",
    version,
    about = "Detect walking, biking, and driving from roadside WiFi detections",
    long_about = "Simulates a two-pod roadside WiFi sensing experiment, extracts per-trip \
                  features, ranks them, and trains and scores classifiers. Stages read and \
                  write one run directory, and every run is deterministic for a given seed."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run directory artifacts are read from and written to
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// JSON config file; built-in defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's master seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the street-loop experiment (detections.csv, truth.csv)
    Simulate(CommonArgs),
    /// Segment trips and extract feature rows (features.csv)
    Extract(CommonArgs),
    /// Rank features by ReliefF weight (ranking.json)
    Rank(CommonArgs),
    /// Split the rows and train classifiers (split/, models/)
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Train only this configured model (dt, bdt, rf, or mlp)
        #[arg(long)]
        model: Option<String>,
    },
    /// Score trained models on the held-out split (reports/, metrics.json)
    Evaluate(CommonArgs),
    /// Render the summary and plot data (summary.txt, plots/)
    Report(CommonArgs),
    /// Run every stage end to end into one directory
    Reproduce(CommonArgs),
}

impl Command {
    fn stage_name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Extract(_) => "extract",
            Command::Rank(_) => "rank",
            Command::Train { .. } => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Report(_) => "report",
            Command::Reproduce(_) => "reproduce",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(c)
            | Command::Extract(c)
            | Command::Rank(c)
            | Command::Evaluate(c)
            | Command::Report(c)
            | Command::Reproduce(c) => c,
            Command::Train { common, .. } => common,
        }
    }
}

fn effective_config(common: &CommonArgs) -> Result<PipelineConfig, PipelineError> {
    let mut config = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config.seed = RngSeed::new(seed);
    }
    Ok(config)
}

fn run(command: &Command) -> Result<Vec<String>, PipelineError> {
    let common = command.common();
    let config = effective_config(common)?;
    let out = common.out.as_path();
    match command {
        Command::Simulate(_) => stage_simulate(&config, out),
        Command::Extract(_) => stage_extract(&config, out),
        Command::Rank(_) => stage_rank(&config, out),
        Command::Train { model, .. } => stage_train(&config, out, model.as_deref()),
        Command::Evaluate(_) => stage_evaluate(&config, out),
        Command::Report(_) => stage_report(&config, out),
        Command::Reproduce(_) => reproduce(&config, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error in stage '{}': {e}", cli.command.stage_name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
