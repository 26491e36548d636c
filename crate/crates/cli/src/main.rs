//! `gaitmixer`: synthesize skeleton gait data, train the mixer network,
//! evaluate gallery/probe rank-1 accuracy, and render diagnostic figures.
//!
//! Exit codes: 0 success, 2 configuration errors, 3 data errors, 4 numeric
//! failures, 1 anything else.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gaitmixer_core::Error;

#[derive(Parser)]
#[command(name = "gaitmixer", version, about = "Skeleton-based gait recognition pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic gait dataset plus manifest.
    Synth(commands::synth::SynthArgs),
    /// Train a model on a dataset manifest.
    Train(commands::train::TrainArgs),
    /// Gallery/probe rank-1 evaluation of a checkpoint.
    Eval(commands::eval::EvalArgs),
    /// FFT spectra and attribution heatmaps from a checkpoint.
    Analyze(commands::analyze::AnalyzeArgs),
    /// Print a checkpoint's header and parameter layout.
    InspectCheckpoint(commands::inspect::InspectArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } => 2,
        Error::Data(_) => 3,
        Error::Numeric(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Analyze(args) => commands::analyze::run(args),
        Command::InspectCheckpoint(args) => commands::inspect::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
