//! `ganpipe`: progressive GAN training with switchable convolution modes,
//! a 4x super-resolution stage, and the measurement tools around them.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime abort.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ganpipe_core::Error;

#[derive(Parser)]
#[command(name = "ganpipe", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the multiplication-count cost model for one geometry
    Costmodel(commands::CostmodelArgs),
    /// Train the progressive GAN stage on a PNG dataset
    TrainProgan(commands::TrainProganArgs),
    /// Train the 4x super-resolution stage on a PNG dataset
    TrainSrgan(commands::TrainSrganArgs),
    /// Upsample a directory of PNGs 4x with a trained checkpoint
    Upsample(commands::UpsampleArgs),
    /// Time the six downsampling kernels over a directory of PNGs
    ResampleBench(commands::ResampleBenchArgs),
    /// Evaluate fake images against real ones (SWD, MS-SSIM, IS)
    Evaluate(commands::EvaluateArgs),
    /// Run the full pipeline: progressive stage, SR stage, evaluation
    Pipeline(commands::PipelineArgs),
    /// Generate a seeded synthetic PNG dataset
    SynthData(commands::SynthDataArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Costmodel(args) => commands::costmodel(args),
        Command::TrainProgan(args) => commands::train_progan(args),
        Command::TrainSrgan(args) => commands::train_srgan(args),
        Command::Upsample(args) => commands::upsample(args),
        Command::ResampleBench(args) => commands::resample_bench(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Pipeline(args) => commands::pipeline(args),
        Command::SynthData(args) => commands::synth_data(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

#[allow(dead_code)]
fn classify(err: &Error) -> u8 {
    if err.is_config() {
        1
    } else {
        2
    }
}
