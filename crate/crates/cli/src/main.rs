use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use textdiar_core::Error;

mod commands;
mod config;

use commands::{AnalyzeArgs, EvaluateArgs, PredictorArgs, SimulateArgs};
use config::{CommonArgs, RunConfig};

/// Text-only speaker diarization.
#[derive(Debug, Parser)]
#[command(name = "textdiar", version)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transfer reference speakers onto hypothesis transcripts.
    Align {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        hypothesis: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the built-in baseline.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        hash_bits: Option<u32>,
        /// Speaker count for multispeaker mode.
        #[arg(long)]
        speakers: Option<usize>,
    },
    /// Write prediction records for every conversation.
    Predict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Speaker count for multispeaker mode.
        #[arg(long)]
        speakers: Option<usize>,
        #[command(flatten)]
        predictor: PredictorArgs,
    },
    /// Score predictions with WDER and WDER-S.
    Evaluate(EvaluateArgs),
    /// Break down aggregation efficacy and sample error slices.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic corpus.
    Simulate(SimulateArgs),
}

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_PROTOCOL: u8 = 4;
const EXIT_VALIDATION: u8 = 5;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        Error::Protocol { .. } | Error::Transport { .. } => EXIT_PROTOCOL,
        Error::Parse { .. } | Error::Validation(_) => EXIT_VALIDATION,
    }
}

fn run(cli: Cli) -> textdiar_core::Result<()> {
    let mut cfg = RunConfig::resolve(&cli.common)?;
    match cli.command {
        Command::Align { reference, hypothesis, out } => commands::cmd_align(&reference, &hypothesis, &out),
        Command::Train {
            data,
            out,
            epochs,
            learning_rate,
            hash_bits,
            speakers,
        } => {
            if let Some(v) = epochs {
                cfg.train.epochs = v;
            }
            if let Some(v) = learning_rate {
                cfg.train.learning_rate = v;
            }
            if let Some(v) = hash_bits {
                cfg.train.hash_bits = v;
            }
            if let Some(v) = speakers {
                cfg.speakers = v;
            }
            commands::cmd_train(&cfg, &data, &out)
        }
        Command::Predict {
            input,
            out,
            speakers,
            predictor,
        } => {
            if let Some(v) = speakers {
                cfg.speakers = v;
            }
            commands::cmd_predict(&cfg, &predictor, &input, &out)
        }
        Command::Evaluate(args) => commands::cmd_evaluate(&cfg, &args),
        Command::Analyze(args) => commands::cmd_analyze(&cfg, &args),
        Command::Simulate(args) => commands::cmd_simulate(&cfg, &args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
