//! Command-line entry point for the training lab.
//!
//! Subcommands mirror the pipeline stages; `pipeline` runs them all. Log
//! verbosity is controlled by the `GRPO_LAB_LOG` environment variable
//! (error, warn, info, debug, trace).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use grpo_lab::config::ExperimentConfig;
use grpo_lab::pipeline;
use grpo_lab::Error;

#[derive(Parser)]
#[command(name = "grpo-lab", version, about = "Desk-scale GRPO training lab")]
struct Cli {
    /// Path to the experiment config (TOML). Defaults are used if omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the global seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the training set, SFT demonstrations, and evaluation set.
    Gen,
    /// Supervised fine-tuning on the demonstrations.
    Sft,
    /// Difficulty-filter the training set with the SFT policy as probe.
    Filter,
    /// GRPO training on the filtered set.
    Grpo,
    /// Evaluate the trained policy on the held-out set.
    Eval,
    /// All stages in order.
    Pipeline,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.display().to_string();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let config = load_config(cli)?;
    match cli.command {
        Command::Gen => pipeline::cmd_gen(&config),
        Command::Sft => pipeline::cmd_sft(&config),
        Command::Filter => pipeline::cmd_filter(&config),
        Command::Grpo => pipeline::cmd_grpo(&config),
        Command::Eval => pipeline::cmd_eval(&config),
        Command::Pipeline => pipeline::cmd_pipeline(&config),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::TomlParse(_) | Error::InvalidInput(_) => 2,
        Error::MissingInput(_) => 3,
        Error::NonFinite(_) => 4,
        Error::Io(_) | Error::Json(_) => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRPO_LAB_LOG", "info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
