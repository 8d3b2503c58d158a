mod commands;
mod curves;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Train and evaluate learned normal-force controllers.
#[derive(Debug, Parser)]
#[command(name = "forcerl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one policy variant; writes metrics, checkpoints and a manifest.
    Train(commands::TrainArgs),
    /// Score a checkpoint (or the reference controller) over DR rollouts.
    Eval(commands::EvalArgs),
    /// Follow a goal staircase at fixed contact angles.
    Track(commands::TrackArgs),
    /// Scripted demonstrations.
    #[command(subcommand)]
    Demo(DemoCommand),
    /// Aggregate learning curves over several run directories.
    Curves(curves::CurvesArgs),
}

#[derive(Debug, Subcommand)]
enum DemoCommand {
    /// Drag a box sideways while holding a normal force.
    StickSlip(commands::StickSlipArgs),
}

/// Failure classes, mapped to process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<forcerl_core::ConfigError> for CliError {
    fn from(e: forcerl_core::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Root for run directories that are not given explicitly.
pub fn output_root() -> PathBuf {
    std::env::var_os("FORCERL_OUT").map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Track(args) => commands::track(args),
        Command::Demo(DemoCommand::StickSlip(args)) => commands::stick_slip(args),
        Command::Curves(args) => curves::curves(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("forcerl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
