//! `vma3c`: train, evaluate, verify and inspect VMA3C runs.

mod check;
mod eval;
mod manifest;
mod play;
mod plot;
mod serve;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Process exit status with the message printed before exiting.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<vma3c::Error> for CliError {
    fn from(e: vma3c::Error) -> Self {
        let code = match &e {
            vma3c::Error::Config(_) => 2,
            vma3c::Error::Worker(_) => 3,
            vma3c::Error::Checkpoint(_) => 4,
            _ => 1,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(1, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new(1, e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Greedy,
    Sample,
}

impl From<PolicyArg> for vma3c::trainer::EvalPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Greedy => Self::Greedy,
            PolicyArg::Sample => Self::Sample,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AdvantageArg {
    Paper,
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Premises,
    Grad,
    Advantage,
    Env,
}

#[derive(Parser, Debug)]
#[command(name = "vma3c", version, about = "Multi-agent A3C with visual communication maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a run and evaluate its checkpoints.
    Train(train::TrainArgs),
    /// Evaluate one checkpoint.
    Eval(eval::EvalArgs),
    /// Merge runs' evals.csv files into one SVG chart.
    Plot(plot::PlotArgs),
    /// Run a verification suite.
    Check(check::CheckArgs),
    /// Roll out a checkpoint or the scripted oracle, dumping frames and a
    /// trajectory log.
    Play(play::PlayArgs),
    /// Serve the environment as newline-delimited JSON on stdin/stdout.
    Serve(serve::ServeArgs),
}

/// Shared overrides applied on top of a config file.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct Overrides {
    /// Training config (JSON). Defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Failure probability per pick-up action.
    #[arg(long)]
    pub er: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("MF_LOG_LEVEL", "info");
    env_logger::Builder::from_env(env)
        .format_timestamp_secs()
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Plot(a) => plot::run(a),
        Command::Check(a) => check::run(a),
        Command::Play(a) => play::run(a),
        Command::Serve(a) => serve::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
