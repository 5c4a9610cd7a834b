//! `jam`: headless simulation, transcript analysis and log replay.

mod analyze;
mod replay;
mod simulate;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// One JSON object per line.
    Lines,
    /// Aligned text for people.
    Table,
}

#[derive(Parser)]
#[command(name = "jam", version, about = "Just a Minute: simulate games, analyze transcripts, replay logs")]
struct Cli {
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play all-simulated games and report aggregate statistics.
    Simulate {
        #[arg(long, default_value_t = 100)]
        games: usize,
        /// Seed of the first game; game i uses seed + i.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Game config (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for the game logs and report.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Detect rule violations in a transcript file.
    Analyze {
        #[arg(long)]
        topic: String,
        /// Game config (TOML) whose detector settings apply.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Plain text or timestamped token transcript.
        file: PathBuf,
    },
    /// Rebuild a game from its log and print the summary.
    Replay { file: PathBuf },
}

/// Failures with a stable code, printed as `error[Code]: message`.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    InvalidConfig(String),
    #[error("{0}")]
    ZeroLengthSpeech(String),
    #[error("{0}")]
    CorruptLog(String),
    #[error("{0}")]
    Transcript(String),
    #[error("{0}")]
    Game(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::InvalidConfig(_) => "InvalidConfig",
            CliError::ZeroLengthSpeech(_) => "ZeroLengthSpeech",
            CliError::CorruptLog(_) => "CorruptLog",
            CliError::Transcript(_) => "TranscriptParse",
            CliError::Game(_) => "Game",
            CliError::Io { .. } => "Io",
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

impl From<jam_core::GameError> for CliError {
    fn from(e: jam_core::GameError) -> Self {
        use jam_core::GameError as G;
        match e {
            G::InvalidConfig(_) => CliError::InvalidConfig(e.to_string()),
            G::CorruptLog { .. } | G::SequenceGap { .. } => CliError::CorruptLog(e.to_string()),
            e => CliError::Game(e.to_string()),
        }
    }
}

pub fn load_config(path: Option<&PathBuf>) -> Result<jam_core::GameConfig, CliError> {
    match path {
        Some(p) => Ok(jam_core::GameConfig::load(p)?),
        None => Ok(jam_core::GameConfig::default()),
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Simulate {
            games,
            seed,
            config,
            out,
            jobs,
        } => simulate::run(&simulate::Options {
            games,
            seed,
            config: load_config(config.as_ref())?,
            out,
            jobs,
            format: cli.format,
        }),
        Command::Analyze { topic, config, file } => analyze::run(&topic, &load_config(config.as_ref())?, &file, cli.format),
        Command::Replay { file } => replay::run(&file, cli.format),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
