//! `dpsnn` command-line tool: train, enhance, eval, bench.
//!
//! Human-readable progress goes to stderr. Machine-readable results go to
//! stdout, one JSON object per line, each prefixed with `@json `.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input format (exit 2).
    Usage(String),
    /// Non-finite values or diverged training (exit 3).
    Numeric(String),
    /// Unreadable or unwritable files (exit 4).
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<dpsnn::Error> for CliError {
    fn from(e: dpsnn::Error) -> Self {
        use dpsnn::Error as E;
        let msg = e.to_string();
        match e {
            _ if e.is_numeric() => CliError::Numeric(msg),
            E::Io(_) | E::Wav(_) | E::Checkpoint(_) => CliError::Io(msg),
            _ => CliError::Usage(msg),
        }
    }
}

#[derive(Parser)]
#[command(name = "dpsnn", version, about = "Low-latency spiking speech enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on synthetic mixtures and write a checkpoint.
    Train {
        /// `key = value` run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Enhance one 16 kHz mono WAV file.
    Enhance(EnhanceArgs),
    /// Score a model on paired noisy/clean directories.
    Eval {
        #[arg(long, required_unless_present = "passthrough")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        noisy_dir: PathBuf,
        #[arg(long)]
        clean_dir: PathBuf,
        /// JSON-lines report to write.
        #[arg(long)]
        report: PathBuf,
        /// Score the noisy files themselves instead of model output.
        #[arg(long)]
        passthrough: bool,
    },
    /// Power proxy and real-time factor on synthetic input.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Block-by-block processing (default).
    #[arg(long, conflicts_with = "offline")]
    pub streaming: bool,
    /// Whole-file processing.
    #[arg(long)]
    pub offline: bool,
    /// Streaming block size in milliseconds.
    #[arg(long, default_value_t = 10.0)]
    pub chunk_ms: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out } => commands::train(&config, &out),
        Command::Enhance(args) => commands::enhance(&args),
        Command::Eval {
            checkpoint,
            noisy_dir,
            clean_dir,
            report,
            passthrough,
        } => commands::eval(checkpoint.as_deref(), &noisy_dir, &clean_dir, &report, passthrough),
        Command::Bench { checkpoint, seconds, seed } => commands::bench(&checkpoint, seconds, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
