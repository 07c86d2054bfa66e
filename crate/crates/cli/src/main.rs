//! `monattn`: train, decode, validate and benchmark monotonic attention.

mod bench;
mod checkgrad;
mod config;
mod decode;
mod simulate;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Resolver;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// Anything that went wrong while doing the work; exit code 1.
    Runtime(String),
}

impl From<monattn::Error> for CliError {
    fn from(e: monattn::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "monattn", version, about = "Monotonic attention: training, decoding, validation and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
pub struct Common {
    /// Random seed; every subcommand is deterministic given it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key = value` settings file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Common {
    fn resolver(&self) -> Result<Resolver, CliError> {
        Resolver::load(self.config.as_deref())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the toy encoder-decoder and write a checkpoint and metrics CSV.
    Train(train::TrainArgs),
    /// Decode inputs with a trained checkpoint.
    Decode(decode::DecodeArgs),
    /// Compare the expectation recurrence and scan against exact enumeration.
    Simulate(simulate::SimulateArgs),
    /// Run the gradient check suite.
    Checkgrad(checkgrad::CheckgradArgs),
    /// Time softmax against hard monotonic attention over a (T, U) grid.
    Bench(bench::BenchArgs),
}

/// Resolves an enum-valued setting given as a flag or a config-file string.
pub fn resolve_enum<E: ValueEnum + Clone>(
    r: &mut Resolver,
    key: &str,
    flag: Option<E>,
    default: &str,
) -> Result<E, CliError> {
    let name = |e: &E| e.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let text = r.value(key, flag.as_ref().map(name), default.to_string())?;
    E::from_str(&text, true).map_err(|_| {
        let allowed: Vec<String> = E::value_variants().iter().map(name).collect();
        CliError::Usage(format!("invalid value `{text}` for `{key}` (expected one of {})", allowed.join(", ")))
    })
}

fn init_logging() {
    let level = match std::env::var("MONATTN_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    let result = match cli.command {
        Command::Train(a) => train::run(a),
        Command::Decode(a) => decode::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Checkgrad(a) => checkgrad::run(a),
        Command::Bench(a) => bench::run(a),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `monattn --help` for usage");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
