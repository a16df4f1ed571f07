//! `signtopic` command-line front end.
//!
//! Every subcommand resolves its settings from an optional `--config` file
//! (`key = value`), then `--set key=value` pairs, then explicit flags, and
//! echoes the result as a config file next to its output.

mod commands;
mod settings;

use std::ffi::OsString;
use std::fmt;

use clap::{Parser, Subcommand};
use signtopic_core::{Error, ErrorCategory};

pub use settings::{echo_path_for_dir, echo_path_for_file};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;
pub const THREADS_ENV: &str = "SIGNTOPIC_THREADS";

#[derive(Debug)]
pub struct CliError {
    pub category: ErrorCategory,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            category: ErrorCategory::Usage,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category {
            ErrorCategory::Usage => EXIT_USAGE,
            ErrorCategory::Data => EXIT_DATA,
            ErrorCategory::Divergence => EXIT_DIVERGENCE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cat = match self.category {
            ErrorCategory::Usage => "usage",
            ErrorCategory::Data => "data",
            ErrorCategory::Divergence => "divergence",
        };
        // One line, whatever the message holds.
        write!(f, "error[{cat}]: {}", self.message.replace('\n', " "))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            category: e.category(),
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "signtopic", version, about = "Sign-language topic detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert keypoint files to normalized Cartesian or 6D angular features.
    Convert(commands::convert::ConvertArgs),
    /// Train one model on a manifest and write a run directory.
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint on one split of a manifest.
    Eval(commands::eval::EvalArgs),
    /// Print parameter and FLOP counts.
    Cost(commands::cost::CostArgs),
    /// Train, apply or invert a subword vocabulary.
    Tokenize(commands::tokenize::TokenizeArgs),
    /// Generate a synthetic class-separable corpus.
    Synth(commands::synth::SynthArgs),
    /// Train every point of a hyperparameter grid and rank them.
    Gridsearch(commands::grid::GridArgs),
    /// Aggregate run directories into a mean±std accuracy table.
    Report(commands::report::ReportArgs),
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    // A second call in the same process (tests) keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match cli.command {
        Command::Convert(a) => commands::convert::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Cost(a) => commands::cost::run(a),
        Command::Tokenize(a) => commands::tokenize::run(a),
        Command::Synth(a) => commands::synth::run(a),
        Command::Gridsearch(a) => commands::grid::run(a),
        Command::Report(a) => commands::report::run(a),
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code; errors are printed as one `error[category]: ...` line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", CliError::usage(first.trim_start_matches("error: ")));
            return EXIT_USAGE;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
