//! `polyharm`: batch runner for kernel checks, fundamental-solution
//! constants, Navier solves, growth classification and singularity removal.

mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::{RunArgs, RunConfig};
use error::{CliError, EXIT_OK, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "polyharm", version, about = "Isolated singularities of polyharmonic functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Green and Poisson kernel self-tests (exit 2 on failure).
    Kernels(RunArgs),
    /// Constant of the iterated Laplacian of the fundamental solution.
    Fundamental(RunArgs),
    /// Rebuild a field from its boundary traces and report residuals.
    Navier(RunArgs),
    /// Growth classification only.
    Classify(RunArgs),
    /// Classification, reconstruction and residual check.
    Remove(RunArgs),
    /// Run the built-in corpus.
    Report(RunArgs),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("POLYHARM_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| CliError::Usage(format!("POLYHARM_THREADS='{raw}' is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

type Handler = fn(&RunConfig) -> Result<u8, CliError>;

fn run(cli: Cli) -> Result<u8, CliError> {
    configure_threads()?;
    let (name, args, f): (&str, &RunArgs, Handler) = match &cli.command {
        Command::Kernels(a) => ("kernels", a, commands::kernels),
        Command::Fundamental(a) => ("fundamental", a, commands::fundamental),
        Command::Navier(a) => ("navier", a, commands::navier),
        Command::Classify(a) => ("classify", a, commands::classify),
        Command::Remove(a) => ("remove", a, commands::remove),
        Command::Report(a) => ("report", a, commands::report),
    };
    let cfg = RunConfig::resolve(name, args)?;
    f(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
