//! Command-line front end: `run`, `compare` and `inspect`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedtsv::harness::{cmd_compare, cmd_run, inspect_report, ConfigOverrides};
use fedtsv::Error;

#[derive(Parser)]
#[command(name = "fedtsv", version, about = "Deterministic federated-learning simulator")]
struct Cli {
    /// Client-training worker threads per round (results do not depend on it).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory, overriding the config's `output_dir`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Master seed, overriding the config's `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run { config: PathBuf },
    /// Compare two or more finished runs.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
    },
    /// Print a summary of one finished run.
    Inspect { dir: PathBuf },
}

fn error_kind(e: &Error) -> &'static str {
    match e.exit_code() {
        2 => "config",
        3 => "data",
        _ => "runtime",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => {
            let overrides = ConfigOverrides {
                output_dir: cli.output,
                master_seed: cli.seed,
            };
            cmd_run(&config, &overrides, cli.jobs.max(1)).map(|dir| {
                log::info!("artifacts written to {}", dir.display());
            })
        }
        Command::Compare { dirs } => cmd_compare(&dirs, cli.output.as_deref()).map(|r| print!("{r}")),
        Command::Inspect { dir } => inspect_report(&dir).map(|r| print!("{r}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", error_kind(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
