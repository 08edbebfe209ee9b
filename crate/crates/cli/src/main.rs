//! `whff` command-line front end.
//!
//! Exit codes: 0 on success, 1 on user or usage errors, 2 when input data
//! is corrupt. Errors are printed to stderr as one structured line.

mod analyze;
mod bench;
mod codec;
mod error;
mod gen;
mod output;
mod run;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "whff", version, about = "Wafer-heat feed-forward pipeline tools")]
struct Cli {
    /// Worker threads for data-parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a model and write it to disk.
    Gen(gen::GenArgs),
    /// Execute a scan and write trace, deformations and deadline summary.
    Run(run::RunArgs),
    /// Measure kernel throughput.
    #[command(subcommand)]
    Bench(bench::BenchCommand),
    /// Compress, decompress and inspect operator streams.
    #[command(subcommand)]
    Codec(codec::CodecCommand),
    /// Evaluate the analytic cost models.
    #[command(subcommand)]
    Analyze(analyze::AnalyzeCommand),
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::user(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Gen(a) => gen::run(a, cli.seed),
        Command::Run(a) => run::run(a, cli.seed),
        Command::Bench(c) => bench::run(c, cli.seed),
        Command::Codec(c) => codec::run(c),
        Command::Analyze(c) => analyze::run(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let first = rendered
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::usage(first));
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
