//! `bsnf`: normalize formulas, check equivalences on small structures and
//! generate the lower-bound families.

mod commands;
mod config;
mod error;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::commands::{CheckArgs, GenerateArgs, NormalizeArgs, StatsArgs};
use crate::config::Common;

#[derive(Parser, Debug)]
#[command(name = "bsnf", version, about = "Local normal forms for first-order logic on bounded-degree structures")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compile a formula to the local normal form (or an intermediate stage).
    Normalize(NormalizeArgs),
    /// Compare two formulas on every structure of a pool.
    Check(CheckArgs),
    /// Write members of a structure or formula family to files.
    Generate(GenerateArgs),
    /// Size table for the lower-bound formulas.
    Stats(StatsArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // formulas from the pipeline can be deep; recursion over them needs room
    std::thread::Builder::new()
        .stack_size(512 << 20)
        .spawn(move || run(&cli))
        .expect("cannot start worker thread")
        .join()
        .unwrap_or(ExitCode::from(101))
}

fn run(cli: &Cli) -> ExitCode {
    let start = Instant::now();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match &cli.command {
        Command::Normalize(a) => commands::normalize(&cli.common, a, &mut out),
        Command::Check(a) => commands::check(&cli.common, a, &mut out),
        Command::Generate(a) => commands::generate(&cli.common, a, &mut out),
        Command::Stats(a) => commands::stats(&cli.common, a, &mut out),
    };
    let _ = out.flush();
    eprintln!("wall time: {} ms", start.elapsed().as_millis());
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
