use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use varsmooth::cli;

#[derive(Parser)]
#[command(
    name = "varsmooth",
    version,
    about = "First-order solvers for smooth-plus-weakly-convex composite minimization"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured algorithm(s) on the configured problem
    Solve { config: PathBuf },
    /// Denoise an image (.pgm or .csv) with the configured penalty and solver
    Denoise { image: PathBuf, config: PathBuf },
    /// Run two or more algorithms on one problem and tabulate the results
    Compare { config: PathBuf },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Command::Solve { config } => cli::run_solve(&config),
        Command::Denoise { image, config } => cli::run_denoise(&image, &config),
        Command::Compare { config } => cli::run_compare(&config),
    };
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(cli::exit_code_for(&err))
        }
    }
}
