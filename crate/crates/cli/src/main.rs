//! Command-line front end for the household epidemic models.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hhepi::Model;

#[derive(Parser)]
#[command(name = "hhepi", version, about = "Household SIR models with mild and severe infection")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "HHEPI_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads for independent jobs.
    #[arg(long, global = true, env = "HHEPI_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Asymptotic household final-size distribution.
    FinalSize {
        #[arg(long)]
        model: Model,
        #[command(flatten)]
        common: Common,
    },
    /// Batch of stochastic simulations.
    Simulate {
        #[arg(long)]
        model: Model,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        cutoff: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a model to final-size data.
    Fit {
        #[arg(long)]
        model: Model,
        /// Target final-size CSV.
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the experiment described by the config's [experiment] section.
    Experiment {
        #[arg(long)]
        runs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<hhepi::Error>() {
        Some(e) if e.is_io() => EXIT_IO,
        Some(e) if e.is_numerical() => EXIT_NUMERICAL,
        Some(_) => EXIT_VALIDATION,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
        None => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_VALIDATION);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    let result = match cli.command {
        Command::FinalSize { model, common } => commands::final_size(&cli.out, model, &common),
        Command::Simulate { model, replicates, cutoff, common } => {
            commands::simulate(&cli.out, model, replicates, cutoff, &common)
        }
        Command::Fit { model, target, runs, common } => commands::fit(&cli.out, model, &target, runs, &common),
        Command::Experiment { runs, common } => commands::experiment(&cli.out, runs, &common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
