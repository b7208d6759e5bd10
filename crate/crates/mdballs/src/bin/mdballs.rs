//! CLI entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mdballs::error::{Error, Result};
use mdballs::harness;

#[derive(Parser)]
#[command(name = "mdballs", about = "Multidimensional balls-into-bins simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a plan: run all trials, write CSV and JSON summary.
    Run {
        plan: PathBuf,
    },
    /// Run to a ball count, freeze the state, and estimate the one-step
    /// potential drift there.
    Drift {
        plan: PathBuf,
        /// Ball count at which to freeze the state.
        #[arg(long)]
        at: u64,
        /// Monte Carlo continuations to draw.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Enumerate the plan's config exactly and chi-square the simulator
    /// against it. Exits 0 iff p > 0.01 and no impossible outcome appears.
    OracleCheck {
        plan: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Emit theoretical bound curves next to observed median gaps for
    /// every sweep point.
    Bounds {
        plan: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        zeta: f64,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { plan } => {
            let plan = harness::load_plan(&plan)?;
            let out = harness::run_plan(&plan)?;
            match (&out.csv_path, &out.summary_path) {
                (Some(csv), Some(summary)) => {
                    eprintln!("wrote {} and {}", csv.display(), summary.display());
                    print!("{}", out.summary_json);
                }
                _ => print!("{}", out.csv),
            }
            Ok(())
        }
        Command::Drift { plan, at, samples } => {
            let plan = harness::load_plan(&plan)?;
            let report = harness::drift_at(&plan, at, samples)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(())
        }
        Command::OracleCheck { plan, trials } => {
            let plan = harness::load_plan(&plan)?;
            let report = harness::oracle_check(&plan, trials)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            if report.passed {
                Ok(())
            } else {
                Err(Error::CheckFailed(format!(
                    "chi-square p = {} is not > 0.01",
                    report.p_value
                )))
            }
        }
        Command::Bounds { plan, zeta } => {
            let plan = harness::load_plan(&plan)?;
            let rows = harness::bounds_report(&plan, zeta)?;
            println!("{}", serde_json::to_string_pretty(&rows).unwrap());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
