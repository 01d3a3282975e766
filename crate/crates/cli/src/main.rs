// SPDX-License-Identifier: Apache-2.0

//! `rer3d`: simulate convolution layers on a stacked crossbar.
//!
//! Exit status: 0 success, 1 output outside tolerance, 2 invalid input,
//! 3 infeasible mapping, 4 output write failure.

mod commands;
mod failure;
mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::SweepParam;
use failure::Failure;
use spec::RunStrategy;

#[derive(Parser)]
#[command(
    name = "rer3d",
    version,
    about = "Stacked-crossbar convolution simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one layer and write featuremap, trace, cost and diff files.
    Run {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        strategy: Option<RunStrategy>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Re-run a layer over a range of one parameter and write a CSV.
    Sweep {
        spec: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(long, default_value_t = 1)]
        step: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        strategy: Option<RunStrategy>,
    },
    /// Print the default calibration merged with an override file.
    Calibrate {
        #[arg(long = "override")]
        override_file: PathBuf,
    },
}

fn init_threads() -> Result<(), Failure> {
    let threads = match std::env::var("RER3D_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Failure::spec(format!("RER3D_THREADS={v} is not a thread count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::spec(format!("thread pool: {e}")))
}

fn dispatch(cli: Cli) -> Result<ExitCode, Failure> {
    init_threads()?;
    match cli.command {
        Command::Run {
            spec,
            out,
            strategy,
            tolerance,
        } => {
            let passed = commands::cmd_run(&spec, &out, strategy, tolerance)?;
            if !passed {
                eprintln!(
                    "rer3d: output outside tolerance, see {}",
                    out.join("diff.json").display()
                );
            }
            Ok(ExitCode::from(if passed { 0 } else { 1 }))
        }
        Command::Sweep {
            spec,
            param,
            from,
            to,
            step,
            out,
            strategy,
        } => {
            commands::cmd_sweep(&spec, param, from, to, step, &out, strategy)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate { override_file } => {
            println!("{}", commands::cmd_calibrate(&override_file)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    dispatch(cli).unwrap_or_else(|f| {
        eprintln!("rer3d: {f}");
        f.exit_code()
    })
}
