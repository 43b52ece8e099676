use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cellid::commands::{
    cmd_bench, cmd_fit, cmd_generate, cmd_simulate, load_config, BenchArgs, CliError, FitArgs, ProfileSpec,
};
use cellid::optimizers::Method;

/// Single particle model simulation and parameter identification benchmark.
#[derive(Parser)]
#[command(name = "cellid", version)]
struct Cli {
    /// Configuration directory holding cell.json, optimizers.json and
    /// dst_template.json. Falls back to $CELLID_CONFIG_DIR, then ./config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one profile on the reference cell and write its trace CSV.
    Simulate {
        /// `cc:<c-rate>` for a constant-current discharge, or `dst`.
        #[arg(long)]
        profile: ProfileSpec,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the fitting and validation traces plus manifest.json.
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one optimizer on a generated suite and write the result JSON.
    Fit {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optimizer seed; for ls, the seed of the sampled starting points.
        #[arg(long)]
        seed: Option<u64>,
        /// ls only: which sampled starting point to use.
        #[arg(long, default_value_t = 0)]
        init_index: usize,
    },
    /// Repeat one optimizer and write runs.csv, summary.json and histograms.
    Bench {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        /// Run k uses seed + k.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate { profile, out } => {
            let termination = cmd_simulate(&config, profile, &out)?;
            eprintln!("wrote {} ({termination})", out.display());
        }
        Command::Generate { out } => {
            let manifest = cmd_generate(&config, &out)?;
            eprintln!("wrote {} traces to {}", manifest.traces.len(), out.display());
        }
        Command::Fit {
            method,
            suite,
            out,
            seed,
            init_index,
        } => {
            let record = cmd_fit(
                &config,
                &FitArgs {
                    method,
                    suite_dir: suite,
                    out,
                    seed,
                    init_index,
                },
            )?;
            println!(
                "{method}: fitting {:.3} mV, validation {:.3} mV, {:.1} s",
                record.fitting_rmse_mv, record.validation_rmse_mv, record.wall_time_s
            );
        }
        Command::Bench {
            method,
            suite,
            out,
            reps,
            seed,
            workers,
        } => {
            let report = cmd_bench(
                &config,
                &BenchArgs {
                    method,
                    suite_dir: suite,
                    out_dir: out,
                    repetitions: reps,
                    base_seed: seed,
                    workers,
                },
            )?;
            let s = &report.summary;
            println!(
                "{method} x{}: runtime {:.2} ({:.2}) s, fitting {:.3} ({:.3}) mV, validation {:.3} ({:.3}) mV",
                s.repetitions,
                s.runtime_s.mean,
                s.runtime_s.sd,
                s.fitting_rmse_mv.mean,
                s.fitting_rmse_mv.sd,
                s.validation_rmse_mv.mean,
                s.validation_rmse_mv.sd
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
