//! The subcommands behind the `cellid` binary.
//!
//! Every command loads and checks all of its inputs before it writes
//! anything, so a configuration mistake never leaves partial output.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigSet;
use crate::harness::{emit_report, run_experiment, BenchReport, ExperimentPlan};
use crate::objective::{rmse_over_suite, SuiteObjective};
use crate::optimizers::{make_bounds, run_method, sample_uniform, ConvergedBy, Method, MethodConfig};
use crate::params::EstimandVector;
use crate::protocols::{
    build_suite, make_cc_discharge, make_dst, read_suite, write_suite, write_trace, SuiteManifest, Termination,
};
use crate::spm::simulate_profile;

pub const CONFIG_DIR_ENV: &str = "CELLID_CONFIG_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configuration or input files.
    #[error("{0}")]
    Invalid(String),
    /// Something went wrong after the inputs were accepted.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn invalid(e: impl ToString) -> CliError {
    CliError::Invalid(e.to_string())
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

/// `explicit`, else `$CELLID_CONFIG_DIR`, else `./config`.
pub fn resolve_config_dir(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(CONFIG_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("config"),
    }
}

pub fn load_config(explicit: Option<&Path>) -> Result<ConfigSet, CliError> {
    let dir = resolve_config_dir(explicit);
    if !dir.is_dir() {
        return Err(invalid(format!("config directory {} does not exist", dir.display())));
    }
    ConfigSet::load(&dir).map_err(invalid)
}

/// A profile named on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileSpec {
    ConstantCurrent(f64),
    Dst,
}

impl FromStr for ProfileSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "dst" {
            return Ok(ProfileSpec::Dst);
        }
        let rate = s
            .strip_prefix("cc:")
            .ok_or_else(|| format!("profile {s:?} is neither cc:<rate> nor dst"))?;
        let rate: f64 = rate.parse().map_err(|_| format!("c_rate {rate:?} is not a number"))?;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(format!("c_rate must be positive, got {rate}"));
        }
        Ok(ProfileSpec::ConstantCurrent(rate))
    }
}

/// Simulates one profile on the reference cell and writes its trace.
pub fn cmd_simulate(config: &ConfigSet, profile: ProfileSpec, out: &Path) -> Result<Termination, CliError> {
    let params = config.cell.reference_parameters();
    let protocol = &config.cell.protocol;
    let profile = match profile {
        ProfileSpec::ConstantCurrent(rate) => {
            make_cc_discharge(rate, &params, protocol.cc_window_factor / rate, protocol.dt_s)
        }
        ProfileSpec::Dst => make_dst(&params, protocol.dst_repetitions, &config.dst, protocol.dt_s),
    }
    .map_err(invalid)?;
    let trace = simulate_profile(&params, &profile).map_err(runtime)?;
    if trace.is_empty() {
        return Err(runtime(format!("{} produced no samples", profile.name)));
    }
    create_parent(out)?;
    write_trace(&trace, out).map_err(runtime)?;
    Ok(trace.termination)
}

/// Generates the fitting and validation traces into `out_dir`.
pub fn cmd_generate(config: &ConfigSet, out_dir: &Path) -> Result<SuiteManifest, CliError> {
    let params = config.cell.reference_parameters();
    let suite = build_suite(&params, &config.cell.protocol, &config.dst).map_err(runtime)?;
    fs::create_dir_all(out_dir).map_err(|e| runtime(format!("{}: {e}", out_dir.display())))?;
    write_suite(&suite, out_dir).map_err(runtime)
}

/// Contents of the file written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub method: Method,
    /// PSO/GA: the optimizer seed. LS: the seed of the sampled starting points.
    pub seed: u64,
    /// LS only: which sampled starting point was used.
    pub init_index: Option<usize>,
    pub best: EstimandVector,
    /// Sum of squared fitting residuals [V^2].
    pub best_cost: f64,
    pub fitting_rmse_mv: f64,
    pub validation_rmse_mv: f64,
    pub wall_time_s: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged_by: ConvergedBy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitArgs {
    pub method: Method,
    pub suite_dir: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub init_index: usize,
}

fn load_suite_objective(config: &ConfigSet, suite_dir: &Path) -> Result<SuiteObjective, CliError> {
    if !suite_dir.is_dir() {
        return Err(invalid(format!("suite directory {} does not exist", suite_dir.display())));
    }
    let suite = read_suite(suite_dir).map_err(invalid)?;
    let objective = &config.optimizers.objective;
    SuiteObjective::new(
        &suite,
        &config.cell.reference_parameters(),
        objective.penalty_voltage,
        objective.validation_pooling,
    )
    .map_err(invalid)
}

/// One optimizer run against a generated suite.
pub fn cmd_fit(config: &ConfigSet, args: &FitArgs) -> Result<FitRecord, CliError> {
    let settings = &config.optimizers;
    let bounds = make_bounds(&config.cell.reference, settings.bounds.lo_factor, settings.bounds.hi_factor)
        .map_err(invalid)?;
    let (method_config, seed, init) = match args.method {
        Method::Ls => {
            let seed = args.seed.unwrap_or(settings.bench.base_seed);
            let count = settings.bench.ls_initial_sets.max(args.init_index + 1);
            let init = sample_uniform(&bounds, count, seed)[args.init_index];
            (MethodConfig::Ls(settings.ls), seed, Some(init))
        }
        Method::Pso => {
            let seed = args.seed.unwrap_or(settings.pso.seed);
            (MethodConfig::Pso(settings.pso), seed, None)
        }
        Method::Ga => {
            let seed = args.seed.unwrap_or(settings.ga.seed);
            (MethodConfig::Ga(settings.ga), seed, None)
        }
    };
    let objective = load_suite_objective(config, &args.suite_dir)?;

    let result = run_method(&method_config, &bounds, &objective.fitting, init.as_ref(), seed).map_err(runtime)?;
    let (fitting_rmse_mv, validation_rmse_mv) = rmse_over_suite(&result.best, &objective);
    let record = FitRecord {
        method: args.method,
        seed,
        init_index: init.map(|_| args.init_index),
        best: result.best,
        best_cost: result.best_cost,
        fitting_rmse_mv,
        validation_rmse_mv,
        wall_time_s: result.wall_time,
        evaluations: result.evaluations,
        iterations: result.iterations,
        converged_by: result.converged_by,
    };
    create_parent(&args.out)?;
    let text = serde_json::to_string_pretty(&record).expect("fit record serializes") + "\n";
    fs::write(&args.out, text).map_err(|e| runtime(format!("{}: {e}", args.out.display())))?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchArgs {
    pub method: Method,
    pub suite_dir: PathBuf,
    pub out_dir: PathBuf,
    pub repetitions: Option<usize>,
    pub base_seed: Option<u64>,
    pub workers: Option<usize>,
}

/// Repeated runs of one method, written as a report directory.
pub fn cmd_bench(config: &ConfigSet, args: &BenchArgs) -> Result<BenchReport, CliError> {
    let plan = ExperimentPlan::from_settings(
        &config.optimizers,
        &config.cell.reference,
        args.method,
        args.repetitions,
        args.base_seed,
        args.workers,
    )
    .map_err(invalid)?;
    let objective = load_suite_objective(config, &args.suite_dir)?;
    let report = run_experiment(&plan, &objective).map_err(runtime)?;
    emit_report(&report, &args.out_dir).map_err(runtime)?;
    Ok(report)
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
        }
        _ => Ok(()),
    }
}
