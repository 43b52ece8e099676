//! Repeated optimizer runs, their statistics, histograms and report files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::OptimizerSettings;
use crate::objective::{rmse_over_suite, SuiteObjective};
use crate::optimizers::{
    make_bounds, run_method, sample_uniform, Bounds, ConvergedBy, Method, MethodConfig, OptError,
};
use crate::params::{EstimandVector, ESTIMAND_NAMES, N_ESTIMANDS};

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const HIST_FITTING_FILE: &str = "hist_fitting.csv";
pub const HIST_VALIDATION_FILE: &str = "hist_validation.csv";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment plan: {0}")]
    Plan(String),
    #[error("histogram bin width must be finite and > 0, got {0}")]
    BinWidth(f64),
    #[error("histogram value {0} is not finite")]
    NonFiniteValue(f64),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Optimizer(#[from] OptError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Everything needed to repeat one method.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub method: MethodConfig,
    pub repetitions: usize,
    /// Run `k` uses seed `base_seed + k`.
    pub base_seed: u64,
    /// Parallel runs; each run still parallelizes its own evaluations.
    pub workers: usize,
    pub bounds: Bounds,
    /// Least-squares starting points; run `k` starts from `inits[k]`.
    pub inits: Vec<EstimandVector>,
    pub histogram_bin_mv: f64,
}

impl ExperimentPlan {
    /// The plan described by the optimizer settings. Least-squares starts are
    /// drawn uniformly in the bounds with `base_seed`, at least
    /// `ls_initial_sets` of them.
    pub fn from_settings(
        settings: &OptimizerSettings,
        reference: &EstimandVector,
        method: Method,
        repetitions: Option<usize>,
        base_seed: Option<u64>,
        workers: Option<usize>,
    ) -> Result<Self, HarnessError> {
        let bounds = make_bounds(reference, settings.bounds.lo_factor, settings.bounds.hi_factor)?;
        let repetitions = repetitions.unwrap_or(settings.bench.repetitions.get(method));
        let base_seed = base_seed.unwrap_or(settings.bench.base_seed);
        let method_config = match method {
            Method::Ls => MethodConfig::Ls(settings.ls),
            Method::Pso => MethodConfig::Pso(settings.pso),
            Method::Ga => MethodConfig::Ga(settings.ga),
        };
        let inits = match method {
            Method::Ls => sample_uniform(&bounds, settings.bench.ls_initial_sets.max(repetitions), base_seed),
            _ => Vec::new(),
        };
        let plan = ExperimentPlan {
            method: method_config,
            repetitions,
            base_seed,
            workers: workers.unwrap_or(settings.bench.workers),
            bounds,
            inits,
            histogram_bin_mv: settings.bench.histogram_bin_mv.get(method),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.repetitions == 0 {
            return Err(HarnessError::Plan("repetitions must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(HarnessError::Plan("workers must be >= 1".into()));
        }
        if self.base_seed.checked_add(self.repetitions as u64 - 1).is_none() {
            return Err(HarnessError::Plan("base_seed + repetitions overflows".into()));
        }
        if !(self.histogram_bin_mv.is_finite() && self.histogram_bin_mv > 0.0) {
            return Err(HarnessError::BinWidth(self.histogram_bin_mv));
        }
        if self.method.method() == Method::Ls && self.inits.len() < self.repetitions {
            return Err(HarnessError::Plan(format!(
                "{} repetitions need as many initial vectors, got {}",
                self.repetitions,
                self.inits.len()
            )));
        }
        Ok(())
    }
}

/// One repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub wall_time_s: f64,
    pub fitting_rmse_mv: f64,
    pub validation_rmse_mv: f64,
    /// The optimizer's answer, or the starting point of a failed run.
    pub best: EstimandVector,
    pub converged_by: Option<ConvergedBy>,
    /// Why the optimizer refused to run, if it did.
    pub error: Option<String>,
}

/// Mean, sample standard deviation (n - 1), minimum and maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Zero for a single value.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stats {
            mean,
            sd,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// The content of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub repetitions: usize,
    pub failed_runs: usize,
    pub runtime_s: Stats,
    pub fitting_rmse_mv: Stats,
    pub validation_rmse_mv: Stats,
}

impl Summary {
    pub fn from_runs(method: Method, runs: &[RunRecord]) -> Option<Summary> {
        let col = |f: fn(&RunRecord) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        Some(Summary {
            method,
            repetitions: runs.len(),
            failed_runs: runs.iter().filter(|r| r.error.is_some()).count(),
            runtime_s: Stats::of(&col(|r| r.wall_time_s))?,
            fitting_rmse_mv: Stats::of(&col(|r| r.fitting_rmse_mv))?,
            validation_rmse_mv: Stats::of(&col(|r| r.validation_rmse_mv))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower_edge_mv: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_mv: f64,
    /// Contiguous bins from the lowest to the highest occupied one.
    pub bins: Vec<Bin>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Counts each value in bin `floor(v / width)`, whose lower edge is that
/// index times `width`. Bins between the extremes are kept even when empty.
pub fn make_histogram(values: &[f64], bin_width_mv: f64) -> Result<Histogram, HarnessError> {
    if !(bin_width_mv.is_finite() && bin_width_mv > 0.0) {
        return Err(HarnessError::BinWidth(bin_width_mv));
    }
    if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
        return Err(HarnessError::NonFiniteValue(v));
    }
    let index = |v: f64| (v / bin_width_mv).floor() as i64;
    let (Some(lo), Some(hi)) = (
        values.iter().map(|&v| index(v)).min(),
        values.iter().map(|&v| index(v)).max(),
    ) else {
        return Ok(Histogram {
            bin_width_mv,
            bins: Vec::new(),
        });
    };
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for &v in values {
        counts[(index(v) - lo) as usize] += 1;
    }
    Ok(Histogram {
        bin_width_mv,
        bins: counts
            .into_iter()
            .enumerate()
            .map(|(k, count)| Bin {
                lower_edge_mv: (lo + k as i64) as f64 * bin_width_mv,
                count,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub summary: Summary,
    /// Sorted by run index.
    pub runs: Vec<RunRecord>,
    pub hist_fitting: Histogram,
    pub hist_validation: Histogram,
}

fn run_one(plan: &ExperimentPlan, suite: &SuiteObjective, k: usize) -> RunRecord {
    let seed = plan.base_seed + k as u64;
    let init = plan.inits.get(k);
    let start = Instant::now();
    let outcome = run_method(&plan.method, &plan.bounds, &suite.fitting, init, seed);
    let elapsed = start.elapsed().as_secs_f64();
    let (best, wall_time_s, converged_by, error) = match outcome {
        Ok(res) => (res.best, res.wall_time, Some(res.converged_by), None),
        Err(e) => {
            // score the rejected start so the run still shows up in the statistics
            let fallback = init.copied().unwrap_or_else(|| plan.bounds.to_physical(&[0.5; N_ESTIMANDS]));
            (fallback, elapsed, None, Some(e.to_string()))
        }
    };
    let (fitting_rmse_mv, validation_rmse_mv) = rmse_over_suite(&best, suite);
    RunRecord {
        run: k,
        seed,
        wall_time_s,
        fitting_rmse_mv,
        validation_rmse_mv,
        best,
        converged_by,
        error,
    }
}

/// Runs every repetition. A failing run is recorded, never fatal.
pub fn run_experiment(plan: &ExperimentPlan, suite: &SuiteObjective) -> Result<BenchReport, HarnessError> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| HarnessError::Plan(format!("cannot start {} workers: {e}", plan.workers)))?;
    let mut runs: Vec<RunRecord> = pool.install(|| {
        (0..plan.repetitions)
            .into_par_iter()
            .map(|k| run_one(plan, suite, k))
            .collect()
    });
    runs.sort_by_key(|r| r.run);
    build_report(plan.method.method(), runs, plan.histogram_bin_mv)
}

/// Assembles statistics and histograms from finished runs.
pub fn build_report(method: Method, runs: Vec<RunRecord>, bin_width_mv: f64) -> Result<BenchReport, HarnessError> {
    let summary = Summary::from_runs(method, &runs).ok_or_else(|| HarnessError::Plan("no runs".into()))?;
    let fit: Vec<f64> = runs.iter().map(|r| r.fitting_rmse_mv).collect();
    let val: Vec<f64> = runs.iter().map(|r| r.validation_rmse_mv).collect();
    Ok(BenchReport {
        summary,
        hist_fitting: make_histogram(&fit, bin_width_mv)?,
        hist_validation: make_histogram(&val, bin_width_mv)?,
        runs,
    })
}

pub fn runs_csv_header() -> String {
    let mut cols = vec!["run", "seed", "wall_time_s", "fitting_rmse_mv", "validation_rmse_mv"];
    cols.extend(ESTIMAND_NAMES);
    cols.join(",")
}

fn runs_csv(runs: &[RunRecord]) -> String {
    let mut out = runs_csv_header();
    out.push('\n');
    for r in runs {
        let mut fields = vec![
            r.run.to_string(),
            r.seed.to_string(),
            r.wall_time_s.to_string(),
            r.fitting_rmse_mv.to_string(),
            r.validation_rmse_mv.to_string(),
        ];
        fields.extend(r.best.to_array().iter().map(|v| v.to_string()));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("lower_edge_mv,count\n");
    for b in &h.bins {
        out.push_str(&format!("{},{}\n", b.lower_edge_mv, b.count));
    }
    out
}

/// Writes the four report files into `dir`, creating it if needed.
pub fn emit_report(report: &BenchReport, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let summary = serde_json::to_string_pretty(&report.summary).expect("summary serializes");
    for (name, text) in [
        (RUNS_FILE, runs_csv(&report.runs)),
        (SUMMARY_FILE, summary + "\n"),
        (HIST_FITTING_FILE, histogram_csv(&report.hist_fitting)),
        (HIST_VALIDATION_FILE, histogram_csv(&report.hist_validation)),
    ] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::CellConfig;
    use proptest::prelude::*;

    fn record(run: usize, wall: f64, fit: f64, val: f64) -> RunRecord {
        RunRecord {
            run,
            seed: run as u64,
            wall_time_s: wall,
            fitting_rmse_mv: fit,
            validation_rmse_mv: val,
            best: CellConfig::builtin().reference,
            converged_by: Some(ConvergedBy::MaxIter),
            error: None,
        }
    }

    #[test]
    fn histogram_examples() {
        let h = make_histogram(&[5.0, 15.0, 25.0], 10.0).unwrap();
        let got: Vec<(f64, usize)> = h.bins.iter().map(|b| (b.lower_edge_mv, b.count)).collect();
        assert_eq!(got, vec![(0.0, 1), (10.0, 1), (20.0, 1)]);

        let h = make_histogram(&[10.0], 10.0).unwrap();
        assert_eq!(h.bins, vec![Bin { lower_edge_mv: 10.0, count: 1 }]);

        let h = make_histogram(&[1.0, 35.0], 10.0).unwrap();
        assert_eq!(h.bins.len(), 4);
        assert_eq!(h.bins[1].count, 0);

        assert!(make_histogram(&[], 1.0).unwrap().bins.is_empty());
        assert!(matches!(make_histogram(&[1.0], 0.0), Err(HarnessError::BinWidth(_))));
        assert!(matches!(make_histogram(&[f64::NAN], 1.0), Err(HarnessError::NonFiniteValue(_))));
    }

    #[test]
    fn three_run_summary_by_hand() {
        let runs = vec![record(0, 1.0, 10.0, 20.0), record(1, 2.0, 20.0, 30.0), record(2, 6.0, 30.0, 70.0)];
        let s = Summary::from_runs(Method::Pso, &runs).unwrap();
        // runtime: mean 3, deviations (-2, -1, 3), sum sq 14, sd sqrt(7)
        assert_eq!(s.runtime_s.mean, 3.0);
        assert!((s.runtime_s.sd - 7f64.sqrt()).abs() < 1e-15);
        assert_eq!((s.runtime_s.min, s.runtime_s.max), (1.0, 6.0));
        assert_eq!(s.fitting_rmse_mv.mean, 20.0);
        assert_eq!(s.fitting_rmse_mv.sd, 10.0);
        // validation: mean 40, deviations (-20, -10, 30), sum sq 1400, sd sqrt(700)
        assert_eq!(s.validation_rmse_mv.mean, 40.0);
        assert!((s.validation_rmse_mv.sd - 700f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.failed_runs, 0);
    }

    #[test]
    fn single_run_has_zero_sd() {
        let s = Stats::of(&[4.0]).unwrap();
        assert_eq!((s.mean, s.sd, s.min, s.max), (4.0, 0.0, 4.0, 4.0));
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn report_files_round_trip() {
        let runs = vec![record(0, 0.25, 3.5, 7.25), record(1, 0.5, 4.125, 1.0 / 3.0)];
        let report = build_report(Method::Ga, runs, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, dir.path()).unwrap();

        let summary: Summary =
            serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
        assert_eq!(summary, report.summary);

        let csv = fs::read_to_string(dir.path().join(RUNS_FILE)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], runs_csv_header());
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), 16);
        let val: f64 = lines[2].split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(val, 1.0 / 3.0);

        let hist = fs::read_to_string(dir.path().join(HIST_FITTING_FILE)).unwrap();
        assert_eq!(hist, "lower_edge_mv,count\n3,1\n4,1\n");
    }

    #[test]
    fn plan_validation() {
        let settings = OptimizerSettings::builtin();
        let reference = CellConfig::builtin().reference;
        let plan = ExperimentPlan::from_settings(&settings, &reference, Method::Ls, None, None, None).unwrap();
        assert_eq!(plan.repetitions, 100);
        assert_eq!(plan.inits.len(), 100);
        let plan = ExperimentPlan::from_settings(&settings, &reference, Method::Ls, Some(150), None, None).unwrap();
        assert_eq!(plan.inits.len(), 150);
        assert!(ExperimentPlan::from_settings(&settings, &reference, Method::Pso, Some(0), None, None).is_err());
        assert!(ExperimentPlan::from_settings(&settings, &reference, Method::Ga, None, None, Some(0)).is_err());
        let mut plan = ExperimentPlan::from_settings(&settings, &reference, Method::Ls, Some(3), None, None).unwrap();
        plan.inits.truncate(2);
        assert!(plan.validate().is_err());
    }

    fn naive_count(values: &[f64], width: f64, edge: f64) -> usize {
        values
            .iter()
            .filter(|&&v| (v / width).floor() * width == edge)
            .count()
    }

    proptest! {
        #[test]
        fn histogram_conserves_counts(values in prop::collection::vec(0.0f64..500.0, 0..1000), width in 0.5f64..20.0) {
            let h = make_histogram(&values, width).unwrap();
            prop_assert_eq!(h.total(), values.len());
            for b in &h.bins {
                prop_assert_eq!(b.count, naive_count(&values, width, b.lower_edge_mv));
                let k = b.lower_edge_mv / width;
                prop_assert!((k - k.round()).abs() < 1e-9);
            }
        }

        #[test]
        fn histogram_ignores_order(mut values in prop::collection::vec(0.0f64..100.0, 1..200), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let h = make_histogram(&values, 1.0).unwrap();
            values.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(make_histogram(&values, 1.0).unwrap(), h);
        }
    }
}
