//! Voltage residuals of a trial parameter set against recorded data.
//!
//! The objective is total: trials that break a physical invariant or drive
//! the model into an invalid state are scored with a fixed penalty residual
//! on every sample they fail to reproduce, so population methods always get
//! a finite cost.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{CellParameters, EstimandVector};
use crate::protocols::{CurrentProfile, DatasetSuite, Trace};
use crate::spm::{simulate_with, DiscreteSpm, SimOptions};

pub const DEFAULT_PENALTY_VOLTAGE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("dataset {0:?} is empty")]
    EmptyDataset(String),
    #[error("penalty voltage must be finite and > 1 V, got {0}")]
    BadPenalty(f64),
}

/// Result of scoring one trial on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub rmse_mv: f64,
    /// `V_sim - V_data` per sample [V], penalty-filled past a failure.
    pub residuals: Vec<f64>,
    /// Whether every sample was simulated.
    pub valid: bool,
    /// Samples actually simulated before any failure.
    pub n_compared: usize,
}

impl EvalOutcome {
    pub fn from_residuals(residuals: Vec<f64>, valid: bool, n_compared: usize) -> Self {
        EvalOutcome {
            rmse_mv: rmse_mv(&residuals),
            residuals,
            valid,
            n_compared,
        }
    }

    /// Sum of squared residuals [V^2].
    pub fn cost(&self) -> f64 {
        sum_squares(&self.residuals)
    }
}

pub fn sum_squares(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// `1000 sqrt(mean(r^2))`; zero for an empty slice.
pub fn rmse_mv(r: &[f64]) -> f64 {
    if r.is_empty() {
        return 0.0;
    }
    1000.0 * (sum_squares(r) / r.len() as f64).sqrt()
}

/// A dataset plus the fixed part of the model a trial is completed with.
#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    dataset: Trace,
    profile: CurrentProfile,
    base: CellParameters,
    penalty_voltage: f64,
}

impl ObjectiveSpec {
    /// `base` supplies the fixed geometry and OCP curves; its estimands are
    /// ignored.
    pub fn new(dataset: Trace, base: CellParameters, penalty_voltage: f64) -> Result<Self, ObjectiveError> {
        if dataset.is_empty() {
            return Err(ObjectiveError::EmptyDataset(dataset.profile_name));
        }
        if !(penalty_voltage.is_finite() && penalty_voltage > 1.0) {
            return Err(ObjectiveError::BadPenalty(penalty_voltage));
        }
        Ok(ObjectiveSpec {
            profile: dataset.current_profile(),
            dataset,
            base,
            penalty_voltage,
        })
    }

    pub fn dataset(&self) -> &Trace {
        &self.dataset
    }

    pub fn base(&self) -> &CellParameters {
        &self.base
    }

    pub fn penalty_voltage(&self) -> f64 {
        self.penalty_voltage
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    fn penalty_outcome(&self) -> EvalOutcome {
        EvalOutcome::from_residuals(vec![self.penalty_voltage; self.len()], false, 0)
    }
}

/// Replays the dataset's current through the trial model with the voltage
/// cutoffs off and compares voltages sample by sample.
pub fn residuals(trial: &EstimandVector, spec: &ObjectiveSpec) -> EvalOutcome {
    let params = spec.base.with_estimands(*trial);
    if params.validate().is_err() || DiscreteSpm::new(&params, spec.dataset.dt).is_err() {
        return spec.penalty_outcome();
    }
    let sim = match simulate_with(
        &params,
        &spec.profile,
        SimOptions {
            enforce_cutoffs: false,
        },
    ) {
        Ok(trace) => trace,
        Err(_) => return spec.penalty_outcome(),
    };
    let n = spec.len();
    let mut r = Vec::with_capacity(n);
    r.extend(
        sim.rows
            .iter()
            .zip(&spec.dataset.rows)
            .map(|(s, d)| s.voltage - d.voltage),
    );
    let n_compared = r.len();
    r.resize(n, spec.penalty_voltage);
    EvalOutcome::from_residuals(r, n_compared == n, n_compared)
}

/// How validation traces are combined into one RMSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationPooling {
    /// Square root of the sample-weighted mean squared residual.
    #[default]
    Pooled,
    /// Arithmetic mean of the per-trace RMSEs.
    PerTraceMean,
}

/// Objectives for the fitting trace and every validation trace.
#[derive(Debug, Clone)]
pub struct SuiteObjective {
    pub fitting: ObjectiveSpec,
    pub validation: Vec<ObjectiveSpec>,
    pub pooling: ValidationPooling,
}

impl SuiteObjective {
    pub fn new(
        suite: &DatasetSuite,
        base: &CellParameters,
        penalty_voltage: f64,
        pooling: ValidationPooling,
    ) -> Result<Self, ObjectiveError> {
        Ok(SuiteObjective {
            fitting: ObjectiveSpec::new(suite.fitting.clone(), base.clone(), penalty_voltage)?,
            validation: suite
                .validation
                .iter()
                .map(|t| ObjectiveSpec::new(t.clone(), base.clone(), penalty_voltage))
                .collect::<Result<_, _>>()?,
            pooling,
        })
    }
}

/// `(fitting_rmse_mv, validation_rmse_mv)` of a trial.
pub fn rmse_over_suite(trial: &EstimandVector, suite: &SuiteObjective) -> (f64, f64) {
    let fitting = residuals(trial, &suite.fitting).rmse_mv;
    let parts: Vec<(f64, usize)> = suite
        .validation
        .iter()
        .map(|spec| {
            let out = residuals(trial, spec);
            (out.cost(), out.residuals.len())
        })
        .collect();
    (fitting, pool(&parts, suite.pooling))
}

/// Combines per-trace `(sum of squares, sample count)` pairs into one RMSE [mV].
pub fn pool(parts: &[(f64, usize)], pooling: ValidationPooling) -> f64 {
    if parts.is_empty() {
        return 0.0;
    }
    match pooling {
        ValidationPooling::Pooled => {
            let ss: f64 = parts.iter().map(|p| p.0).sum();
            let n: usize = parts.iter().map(|p| p.1).sum();
            if n == 0 {
                0.0
            } else {
                1000.0 * (ss / n as f64).sqrt()
            }
        }
        ValidationPooling::PerTraceMean => {
            parts
                .iter()
                .map(|&(ss, n)| if n == 0 { 0.0 } else { 1000.0 * (ss / n as f64).sqrt() })
                .sum::<f64>()
                / parts.len() as f64
        }
    }
}
