//! Current profiles, simulated datasets, and the fitting/validation suite.

mod io;

pub use io::{read_suite, read_trace, sidecar_path, write_suite, write_trace, SuiteManifest, TraceRole};

use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::CellParameters;
use crate::spm::{simulate_profile, ModelError};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("c_rate must be finite and > 0, got {0}")]
    NonPositiveCRate(f64),
    #[error("window must be finite and > 0 hours, got {0}")]
    BadWindow(f64),
    #[error("time step must be finite and > 0, got {0}")]
    BadTimeStep(f64),
    #[error("repetitions must be >= 1")]
    ZeroRepetitions,
    #[error("profile {0:?} has no samples")]
    EmptyProfile(String),
    #[error("DST template: {0}")]
    Template(String),
    #[error("protocol: {0}")]
    Config(String),
    #[error("simulating {profile}: {source}")]
    Model {
        profile: String,
        #[source]
        source: ModelError,
    },
    #[error("profile {profile} ended with {termination} on reference parameters")]
    UnexpectedTermination {
        profile: String,
        termination: Termination,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: line {line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: empty dataset", path.display())]
    EmptyDataset { path: PathBuf },
    #[error("{}: non-uniform timestamps at row {row}", path.display())]
    NonUniformTime { path: PathBuf, row: usize },
    #[error("{}: {message}", path.display())]
    Sidecar { path: PathBuf, message: String },
}

/// A sampled current input; positive current charges the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentProfile {
    pub name: String,
    /// Sampling period [s].
    pub dt: f64,
    /// Current [A] held over each sampling period.
    pub samples: Vec<f64>,
    pub c_rate: Option<f64>,
}

impl CurrentProfile {
    pub fn new(name: impl Into<String>, dt: f64, samples: Vec<f64>) -> Result<Self, ProtocolError> {
        let name = name.into();
        if !dt.is_finite() || dt <= 0.0 {
            return Err(ProtocolError::BadTimeStep(dt));
        }
        if samples.is_empty() {
            return Err(ProtocolError::EmptyProfile(name));
        }
        Ok(CurrentProfile {
            name,
            dt,
            samples,
            c_rate: None,
        })
    }
}

/// Why a simulation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ProfileEnd,
    VMin,
    VMax,
    Invalid,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::ProfileEnd => "profile_end",
            Termination::VMin => "v_min",
            Termination::VMax => "v_max",
            Termination::Invalid => "invalid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    /// Time at the end of the step [s].
    pub t: f64,
    /// Current over the step [A].
    pub current: f64,
    /// Terminal voltage [V].
    pub voltage: f64,
}

/// A time/current/voltage record.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub profile_name: String,
    pub dt: f64,
    pub rows: Vec<TraceRow>,
    pub termination: Termination,
    pub c_rate: Option<f64>,
}

/// Alias used where a trace plays the role of measured data.
pub type Dataset = Trace;

impl Trace {
    /// The recorded current as a replayable profile.
    pub fn current_profile(&self) -> CurrentProfile {
        CurrentProfile {
            name: self.profile_name.clone(),
            dt: self.dt,
            samples: self.rows.iter().map(|r| r.current).collect(),
            c_rate: self.c_rate,
        }
    }

    pub fn voltages(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.voltage)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// One fitting trace and the held-out validation traces.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSuite {
    pub fitting: Trace,
    pub validation: Vec<Trace>,
}

/// Dataset generation settings, stored with the cell configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Sampling period of every generated profile [s].
    pub dt_s: f64,
    pub fitting_c_rate: f64,
    /// Constant-current discharge rates, including the fitting rate.
    pub c_rates: Vec<f64>,
    /// Constant-current windows last `cc_window_factor / c_rate` hours so the
    /// lower cutoff ends them.
    pub cc_window_factor: f64,
    pub dst_repetitions: usize,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !self.dt_s.is_finite() || self.dt_s <= 0.0 {
            return Err(ProtocolError::Config(format!("dt_s must be > 0, got {}", self.dt_s)));
        }
        if let Some(r) = self.c_rates.iter().find(|r| !r.is_finite() || **r <= 0.0) {
            return Err(ProtocolError::Config(format!("c_rates: {r} is not > 0")));
        }
        if !self.c_rates.contains(&self.fitting_c_rate) {
            return Err(ProtocolError::Config(format!(
                "fitting_c_rate {} is not listed in c_rates",
                self.fitting_c_rate
            )));
        }
        if !(self.cc_window_factor.is_finite() && self.cc_window_factor > 0.0) {
            return Err(ProtocolError::Config("cc_window_factor must be > 0".into()));
        }
        if self.dst_repetitions == 0 {
            return Err(ProtocolError::Config("dst_repetitions must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DstStep {
    pub duration_s: f64,
    /// Fraction of the 1C current; negative discharges.
    pub fraction: f64,
}

/// Step template of the dynamic stress test, tiled to build the profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DstTemplate {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub steps: Vec<DstStep>,
}

impl DstTemplate {
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("../../../../config/dst_template.json"))
            .expect("bundled DST template parses")
    }

    pub fn period_s(&self) -> f64 {
        self.steps.iter().map(|s| s.duration_s).sum()
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.steps.is_empty() {
            return Err(ProtocolError::Template("no steps".into()));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if !(s.duration_s.is_finite() && s.duration_s > 0.0) {
                return Err(ProtocolError::Template(format!("steps[{i}].duration_s must be > 0")));
            }
            if !s.fraction.is_finite() {
                return Err(ProtocolError::Template(format!("steps[{i}].fraction is not finite")));
            }
        }
        if self.steps.iter().all(|s| s.fraction == 0.0) {
            return Err(ProtocolError::Template("all fractions are zero".into()));
        }
        Ok(())
    }

    /// Samples per period at `dt`; fails when a step is not a whole number of
    /// periods.
    pub fn sampled_len(&self, dt: f64) -> Result<usize, ProtocolError> {
        Ok(self.sampled(dt)?.len())
    }

    /// One period of normalized current fractions sampled at `dt`, scaled so
    /// the largest magnitude is one.
    fn sampled(&self, dt: f64) -> Result<Vec<f64>, ProtocolError> {
        self.validate()?;
        let peak = self.steps.iter().map(|s| s.fraction.abs()).fold(0.0, f64::max);
        let mut out = Vec::new();
        for (i, s) in self.steps.iter().enumerate() {
            let n = s.duration_s / dt;
            let rounded = n.round();
            if (n - rounded).abs() > 1e-9 * n.max(1.0) || rounded < 1.0 {
                return Err(ProtocolError::Template(format!(
                    "steps[{i}].duration_s = {} is not a multiple of dt = {dt}",
                    s.duration_s
                )));
            }
            out.extend(std::iter::repeat(s.fraction / peak).take(rounded as usize));
        }
        Ok(out)
    }
}

pub fn cc_profile_name(c_rate: f64) -> String {
    format!("cc_{c_rate}C")
}

/// Constant-current discharge at `c_rate` lasting `max_hours`.
pub fn make_cc_discharge(
    c_rate: f64,
    params: &CellParameters,
    max_hours: f64,
    dt: f64,
) -> Result<CurrentProfile, ProtocolError> {
    if !c_rate.is_finite() || c_rate <= 0.0 {
        return Err(ProtocolError::NonPositiveCRate(c_rate));
    }
    if !max_hours.is_finite() || max_hours <= 0.0 {
        return Err(ProtocolError::BadWindow(max_hours));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(ProtocolError::BadTimeStep(dt));
    }
    let n = (max_hours * 3600.0 / dt).round() as usize;
    let current = -params.fixed.c_rate_current(c_rate);
    let mut profile = CurrentProfile::new(cc_profile_name(c_rate), dt, vec![current; n])?;
    profile.c_rate = Some(c_rate);
    Ok(profile)
}

/// Dynamic stress test: the template tiled `repetitions` times, peak
/// magnitude equal to the 1C current.
pub fn make_dst(
    params: &CellParameters,
    repetitions: usize,
    template: &DstTemplate,
    dt: f64,
) -> Result<CurrentProfile, ProtocolError> {
    if repetitions == 0 {
        return Err(ProtocolError::ZeroRepetitions);
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(ProtocolError::BadTimeStep(dt));
    }
    let one_c = params.fixed.c_rate_current(1.0);
    let period = template.sampled(dt)?;
    let samples = period
        .iter()
        .cycle()
        .take(period.len() * repetitions)
        .map(|f| f * one_c)
        .collect();
    CurrentProfile::new(template.name.clone(), dt, samples)
}

/// Simulates every profile on `params`. The fitting trace is the
/// `fitting_c_rate` discharge; validation holds the other rates in listed
/// order followed by the DST.
pub fn build_suite(
    params: &CellParameters,
    protocol: &ProtocolConfig,
    template: &DstTemplate,
) -> Result<DatasetSuite, ProtocolError> {
    protocol.validate()?;
    let mut profiles = Vec::with_capacity(protocol.c_rates.len() + 1);
    for &rate in &protocol.c_rates {
        profiles.push(make_cc_discharge(
            rate,
            params,
            protocol.cc_window_factor / rate,
            protocol.dt_s,
        )?);
    }
    profiles.push(make_dst(params, protocol.dst_repetitions, template, protocol.dt_s)?);

    let traces = profiles
        .par_iter()
        .map(|profile| {
            let trace = simulate_profile(params, profile).map_err(|source| ProtocolError::Model {
                profile: profile.name.clone(),
                source,
            })?;
            match trace.termination {
                Termination::VMin | Termination::ProfileEnd if !trace.is_empty() => Ok(trace),
                termination => Err(ProtocolError::UnexpectedTermination {
                    profile: profile.name.clone(),
                    termination,
                }),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut fitting = None;
    let mut validation = Vec::with_capacity(traces.len() - 1);
    for trace in traces {
        if fitting.is_none() && trace.c_rate == Some(protocol.fitting_c_rate) {
            fitting = Some(trace);
        } else {
            validation.push(trace);
        }
    }
    Ok(DatasetSuite {
        fitting: fitting.expect("fitting rate checked by validate"),
        validation,
    })
}
