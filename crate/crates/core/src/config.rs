//! Checked-in configuration files: the cell description with its reference
//! estimands, the optimizer settings, and the DST template.
//!
//! A configuration directory holds `cell.json`, `optimizers.json` and
//! `dst_template.json`. Errors name the offending field path.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objective::ValidationPooling;
use crate::ocp::OcpCurve;
use crate::optimizers::{GaConfig, LsConfig, Method, PsoConfig};
use crate::params::{CellParameters, EstimandVector, FixedCellConfig, ParamError};
use crate::protocols::{DstTemplate, ProtocolConfig};

pub const CELL_FILE: &str = "cell.json";
pub const OPTIMIZERS_FILE: &str = "optimizers.json";
pub const DST_FILE: &str = "dst_template.json";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: at `{field}`: {message}", path.display())]
    Parse {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{}: at `{field}`: {message}", path.display())]
    Invalid {
        path: PathBuf,
        field: String,
        message: String,
    },
}

impl ConfigError {
    fn invalid(path: &Path, field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.to_path_buf(),
            field: field.into(),
            message: message.into(),
        }
    }

    fn from_param(path: &Path, err: ParamError, prefix: &str) -> Self {
        match err.within(prefix) {
            ParamError::Invalid { field, reason } => Self::invalid(path, field, reason),
            ParamError::Ocp { field, source } => Self::invalid(path, field, source.to_string()),
        }
    }
}

/// Parses JSON, reporting the path of the first offending field.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_json(&text, path)
}

/// `cell.json`: fixed geometry, reference estimands, OCP curves, and the
/// dataset protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub version: u32,
    #[serde(default)]
    pub description: String,
    pub fixed: FixedCellConfig,
    pub reference: EstimandVector,
    pub ocp_n: OcpCurve,
    pub ocp_p: OcpCurve,
    pub protocol: ProtocolConfig,
}

impl CellConfig {
    /// The bundled synthetic reference cell.
    pub fn builtin() -> Self {
        parse_json(
            include_str!("../../../config/cell.json"),
            Path::new("<builtin>/cell.json"),
        )
        .expect("bundled cell config parses")
    }

    pub fn reference_parameters(&self) -> CellParameters {
        CellParameters::new(
            self.reference,
            self.fixed,
            self.ocp_n.clone(),
            self.ocp_p.clone(),
        )
    }

    pub fn validate(&self, path: &Path) -> Result<(), ConfigError> {
        if self.version != 1 {
            return Err(ConfigError::invalid(path, "version", "only version 1 is supported"));
        }
        self.reference
            .validate()
            .map_err(|e| ConfigError::from_param(path, e, "reference"))?;
        self.fixed
            .validate()
            .map_err(|e| ConfigError::from_param(path, e, "fixed"))?;
        self.ocp_n
            .validate()
            .map_err(|e| ConfigError::invalid(path, "ocp_n", e.to_string()))?;
        self.ocp_p
            .validate()
            .map_err(|e| ConfigError::invalid(path, "ocp_p", e.to_string()))?;
        self.protocol
            .validate()
            .map_err(|e| ConfigError::invalid(path, "protocol", e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub lo_factor: f64,
    pub hi_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// Residual [V] assigned to every sample a trial fails to simulate.
    pub penalty_voltage: f64,
    pub validation_pooling: ValidationPooling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerMethod<T> {
    pub ls: T,
    pub pso: T,
    pub ga: T,
}

impl<T: Copy> PerMethod<T> {
    pub fn get(&self, method: Method) -> T {
        match method {
            Method::Ls => self.ls,
            Method::Pso => self.pso,
            Method::Ga => self.ga,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// Number of uniformly sampled least-squares starting points.
    pub ls_initial_sets: usize,
    pub repetitions: PerMethod<usize>,
    pub histogram_bin_mv: PerMethod<f64>,
    pub base_seed: u64,
    pub workers: usize,
}

/// `optimizers.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    pub bounds: BoundsConfig,
    pub objective: ObjectiveConfig,
    pub ls: LsConfig,
    pub pso: PsoConfig,
    pub ga: GaConfig,
    pub bench: BenchConfig,
}

impl OptimizerSettings {
    pub fn builtin() -> Self {
        parse_json(
            include_str!("../../../config/optimizers.json"),
            Path::new("<builtin>/optimizers.json"),
        )
        .expect("bundled optimizer config parses")
    }

    pub fn validate(&self, path: &Path) -> Result<(), ConfigError> {
        let b = &self.bounds;
        if !(b.lo_factor > 0.0 && b.lo_factor < b.hi_factor && b.hi_factor.is_finite()) {
            return Err(ConfigError::invalid(path, "bounds", "need 0 < lo_factor < hi_factor"));
        }
        let o = &self.objective;
        if !(o.penalty_voltage.is_finite() && o.penalty_voltage > 1.0) {
            return Err(ConfigError::invalid(
                path,
                "objective.penalty_voltage",
                "must be finite and exceed any plausible voltage error (> 1 V)",
            ));
        }
        self.ls
            .validate()
            .map_err(|(f, m)| ConfigError::invalid(path, format!("ls.{f}"), m))?;
        self.pso
            .validate()
            .map_err(|(f, m)| ConfigError::invalid(path, format!("pso.{f}"), m))?;
        self.ga
            .validate()
            .map_err(|(f, m)| ConfigError::invalid(path, format!("ga.{f}"), m))?;
        let bench = &self.bench;
        if bench.ls_initial_sets == 0 {
            return Err(ConfigError::invalid(path, "bench.ls_initial_sets", "must be >= 1"));
        }
        for (name, reps) in [
            ("ls", bench.repetitions.ls),
            ("pso", bench.repetitions.pso),
            ("ga", bench.repetitions.ga),
        ] {
            if reps == 0 {
                return Err(ConfigError::invalid(
                    path,
                    format!("bench.repetitions.{name}"),
                    "must be >= 1",
                ));
            }
        }
        for (name, w) in [
            ("ls", bench.histogram_bin_mv.ls),
            ("pso", bench.histogram_bin_mv.pso),
            ("ga", bench.histogram_bin_mv.ga),
        ] {
            if !(w.is_finite() && w > 0.0) {
                return Err(ConfigError::invalid(
                    path,
                    format!("bench.histogram_bin_mv.{name}"),
                    "must be > 0",
                ));
            }
        }
        if bench.workers == 0 {
            return Err(ConfigError::invalid(path, "bench.workers", "must be >= 1"));
        }
        Ok(())
    }
}

/// A validated configuration directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSet {
    pub cell: CellConfig,
    pub optimizers: OptimizerSettings,
    pub dst: DstTemplate,
}

impl ConfigSet {
    pub fn builtin() -> Self {
        ConfigSet {
            cell: CellConfig::builtin(),
            optimizers: OptimizerSettings::builtin(),
            dst: DstTemplate::builtin(),
        }
    }

    /// Reads and validates all three files in `dir`.
    pub fn load(dir: &Path) -> Result<Self, ConfigError> {
        let cell_path = dir.join(CELL_FILE);
        let cell: CellConfig = read_json(&cell_path)?;
        cell.validate(&cell_path)?;

        let opt_path = dir.join(OPTIMIZERS_FILE);
        let optimizers: OptimizerSettings = read_json(&opt_path)?;
        optimizers.validate(&opt_path)?;

        let dst_path = dir.join(DST_FILE);
        let dst: DstTemplate = read_json(&dst_path)?;
        dst.validate()
            .map_err(|e| ConfigError::invalid(&dst_path, "steps", e.to_string()))?;
        if let Err(e) = dst.sampled_len(cell.protocol.dt_s) {
            return Err(ConfigError::invalid(&dst_path, "steps", e.to_string()));
        }
        Ok(ConfigSet {
            cell,
            optimizers,
            dst,
        })
    }
}
