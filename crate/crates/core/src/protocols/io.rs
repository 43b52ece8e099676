//! Trace files: a CSV body with header `t_s,current_a,voltage_v` and a JSON
//! sidecar carrying the metadata. Numbers are written in the shortest form
//! that parses back to the identical `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetSuite, ProtocolError, Termination, Trace, TraceRow};

pub const TRACE_HEADER: &str = "t_s,current_a,voltage_v";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    profile_name: String,
    dt_s: f64,
    termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c_rate: Option<f64>,
}

/// `foo.csv` -> `foo.json`; any other name gets `.json` appended.
pub fn sidecar_path(path: &Path) -> PathBuf {
    match path.extension() {
        Some(ext) if ext == "csv" => path.with_extension("json"),
        _ => {
            let mut s = path.as_os_str().to_owned();
            s.push(".json");
            PathBuf::from(s)
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ProtocolError + '_ {
    move |source| ProtocolError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_trace(trace: &Trace, path: &Path) -> Result<(), ProtocolError> {
    if trace.rows.is_empty() {
        return Err(ProtocolError::EmptyDataset {
            path: path.to_path_buf(),
        });
    }
    let mut body = String::with_capacity(48 * (trace.rows.len() + 1));
    body.push_str(TRACE_HEADER);
    body.push('\n');
    for r in &trace.rows {
        let _ = writeln!(body, "{},{},{}", r.t, r.current, r.voltage);
    }
    fs::write(path, body).map_err(io_err(path))?;

    let sidecar = Sidecar {
        profile_name: trace.profile_name.clone(),
        dt_s: trace.dt,
        termination: trace.termination,
        c_rate: trace.c_rate,
    };
    let meta_path = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&meta_path, json + "\n").map_err(io_err(&meta_path))
}

pub fn read_trace(path: &Path) -> Result<Trace, ProtocolError> {
    let meta_path = sidecar_path(path);
    let meta_text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: Sidecar = serde_json::from_str(&meta_text).map_err(|e| ProtocolError::Sidecar {
        path: meta_path.clone(),
        message: e.to_string(),
    })?;
    if !(meta.dt_s.is_finite() && meta.dt_s > 0.0) {
        return Err(ProtocolError::Sidecar {
            path: meta_path,
            message: format!("dt_s must be > 0, got {}", meta.dt_s),
        });
    }

    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let format_err = |line: usize, message: String| ProtocolError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == TRACE_HEADER => {}
        Some((_, header)) => {
            return Err(format_err(1, format!("expected header {TRACE_HEADER:?}, found {header:?}")))
        }
        None => return Err(format_err(1, "missing header".into())),
    }

    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = [0.0; 3];
        let mut parts = line.split(',');
        for (k, slot) in fields.iter_mut().enumerate() {
            let raw = parts
                .next()
                .ok_or_else(|| format_err(idx + 1, format!("expected 3 fields, found {k}")))?;
            *slot = raw
                .trim()
                .parse::<f64>()
                .map_err(|e| format_err(idx + 1, format!("{raw:?}: {e}")))?;
            if !slot.is_finite() {
                return Err(format_err(idx + 1, format!("non-finite value {raw:?}")));
            }
        }
        if parts.next().is_some() {
            return Err(format_err(idx + 1, "more than 3 fields".into()));
        }
        rows.push(TraceRow {
            t: fields[0],
            current: fields[1],
            voltage: fields[2],
        });
    }
    if rows.is_empty() {
        return Err(ProtocolError::EmptyDataset {
            path: path.to_path_buf(),
        });
    }
    let t0 = rows[0].t;
    for (k, r) in rows.iter().enumerate() {
        let expected = t0 + k as f64 * meta.dt_s;
        let increasing = k == 0 || r.t > rows[k - 1].t;
        if !increasing || (r.t - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(ProtocolError::NonUniformTime {
                path: path.to_path_buf(),
                row: k,
            });
        }
    }
    Ok(Trace {
        profile_name: meta.profile_name,
        dt: meta.dt_s,
        rows,
        termination: meta.termination,
        c_rate: meta.c_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceRole {
    Fitting,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub role: TraceRole,
    pub profile_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_rate: Option<f64>,
}

/// Index of a suite directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub traces: Vec<ManifestEntry>,
}

fn entry(trace: &Trace, role: TraceRole) -> ManifestEntry {
    ManifestEntry {
        file: format!("{}.csv", trace.profile_name),
        role,
        profile_name: trace.profile_name.clone(),
        c_rate: trace.c_rate,
    }
}

/// Writes every trace of the suite plus `manifest.json` into `dir`.
pub fn write_suite(suite: &DatasetSuite, dir: &Path) -> Result<SuiteManifest, ProtocolError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut traces = vec![entry(&suite.fitting, TraceRole::Fitting)];
    traces.extend(suite.validation.iter().map(|t| entry(t, TraceRole::Validation)));
    let all = std::iter::once(&suite.fitting).chain(&suite.validation);
    for (e, trace) in traces.iter().zip(all) {
        write_trace(trace, &dir.join(&e.file))?;
    }
    let manifest = SuiteManifest { traces };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_suite(dir: &Path) -> Result<DatasetSuite, ProtocolError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: SuiteManifest =
        serde_json::from_str(&text).map_err(|e| ProtocolError::Sidecar {
            path: path.clone(),
            message: e.to_string(),
        })?;
    let n_fitting = manifest
        .traces
        .iter()
        .filter(|e| e.role == TraceRole::Fitting)
        .count();
    if n_fitting != 1 {
        return Err(ProtocolError::Sidecar {
            path,
            message: format!("expected exactly one fitting trace, found {n_fitting}"),
        });
    }
    let mut fitting = None;
    let mut validation = Vec::new();
    for e in &manifest.traces {
        let trace = read_trace(&dir.join(&e.file))?;
        match e.role {
            TraceRole::Fitting => fitting = Some(trace),
            TraceRole::Validation => validation.push(trace),
        }
    }
    Ok(DatasetSuite {
        fitting: fitting.expect("counted above"),
        validation,
    })
}
