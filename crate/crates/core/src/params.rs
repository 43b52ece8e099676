//! Parameter sets: the eleven identifiable estimands plus the grouped-out
//! geometry that stays fixed during identification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::ocp::{OcpCurve, OcpError};

/// Number of identifiable parameters.
pub const N_ESTIMANDS: usize = 11;

/// Estimand names in canonical order. Used as CSV column names and JSON keys.
pub const ESTIMAND_NAMES: [&str; N_ESTIMANDS] = [
    "c_n0", "c_p0", "r_eff_n", "r_eff_p", "eps_n", "eps_p", "d_n", "d_p", "r0", "c_max_n",
    "c_max_p",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("{field}: {source}")]
    Ocp {
        field: String,
        #[source]
        source: OcpError,
    },
}

impl ParamError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ParamError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Prefixes the field path, e.g. `eps_n` becomes `reference.eps_n`.
    pub fn within(self, prefix: &str) -> Self {
        match self {
            ParamError::Invalid { field, reason } => ParamError::Invalid {
                field: format!("{prefix}.{field}"),
                reason,
            },
            ParamError::Ocp { field, source } => ParamError::Ocp {
                field: format!("{prefix}.{field}"),
                source,
            },
        }
    }
}

/// The eleven grouped parameters that are estimated from current/voltage data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimandVector {
    /// Initial concentration in the negative electrode [mol/m^3].
    pub c_n0: f64,
    /// Initial concentration in the positive electrode [mol/m^3].
    pub c_p0: f64,
    /// Negative electrode reaction-rate coefficient [A m^2.5 / mol^1.5].
    pub r_eff_n: f64,
    /// Positive electrode reaction-rate coefficient [A m^2.5 / mol^1.5].
    pub r_eff_p: f64,
    /// Negative electrode active material volume fraction.
    pub eps_n: f64,
    /// Positive electrode active material volume fraction.
    pub eps_p: f64,
    /// Negative electrode solid diffusivity [m^2/s].
    pub d_n: f64,
    /// Positive electrode solid diffusivity [m^2/s].
    pub d_p: f64,
    /// Ohmic resistance [Ohm].
    pub r0: f64,
    /// Maximum concentration in the negative electrode [mol/m^3].
    pub c_max_n: f64,
    /// Maximum concentration in the positive electrode [mol/m^3].
    pub c_max_p: f64,
}

impl EstimandVector {
    pub fn to_array(&self) -> [f64; N_ESTIMANDS] {
        [
            self.c_n0,
            self.c_p0,
            self.r_eff_n,
            self.r_eff_p,
            self.eps_n,
            self.eps_p,
            self.d_n,
            self.d_p,
            self.r0,
            self.c_max_n,
            self.c_max_p,
        ]
    }

    pub fn from_array(v: [f64; N_ESTIMANDS]) -> Self {
        EstimandVector {
            c_n0: v[0],
            c_p0: v[1],
            r_eff_n: v[2],
            r_eff_p: v[3],
            eps_n: v[4],
            eps_p: v[5],
            d_n: v[6],
            d_p: v[7],
            r0: v[8],
            c_max_n: v[9],
            c_max_p: v[10],
        }
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        let arr: [f64; N_ESTIMANDS] = v.try_into().ok()?;
        Some(Self::from_array(arr))
    }

    /// Componentwise map, handy for scaling a reference vector.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self::from_array(self.to_array().map(&mut f))
    }

    /// Checks the hard physical invariants: every component finite and
    /// positive, volume fractions below one, initial concentrations below
    /// their maxima.
    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, value) in ESTIMAND_NAMES.iter().zip(self.to_array()) {
            if !value.is_finite() || value <= 0.0 {
                return Err(ParamError::invalid(
                    *name,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        if self.eps_n >= 1.0 {
            return Err(ParamError::invalid("eps_n", "must be < 1"));
        }
        if self.eps_p >= 1.0 {
            return Err(ParamError::invalid("eps_p", "must be < 1"));
        }
        if self.c_n0 >= self.c_max_n {
            return Err(ParamError::invalid("c_n0", "must be < c_max_n"));
        }
        if self.c_p0 >= self.c_max_p {
            return Err(ParamError::invalid("c_p0", "must be < c_max_p"));
        }
        Ok(())
    }
}

/// Quantities held fixed during identification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedCellConfig {
    /// Negative particle radius [m].
    pub r_s_n: f64,
    /// Positive particle radius [m].
    pub r_s_p: f64,
    /// Negative electrode sheet area [m^2].
    pub a_n: f64,
    /// Positive electrode sheet area [m^2].
    pub a_p: f64,
    /// Negative electrode thickness [m].
    pub l_n: f64,
    /// Positive electrode thickness [m].
    pub l_p: f64,
    /// Electrolyte concentration [mol/m^3].
    pub c_e: f64,
    /// Cell temperature [K].
    pub temperature: f64,
    /// Nominal capacity [Ah], defines the C-rate.
    pub nominal_capacity: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl FixedCellConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        let positives = [
            ("r_s_n", self.r_s_n),
            ("r_s_p", self.r_s_p),
            ("a_n", self.a_n),
            ("a_p", self.a_p),
            ("l_n", self.l_n),
            ("l_p", self.l_p),
            ("c_e", self.c_e),
            ("temperature", self.temperature),
            ("nominal_capacity", self.nominal_capacity),
        ];
        for (name, value) in positives {
            if !value.is_finite() || value <= 0.0 {
                return Err(ParamError::invalid(
                    name,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        if !self.v_min.is_finite() || !self.v_max.is_finite() || self.v_min >= self.v_max {
            return Err(ParamError::invalid("v_min", "must be finite and < v_max"));
        }
        Ok(())
    }

    /// Current magnitude [A] corresponding to a C-rate.
    pub fn c_rate_current(&self, c_rate: f64) -> f64 {
        c_rate * self.nominal_capacity
    }
}

/// Everything needed to simulate the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParameters {
    pub estimands: EstimandVector,
    pub fixed: FixedCellConfig,
    pub ocp_n: OcpCurve,
    pub ocp_p: OcpCurve,
    pub constants: PhysicalConstants,
}

impl CellParameters {
    pub fn new(
        estimands: EstimandVector,
        fixed: FixedCellConfig,
        ocp_n: OcpCurve,
        ocp_p: OcpCurve,
    ) -> Self {
        CellParameters {
            estimands,
            fixed,
            ocp_n,
            ocp_p,
            constants: PhysicalConstants::SI,
        }
    }

    /// Same fixed configuration, different estimands.
    pub fn with_estimands(&self, estimands: EstimandVector) -> Self {
        CellParameters {
            estimands,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.estimands.validate()?;
        self.fixed.validate()?;
        self.ocp_n.validate().map_err(|source| ParamError::Ocp {
            field: "ocp_n".into(),
            source,
        })?;
        self.ocp_p.validate().map_err(|source| ParamError::Ocp {
            field: "ocp_p".into(),
            source,
        })?;
        Ok(())
    }
}
