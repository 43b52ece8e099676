//! Open-circuit potential curves as functions of surface stoichiometry.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OcpError {
    #[error("analytic curve has no terms")]
    NoTerms,
    #[error("term {index} has a non-finite coefficient")]
    NonFiniteCoefficient { index: usize },
    #[error("table needs at least two samples, got {0}")]
    TooShort(usize),
    #[error("table theta and volts have different lengths ({theta} vs {volts})")]
    LengthMismatch { theta: usize, volts: usize },
    #[error("table theta must be strictly increasing (at index {0})")]
    NotIncreasing(usize),
    #[error("table contains a non-finite value at index {0}")]
    NonFiniteSample(usize),
    #[error("curve is not finite at theta = {0}")]
    NonFiniteValue(f64),
}

/// One additive term of an analytic OCP expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OcpTerm {
    /// `a`
    Constant { a: f64 },
    /// `a * theta`
    Linear { a: f64 },
    /// `a * exp(b * (theta - c))`
    Exp { a: f64, b: f64, c: f64 },
    /// `a * tanh(b * (theta - c))`
    Tanh { a: f64, b: f64, c: f64 },
}

impl OcpTerm {
    #[inline]
    fn eval(&self, theta: f64) -> f64 {
        match *self {
            OcpTerm::Constant { a } => a,
            OcpTerm::Linear { a } => a * theta,
            OcpTerm::Exp { a, b, c } => a * (b * (theta - c)).exp(),
            OcpTerm::Tanh { a, b, c } => a * (b * (theta - c)).tanh(),
        }
    }

    fn coefficients(&self) -> Vec<f64> {
        match *self {
            OcpTerm::Constant { a } | OcpTerm::Linear { a } => vec![a],
            OcpTerm::Exp { a, b, c } | OcpTerm::Tanh { a, b, c } => vec![a, b, c],
        }
    }
}

/// Electrode potential [V] versus stoichiometry `theta` in `[0, 1]`.
///
/// Tables are interpolated linearly and held constant outside their sampled
/// range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OcpCurve {
    Analytic { terms: Vec<OcpTerm> },
    Table { theta: Vec<f64>, volts: Vec<f64> },
}

impl OcpCurve {
    #[inline]
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            OcpCurve::Analytic { terms } => terms.iter().map(|t| t.eval(theta)).sum(),
            OcpCurve::Table { theta: xs, volts } => interpolate(xs, volts, theta),
        }
    }

    pub fn validate(&self) -> Result<(), OcpError> {
        match self {
            OcpCurve::Analytic { terms } => {
                if terms.is_empty() {
                    return Err(OcpError::NoTerms);
                }
                for (index, term) in terms.iter().enumerate() {
                    if term.coefficients().iter().any(|c| !c.is_finite()) {
                        return Err(OcpError::NonFiniteCoefficient { index });
                    }
                }
                // exp terms can overflow even with finite coefficients
                for k in 0..=100 {
                    let theta = k as f64 / 100.0;
                    if !self.eval(theta).is_finite() {
                        return Err(OcpError::NonFiniteValue(theta));
                    }
                }
            }
            OcpCurve::Table { theta, volts } => {
                if theta.len() != volts.len() {
                    return Err(OcpError::LengthMismatch {
                        theta: theta.len(),
                        volts: volts.len(),
                    });
                }
                if theta.len() < 2 {
                    return Err(OcpError::TooShort(theta.len()));
                }
                for (i, (x, v)) in theta.iter().zip(volts).enumerate() {
                    if !x.is_finite() || !v.is_finite() {
                        return Err(OcpError::NonFiniteSample(i));
                    }
                }
                if let Some(i) = theta.windows(2).position(|w| w[1] <= w[0]) {
                    return Err(OcpError::NotIncreasing(i + 1));
                }
            }
        }
        Ok(())
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    // first index with xs[i] > x; guaranteed in 1..=last
    let i = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = (x - x0) / (x1 - x0);
    ys[i - 1] + w * (ys[i] - ys[i - 1])
}
