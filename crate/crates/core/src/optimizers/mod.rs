//! Bounded optimizers over the estimand box.
//!
//! Every method searches normalized coordinates `x in [0, 1]^11`, mapped
//! affinely onto the bounds. The estimands span many orders of magnitude
//! (diffusivities near 1e-14, concentrations near 1e4), so a common unit box
//! keeps step sizes and velocities comparable across dimensions.

mod ga;
mod ls;
mod pso;

pub use ga::{fit_ga, fit_ga_with_population, Crossover, GaConfig, Mutation};
pub use ls::{forward_jacobian, fit_ls, LsConfig};
pub use pso::{fit_pso, PsoConfig};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objective::{residuals, EvalOutcome, ObjectiveSpec};
use crate::params::{EstimandVector, ESTIMAND_NAMES, N_ESTIMANDS};

/// A point in the unit box.
pub type UnitPoint = [f64; N_ESTIMANDS];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptError {
    #[error("bound factors must satisfy 0 < lo < hi, got ({lo}, {hi})")]
    BadFactors { lo: f64, hi: f64 },
    #[error("reference component {0} must be finite and > 0")]
    NonPositiveReference(&'static str),
    #[error("initial {0} lies outside the open bound box")]
    InitOutsideBounds(&'static str),
    #[error("objective is fully penalized at the initial point")]
    PenalizedInit,
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Anything that scores an estimand vector with a residual vector.
pub trait Objective: Sync {
    fn evaluate(&self, trial: &EstimandVector) -> EvalOutcome;

    fn cost(&self, trial: &EstimandVector) -> f64 {
        self.evaluate(trial).cost()
    }
}

impl Objective for ObjectiveSpec {
    fn evaluate(&self, trial: &EstimandVector) -> EvalOutcome {
        residuals(trial, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ls,
    Pso,
    Ga,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::Pso => "pso",
            Method::Ga => "ga",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ls" => Ok(Method::Ls),
            "pso" => Ok(Method::Pso),
            "ga" => Ok(Method::Ga),
            other => Err(format!("unknown method {other:?} (expected ls, pso or ga)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergedBy {
    MaxIter,
    Tolerance,
}

/// Outcome of one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub method: Method,
    pub best: EstimandVector,
    /// Sum of squared residuals at `best` [V^2], freshly evaluated.
    pub best_cost: f64,
    pub evaluations: usize,
    pub iterations: usize,
    /// Wall-clock seconds; filled in by the caller that times the run.
    pub wall_time: f64,
    pub seed: u64,
    pub converged_by: ConvergedBy,
    /// Best (or accepted) cost after initialization and after each iteration.
    pub cost_history: Vec<f64>,
}

/// Box constraints in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: EstimandVector,
    pub upper: EstimandVector,
}

/// `[lo_factor * reference, hi_factor * reference]` componentwise.
pub fn make_bounds(reference: &EstimandVector, lo_factor: f64, hi_factor: f64) -> Result<Bounds, OptError> {
    if !(lo_factor > 0.0 && lo_factor < hi_factor && hi_factor.is_finite()) {
        return Err(OptError::BadFactors {
            lo: lo_factor,
            hi: hi_factor,
        });
    }
    for (name, v) in ESTIMAND_NAMES.iter().zip(reference.to_array()) {
        if !(v.is_finite() && v > 0.0) {
            return Err(OptError::NonPositiveReference(name));
        }
    }
    Ok(Bounds {
        lower: reference.map(|v| v * lo_factor),
        upper: reference.map(|v| v * hi_factor),
    })
}

impl Bounds {
    /// Clamped so that rounding at a face cannot leave the box.
    pub fn to_physical(&self, x: &UnitPoint) -> EstimandVector {
        let (lo, hi) = (self.lower.to_array(), self.upper.to_array());
        EstimandVector::from_array(std::array::from_fn(|j| {
            (lo[j] + x[j] * (hi[j] - lo[j])).clamp(lo[j], hi[j])
        }))
    }

    pub fn to_unit(&self, e: &EstimandVector) -> UnitPoint {
        let (lo, hi, v) = (self.lower.to_array(), self.upper.to_array(), e.to_array());
        std::array::from_fn(|j| (v[j] - lo[j]) / (hi[j] - lo[j]))
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper.to_array()[j] - self.lower.to_array()[j]
    }

    /// Closed-box membership.
    pub fn contains(&self, e: &EstimandVector) -> bool {
        let (lo, hi) = (self.lower.to_array(), self.upper.to_array());
        e.to_array()
            .iter()
            .enumerate()
            .all(|(j, &v)| v >= lo[j] && v <= hi[j])
    }
}

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` independent uniform draws inside the box.
pub fn sample_uniform(bounds: &Bounds, n: usize, seed: u64) -> Vec<EstimandVector> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| {
            let u: UnitPoint = std::array::from_fn(|_| rng.gen::<f64>());
            bounds.to_physical(&u)
        })
        .collect()
}

/// Settings for one optimizer run of any method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodConfig {
    Ls(LsConfig),
    Pso(PsoConfig),
    Ga(GaConfig),
}

impl MethodConfig {
    pub fn method(&self) -> Method {
        match self {
            MethodConfig::Ls(_) => Method::Ls,
            MethodConfig::Pso(_) => Method::Pso,
            MethodConfig::Ga(_) => Method::Ga,
        }
    }
}

/// Runs one method. Least squares needs `init`; the population methods
/// ignore it. `seed` overrides any seed in the configuration.
pub fn run_method(
    config: &MethodConfig,
    bounds: &Bounds,
    objective: &dyn Objective,
    init: Option<&EstimandVector>,
    seed: u64,
) -> Result<OptResult, OptError> {
    let start = std::time::Instant::now();
    let mut result = match config {
        MethodConfig::Ls(cfg) => {
            let init = init.ok_or_else(|| OptError::Config("least squares needs an initial point".into()))?;
            let mut r = fit_ls(init, bounds, objective, cfg)?;
            r.seed = seed;
            r
        }
        MethodConfig::Pso(cfg) => fit_pso(bounds, objective, &PsoConfig { seed, ..*cfg })?,
        MethodConfig::Ga(cfg) => fit_ga(bounds, objective, &GaConfig { seed, ..*cfg })?,
    };
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Evaluates a batch of unit points, in parallel, preserving order.
pub(crate) fn evaluate_batch(objective: &dyn Objective, bounds: &Bounds, points: &[UnitPoint]) -> Vec<f64> {
    use rayon::prelude::*;
    points
        .par_iter()
        .map(|x| objective.cost(&bounds.to_physical(x)))
        .collect()
}

#[cfg(test)]
pub(crate) mod test_problems {
    use super::*;

    /// Residuals `x_unit - target` in the unit box of `bounds`.
    pub struct Quadratic {
        pub bounds: Bounds,
        pub target: UnitPoint,
    }

    impl Objective for Quadratic {
        fn evaluate(&self, trial: &EstimandVector) -> EvalOutcome {
            let x = self.bounds.to_unit(trial);
            let r: Vec<f64> = x.iter().zip(&self.target).map(|(a, b)| a - b).collect();
            let n = r.len();
            EvalOutcome::from_residuals(r, true, n)
        }
    }

    pub fn reference() -> EstimandVector {
        crate::config::CellConfig::builtin().reference
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_from_factors() {
        let mut r = test_problems::reference();
        r.c_n0 = 100.0;
        let b = make_bounds(&r, 0.5, 1.5).unwrap();
        assert_eq!((b.lower.c_n0, b.upper.c_n0), (50.0, 150.0));
        assert!(b.contains(&r));
        let u = b.to_unit(&r);
        assert!(u.iter().all(|&x| (x - 0.5).abs() < 1e-12));
        assert!(make_bounds(&r, 1.0, 1.0).is_err());
        assert!(make_bounds(&r, 0.0, 1.5).is_err());
        r.d_n = 0.0;
        assert_eq!(make_bounds(&r, 0.5, 1.5), Err(OptError::NonPositiveReference("d_n")));
    }

    #[test]
    fn sampling_is_deterministic_and_inside() {
        let b = make_bounds(&test_problems::reference(), 0.5, 1.5).unwrap();
        let a = sample_uniform(&b, 100, 7);
        assert_eq!(a.len(), 100);
        assert!(a.iter().all(|e| b.contains(e)));
        assert_eq!(a, sample_uniform(&b, 100, 7));
        assert_ne!(a, sample_uniform(&b, 100, 8));
    }

    #[test]
    fn sample_mean_near_midpoint() {
        let r = test_problems::reference();
        let b = make_bounds(&r, 0.5, 1.5).unwrap();
        let draws = sample_uniform(&b, 100_000, 3);
        let mean = draws.iter().map(|e| e.r0).sum::<f64>() / draws.len() as f64;
        assert!((mean - r.r0).abs() < 0.01 * r.r0, "{mean}");
    }

    #[test]
    fn method_names() {
        for m in [Method::Ls, Method::Pso, Method::Ga] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("cmaes".parse::<Method>().is_err());
    }
}
