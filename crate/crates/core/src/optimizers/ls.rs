//! Bounded nonlinear least squares: damped Gauss-Newton (Levenberg-Marquardt
//! with Marquardt diagonal scaling) in the unit box. Steps that leave the box
//! are cut at the first face or reflected back across the faces; variables
//! resting on a face with an outward step are held fixed for the iteration.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Bounds, ConvergedBy, Method, Objective, OptError, OptResult, UnitPoint};
use crate::objective::sum_squares;
use crate::params::{EstimandVector, ESTIMAND_NAMES, N_ESTIMANDS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsConfig {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub cost_tolerance: f64,
    /// Stop when a step is shorter than this, relative to the point norm.
    pub step_tolerance: f64,
    /// Stop when the largest gradient component falls below this.
    pub gradient_tolerance: f64,
    /// Forward-difference step relative to the physical parameter value.
    pub fd_rel_step: f64,
}

impl Default for LsConfig {
    fn default() -> Self {
        LsConfig {
            max_iterations: 200,
            cost_tolerance: 1e-8,
            step_tolerance: 1e-8,
            gradient_tolerance: 1e-8,
            fd_rel_step: 1e-6,
        }
    }
}

impl LsConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.max_iterations == 0 {
            return Err(("max_iterations".into(), "must be >= 1".into()));
        }
        for (name, v) in [
            ("cost_tolerance", self.cost_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("gradient_tolerance", self.gradient_tolerance),
            ("fd_rel_step", self.fd_rel_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err((name.into(), "must be finite and > 0".into()));
            }
        }
        Ok(())
    }
}

const MAX_REJECTIONS: usize = 40;

/// Folds a coordinate back into `[0, 1]` by mirroring at the faces.
fn reflect(mut v: f64) -> f64 {
    for _ in 0..8 {
        if v < 0.0 {
            v = -v;
        } else if v > 1.0 {
            v = 2.0 - v;
        } else {
            break;
        }
    }
    v.clamp(0.0, 1.0)
}

/// Predicted cost reduction `-(2 d'g + d'Ad)` of the linearized model.
fn predicted_reduction(d: &DVector<f64>, a: &DMatrix<f64>, g: &DVector<f64>) -> f64 {
    -(2.0 * d.dot(g) + d.dot(&(a * d)))
}

/// Applies `delta` from `x`. A step that leaves the box is either cut at the
/// first face it meets or mirrored back across the faces, whichever the
/// linear model favours. The flag is set when the box altered the step.
fn bounded_step(
    x: &UnitPoint,
    delta: &UnitPoint,
    a: &DMatrix<f64>,
    g: &DVector<f64>,
) -> (UnitPoint, bool) {
    let mut t_hit = 1.0_f64;
    for j in 0..N_ESTIMANDS {
        let t = if delta[j] > 0.0 {
            (1.0 - x[j]) / delta[j]
        } else if delta[j] < 0.0 {
            -x[j] / delta[j]
        } else {
            continue;
        };
        t_hit = t_hit.min(t);
    }
    if t_hit >= 1.0 {
        return (std::array::from_fn(|j| x[j] + delta[j]), false);
    }
    let cut: UnitPoint = std::array::from_fn(|j| (x[j] + t_hit * delta[j]).clamp(0.0, 1.0));
    let mirrored: UnitPoint = std::array::from_fn(|j| reflect(x[j] + delta[j]));
    let gain = |y: &UnitPoint| {
        let d = DVector::from_fn(N_ESTIMANDS, |j, _| y[j] - x[j]);
        predicted_reduction(&d, a, g)
    };
    if gain(&mirrored) > gain(&cut) {
        (mirrored, true)
    } else {
        (cut, true)
    }
}

/// Forward-difference Jacobian of the residuals with respect to the unit
/// coordinates, `m x 11`. Each column uses a step of `rel_step` times the
/// physical parameter value, taken backwards at the upper face.
pub fn forward_jacobian(
    objective: &dyn Objective,
    bounds: &Bounds,
    x: &UnitPoint,
    r0: &[f64],
    rel_step: f64,
) -> DMatrix<f64> {
    let phys = bounds.to_physical(x).to_array();
    let columns: Vec<Vec<f64>> = (0..N_ESTIMANDS)
        .into_par_iter()
        .map(|j| {
            let mut h = rel_step * phys[j].abs() / bounds.width(j);
            if x[j] + h > 1.0 {
                h = -h;
            }
            let mut xp = *x;
            xp[j] += h;
            let r = objective.evaluate(&bounds.to_physical(&xp)).residuals;
            r.iter().zip(r0).map(|(a, b)| (a - b) / h).collect()
        })
        .collect();
    DMatrix::from_fn(r0.len(), N_ESTIMANDS, |i, j| columns[j][i])
}

/// Minimizes the sum of squared residuals from `init`.
pub fn fit_ls(
    init: &EstimandVector,
    bounds: &Bounds,
    objective: &dyn Objective,
    cfg: &LsConfig,
) -> Result<OptResult, OptError> {
    cfg.validate()
        .map_err(|(f, m)| OptError::Config(format!("ls.{f}: {m}")))?;
    let mut x = bounds.to_unit(init);
    if let Some(j) = x.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(OptError::InitOutsideBounds(ESTIMAND_NAMES[j]));
    }
    let first = objective.evaluate(init);
    if first.n_compared == 0 {
        return Err(OptError::PenalizedInit);
    }
    let mut r = first.residuals;
    let mut cost = sum_squares(&r);
    let mut evaluations = 1;
    let mut history = vec![cost];
    let mut iterations = 0;
    let mut converged_by = ConvergedBy::MaxIter;
    let mut lambda: Option<f64> = None;
    let mut nu = 2.0;

    'outer: while iterations < cfg.max_iterations {
        iterations += 1;
        let jac = forward_jacobian(objective, bounds, &x, &r, cfg.fd_rel_step);
        evaluations += N_ESTIMANDS;
        let rv = DVector::from_column_slice(&r);
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * rv;
        if g.amax() <= cfg.gradient_tolerance {
            converged_by = ConvergedBy::Tolerance;
            break;
        }
        let max_diag = a.diagonal().max();
        let scale = DVector::from_fn(N_ESTIMANDS, |j, _| a[(j, j)].max(1e-12 * max_diag).max(f64::MIN_POSITIVE));
        let lam = lambda.get_or_insert(1e-3);

        // variables pinned at a face by an outward-pointing descent direction
        let outward = |j: usize, dir: f64| (x[j] <= 0.0 && dir < 0.0) || (x[j] >= 1.0 && dir > 0.0);
        let pinned: Vec<bool> = (0..N_ESTIMANDS).map(|j| outward(j, -g[j])).collect();
        if pinned.iter().all(|&p| p) {
            converged_by = ConvergedBy::Tolerance;
            break;
        }

        for _ in 0..MAX_REJECTIONS {
            let mut pinned = pinned.clone();
            let delta = loop {
                let free: Vec<usize> = (0..N_ESTIMANDS).filter(|&j| !pinned[j]).collect();
                let mut damped = a.select_rows(&free).select_columns(&free);
                for (k, &j) in free.iter().enumerate() {
                    damped[(k, k)] += *lam * scale[j];
                }
                let Some(chol) = damped.cholesky() else {
                    break None;
                };
                let step_free = chol.solve(&(-g.select_rows(&free)));
                let mut delta = [0.0; N_ESTIMANDS];
                for (k, &j) in free.iter().enumerate() {
                    delta[j] = step_free[k];
                }
                // the damped step may still push a face variable outward
                let blocked: Vec<usize> = free.iter().copied().filter(|&j| outward(j, delta[j])).collect();
                if blocked.is_empty() || blocked.len() == free.len() {
                    break Some(delta);
                }
                for j in blocked {
                    pinned[j] = true;
                }
            };
            let Some(delta) = delta else {
                *lam *= nu;
                nu *= 2.0;
                continue;
            };
            let (y, bounded) = bounded_step(&x, &delta, &a, &g);
            let d = DVector::from_fn(N_ESTIMANDS, |j, _| y[j] - x[j]);
            if d.norm() == 0.0 {
                converged_by = ConvergedBy::Tolerance;
                break 'outer;
            }

            let trial = objective.evaluate(&bounds.to_physical(&y));
            evaluations += 1;
            let new_cost = trial.cost();
            if new_cost < cost {
                let predicted = predicted_reduction(&d, &a, &g);
                let rho = if predicted > 0.0 { (cost - new_cost) / predicted } else { 0.0 };
                *lam *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                let reduction = cost - new_cost;
                let previous = cost;
                let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                x = y;
                r = trial.residuals;
                cost = new_cost;
                history.push(cost);
                // tolerance tests only trust interior steps the model predicted well
                if !bounded && rho > 0.25 {
                    if reduction <= cfg.cost_tolerance * previous {
                        converged_by = ConvergedBy::Tolerance;
                        break 'outer;
                    }
                    if d.norm() <= cfg.step_tolerance * (x_norm + cfg.step_tolerance) {
                        converged_by = ConvergedBy::Tolerance;
                        break 'outer;
                    }
                }
                continue 'outer;
            }
            *lam *= nu;
            nu *= 2.0;
        }
        // no acceptable step at any damping
        converged_by = ConvergedBy::Tolerance;
        break;
    }

    let best = bounds.to_physical(&x);
    let best_cost = objective.cost(&best);
    evaluations += 1;
    Ok(OptResult {
        method: Method::Ls,
        best,
        best_cost,
        evaluations,
        iterations,
        wall_time: 0.0,
        seed: 0,
        converged_by,
        cost_history: history,
    })
}
