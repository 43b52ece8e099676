//! Global-best particle swarm with constriction-style coefficients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_batch, rng_from_seed, Bounds, ConvergedBy, Method, Objective, OptError, OptResult, UnitPoint};
use crate::params::N_ESTIMANDS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub max_iterations: usize,
    /// Stop once the swarm best improves by no more than this.
    pub min_func_tolerance: f64,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm_size: 40,
            max_iterations: 100,
            min_func_tolerance: 1e-8,
            inertia: 0.72984,
            cognitive: 1.49618,
            social: 1.49618,
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.swarm_size < 2 {
            return Err(("swarm_size".into(), "must be >= 2".into()));
        }
        if self.max_iterations == 0 {
            return Err(("max_iterations".into(), "must be >= 1".into()));
        }
        for (name, v) in [
            ("min_func_tolerance", self.min_func_tolerance),
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err((name.into(), "must be finite and > 0".into()));
            }
        }
        Ok(())
    }
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v < values[best] { i } else { best })
}

pub fn fit_pso(bounds: &Bounds, objective: &dyn Objective, cfg: &PsoConfig) -> Result<OptResult, OptError> {
    cfg.validate()
        .map_err(|(f, m)| OptError::Config(format!("pso.{f}: {m}")))?;
    let n = cfg.swarm_size;
    let mut rng = rng_from_seed(cfg.seed);

    let mut positions: Vec<UnitPoint> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.gen::<f64>()))
        .collect();
    let mut velocities: Vec<UnitPoint> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..=1.0)))
        .collect();
    let mut costs = evaluate_batch(objective, bounds, &positions);
    let mut evaluations = n;

    let mut personal = positions.clone();
    let mut personal_cost = costs.clone();
    let g = argmin(&personal_cost);
    let mut global = personal[g];
    let mut global_cost = personal_cost[g];
    let mut history = vec![global_cost];
    let mut iterations = 0;
    let mut converged_by = ConvergedBy::MaxIter;

    while iterations < cfg.max_iterations {
        iterations += 1;
        for i in 0..n {
            let (x, v) = (&mut positions[i], &mut velocities[i]);
            for d in 0..N_ESTIMANDS {
                let rp: f64 = rng.gen();
                let rg: f64 = rng.gen();
                let vel = cfg.inertia * v[d]
                    + cfg.cognitive * rp * (personal[i][d] - x[d])
                    + cfg.social * rg * (global[d] - x[d]);
                v[d] = vel.clamp(-1.0, 1.0);
                x[d] = (x[d] + v[d]).clamp(0.0, 1.0);
            }
        }
        costs = evaluate_batch(objective, bounds, &positions);
        evaluations += n;
        for i in 0..n {
            if costs[i] < personal_cost[i] {
                personal[i] = positions[i];
                personal_cost[i] = costs[i];
            }
        }
        let g = argmin(&personal_cost);
        if personal_cost[g] < global_cost {
            let improvement = global_cost - personal_cost[g];
            global = personal[g];
            global_cost = personal_cost[g];
            history.push(global_cost);
            if improvement <= cfg.min_func_tolerance {
                converged_by = ConvergedBy::Tolerance;
                break;
            }
        } else {
            history.push(global_cost);
        }
    }

    let best = bounds.to_physical(&global);
    let best_cost = objective.cost(&best);
    evaluations += 1;
    Ok(OptResult {
        method: Method::Pso,
        best,
        best_cost,
        evaluations,
        iterations,
        wall_time: 0.0,
        seed: cfg.seed,
        converged_by,
        cost_history: history,
    })
}
