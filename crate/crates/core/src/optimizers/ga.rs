//! Real-coded genetic algorithm on normalized genes: rank selection of a few
//! parents, single-point crossover, uniform-reset mutation, and elitist
//! carry-over.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_batch, rng_from_seed, Bounds, ConvergedBy, Method, Objective, OptError, OptResult, UnitPoint};
use crate::params::{EstimandVector, N_ESTIMANDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossover {
    SinglePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    UniformReset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaConfig {
    pub generations: usize,
    pub parents_mating: usize,
    pub population: usize,
    pub genes: usize,
    pub crossover: Crossover,
    pub mutation: Mutation,
    /// Per-gene probability of a uniform reset.
    pub mutation_rate: f64,
    /// Best individuals copied unchanged into the next generation.
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            generations: 300,
            parents_mating: 4,
            population: 50,
            genes: N_ESTIMANDS,
            crossover: Crossover::SinglePoint,
            mutation: Mutation::UniformReset,
            mutation_rate: 0.1,
            elitism: 1,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.genes != N_ESTIMANDS {
            return Err(("genes".into(), format!("must be {N_ESTIMANDS}")));
        }
        if self.population < 2 {
            return Err(("population".into(), "must be >= 2".into()));
        }
        if self.parents_mating == 0 || self.parents_mating > self.population {
            return Err(("parents_mating".into(), "must be in 1..=population".into()));
        }
        if self.elitism >= self.population {
            return Err(("elitism".into(), "must be < population".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(("mutation_rate".into(), "must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Draws `k` distinct indices from `order` (best first) with probability
/// proportional to `len - rank`.
fn rank_select(order: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = order.len();
    let mut weights: Vec<f64> = (0..n).map(|rank| (n - rank) as f64).collect();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = n - 1;
        for (rank, &w) in weights.iter().enumerate() {
            if w > 0.0 && u < w {
                chosen = rank;
                break;
            }
            u -= w;
        }
        // guard against rounding landing on an already-picked slot
        while weights[chosen] == 0.0 {
            chosen = (chosen + n - 1) % n;
        }
        weights[chosen] = 0.0;
        picked.push(order[chosen]);
    }
    picked
}

fn sorted_order(costs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
    order
}

pub fn fit_ga(bounds: &Bounds, objective: &dyn Objective, cfg: &GaConfig) -> Result<OptResult, OptError> {
    let mut rng = rng_from_seed(cfg.seed);
    let population: Vec<UnitPoint> = (0..cfg.population)
        .map(|_| std::array::from_fn(|_| rng.gen::<f64>()))
        .collect();
    evolve(bounds, objective, cfg, population, rng)
}

/// Runs the GA from a given initial population (physical units, clamped into
/// the box).
pub fn fit_ga_with_population(
    bounds: &Bounds,
    objective: &dyn Objective,
    cfg: &GaConfig,
    initial: &[EstimandVector],
) -> Result<OptResult, OptError> {
    if initial.len() != cfg.population {
        return Err(OptError::Config(format!(
            "initial population has {} members, expected {}",
            initial.len(),
            cfg.population
        )));
    }
    let population = initial
        .iter()
        .map(|e| bounds.to_unit(e).map(|v| v.clamp(0.0, 1.0)))
        .collect();
    evolve(bounds, objective, cfg, population, rng_from_seed(cfg.seed))
}

fn evolve(
    bounds: &Bounds,
    objective: &dyn Objective,
    cfg: &GaConfig,
    mut population: Vec<UnitPoint>,
    mut rng: ChaCha8Rng,
) -> Result<OptResult, OptError> {
    cfg.validate()
        .map_err(|(f, m)| OptError::Config(format!("ga.{f}: {m}")))?;
    let mut costs = evaluate_batch(objective, bounds, &population);
    let mut evaluations = population.len();
    let mut history = vec![costs.iter().copied().fold(f64::INFINITY, f64::min)];

    for _ in 0..cfg.generations {
        let order = sorted_order(&costs);
        let parents = rank_select(&order, cfg.parents_mating, &mut rng);
        let n_offspring = cfg.population - cfg.elitism;
        let mut offspring: Vec<UnitPoint> = Vec::with_capacity(n_offspring);
        for k in 0..n_offspring {
            let a = &population[parents[k % parents.len()]];
            let b = &population[parents[(k + 1) % parents.len()]];
            let cut = rng.gen_range(1..N_ESTIMANDS);
            let mut child: UnitPoint = std::array::from_fn(|j| if j < cut { a[j] } else { b[j] });
            for gene in child.iter_mut() {
                if rng.gen::<f64>() < cfg.mutation_rate {
                    *gene = rng.gen::<f64>();
                }
            }
            offspring.push(child);
        }
        let offspring_costs = evaluate_batch(objective, bounds, &offspring);
        evaluations += n_offspring;

        let mut next = Vec::with_capacity(cfg.population);
        let mut next_costs = Vec::with_capacity(cfg.population);
        for &i in order.iter().take(cfg.elitism) {
            next.push(population[i]);
            next_costs.push(costs[i]);
        }
        next.extend(offspring);
        next_costs.extend(offspring_costs);
        population = next;
        costs = next_costs;
        history.push(costs.iter().copied().fold(f64::INFINITY, f64::min));
    }

    let best_idx = sorted_order(&costs)[0];
    let best = bounds.to_physical(&population[best_idx]);
    let best_cost = objective.cost(&best);
    evaluations += 1;
    Ok(OptResult {
        method: Method::Ga,
        best,
        best_cost,
        evaluations,
        iterations: cfg.generations,
        wall_time: 0.0,
        seed: cfg.seed,
        converged_by: ConvergedBy::MaxIter,
        cost_history: history,
    })
}
