// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! Fleet search with a Gaussian-process surrogate and probability of
//! improvement, plus the cost model, tradeoff knob and PC ratio.
//!
//! The objective is maximized: it is the negated predicted completion time,
//! optionally perturbed by Gaussian noise.

mod gp;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::domain::{FleetConfig, ProviderProfile, QueryFeatures};
use crate::error::{Error, Result};
use crate::forest::PredictionModel;
use crate::money::Money;

pub use gp::{coords, GpSurrogate, LENGTH_SCALE_GRID};

/// A visited fleet with its noiseless predicted time and estimated cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub fleet: FleetConfig,
    pub est_time_s: f64,
    pub est_cost: Money,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Termination {
    Stagnation,
    Budget,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Stagnation => "STAGNATION",
            Termination::Budget => "BUDGET",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Candidate,
    /// Candidates in evaluation order.
    pub visited: Vec<Candidate>,
    pub n_evaluations: usize,
    pub terminated_by: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    /// Maximum evaluations; `None` means the whole grid.
    pub budget: Option<usize>,
    pub initial_design: usize,
    pub seed: u64,
    /// Standard deviation of the objective noise, in seconds.
    pub noise_std: f64,
    /// Cost-model relay switch used for `est_cost`.
    pub relay: bool,
    pub stagnation_iterations: usize,
    pub min_relative_improvement: f64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            budget: None,
            initial_design: 5,
            seed: 0,
            noise_std: 0.0,
            relay: true,
            stagnation_iterations: 10,
            min_relative_improvement: 0.01,
        }
    }
}

/// One evaluation: the value being maximized plus the candidate to record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub candidate: Candidate,
}

/// `-(RF_t + delta)` with `delta ~ Normal(0, noise_std^2)` drawn from `seed`.
pub fn objective(
    model: &PredictionModel,
    base: &QueryFeatures,
    fleet: FleetConfig,
    noise_std: f64,
    seed: u64,
) -> Result<f64> {
    let t = model.predict(&base.with_fleet(fleet))?;
    Ok(-(t + noise(noise_std, seed)?))
}

fn noise(noise_std: f64, seed: u64) -> Result<f64> {
    if noise_std == 0.0 {
        return Ok(0.0);
    }
    let normal =
        Normal::new(0.0, noise_std).map_err(|e| Error::Domain(format!("noise_std: {e}")))?;
    Ok(normal.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Estimated cost of running `fleet` for `est_time_s`.
///
/// VMs are charged for the whole run. Under relaying each serverless
/// instance paired with a VM is charged until that VM is ready; unpaired
/// serverless instances, and all of them without relaying, run for the whole
/// query. The external store is charged for the run whenever `n_sl >= 1`.
pub fn estimate_cost(
    fleet: FleetConfig,
    est_time_s: f64,
    profile: &ProviderProfile,
    relay: bool,
) -> Money {
    estimate_cost_with_grace(fleet, est_time_s, profile, relay, 0.0)
}

pub fn estimate_cost_with_grace(
    fleet: FleetConfig,
    est_time_s: f64,
    profile: &ProviderProfile,
    relay: bool,
    grace_s: f64,
) -> Money {
    let t = est_time_s.max(0.0);
    let paired = if relay { fleet.n_sl.min(fleet.n_vm) } else { 0 };
    let t_paired = t.min(profile.vm_cold_boot_s + grace_s);
    let vm = f64::from(fleet.n_vm) * t * profile.vm_rate_per_second();
    let sl = (f64::from(paired) * t_paired + f64::from(fleet.n_sl - paired) * t)
        * profile.sl_rate_per_second();
    let store = if fleet.n_sl >= 1 {
        t * profile.external_store_rate_per_second()
    } else {
        0.0
    };
    Money::from_units(vm + sl + store)
}

/// Probability that `candidate` beats `f_best` by more than `xi`.
pub fn acquisition_pi(
    surrogate: &GpSurrogate,
    candidate: FleetConfig,
    f_best: f64,
    xi: f64,
) -> f64 {
    let (mu, sigma) = surrogate.predict_fleet(candidate);
    pi_from_z(improvement_z(mu, sigma, f_best, xi))
}

fn improvement_z(mu: f64, sigma: f64, f_best: f64, xi: f64) -> f64 {
    let gap = mu - f_best - xi;
    if sigma > 0.0 {
        gap / sigma
    } else if gap > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

fn pi_from_z(z: f64) -> f64 {
    StdNormal::standard().cdf(z)
}

pub fn default_xi(f_best: f64) -> f64 {
    0.01 * f_best.abs()
}

/// Searches the profile's fleet grid for the minimum predicted completion
/// time of `base`.
pub fn search(
    model: &PredictionModel,
    base: &QueryFeatures,
    profile: &ProviderProfile,
    settings: &SearchSettings,
) -> Result<SearchResult> {
    if !model.is_trained() {
        return Err(Error::Untrained);
    }
    let grid = profile.grid();
    search_grid(&grid, settings, |fleet, k| {
        let est_time_s = model.predict(&base.with_fleet(fleet))?;
        let objective = -(est_time_s + noise(settings.noise_std, eval_seed(settings.seed, k))?);
        Ok(Evaluation {
            objective,
            candidate: Candidate {
                fleet,
                est_time_s,
                est_cost: estimate_cost(fleet, est_time_s, profile, settings.relay),
            },
        })
    })
}

fn eval_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (k as u64).wrapping_add(0x632B_E59B_D9B4_E019)
}

/// The search loop over an arbitrary evaluator. `evaluate` receives the
/// fleet and the zero-based evaluation index.
pub fn search_grid<F>(
    grid: &[FleetConfig],
    settings: &SearchSettings,
    mut evaluate: F,
) -> Result<SearchResult>
where
    F: FnMut(FleetConfig, usize) -> Result<Evaluation>,
{
    if grid.is_empty() {
        return Err(Error::InvalidConfig("search grid is empty".into()));
    }
    if settings.initial_design == 0 {
        return Err(Error::InvalidConfig(
            "initial design must hold at least one fleet".into(),
        ));
    }
    if let Some(budget) = settings.budget.filter(|&b| b < settings.initial_design) {
        return Err(Error::InvalidConfig(format!(
            "budget {budget} is smaller than the initial design ({})",
            settings.initial_design
        )));
    }
    let budget = settings.budget.unwrap_or(grid.len()).min(grid.len());

    let mut obs = Observed::default();
    let mut f_best = f64::NEG_INFINITY;
    for i in initial_design(grid, settings.initial_design.min(budget), settings.seed) {
        let e = evaluate(grid[i], obs.visited.len())?;
        f_best = f_best.max(obs.push(grid, i, e));
    }

    let mut stale = 0usize;
    let terminated_by = loop {
        if obs.visited.len() >= budget {
            break Termination::Budget;
        }
        let gp = GpSurrogate::fit(&obs.points, &obs.values)?;
        let xi = default_xi(f_best);
        let mut pick: Option<(usize, f64, f64)> = None;
        for (i, &fleet) in grid.iter().enumerate() {
            if obs.seen.contains(&i) {
                continue;
            }
            let (mu, sigma) = gp.predict_fleet(fleet);
            let z = improvement_z(mu, sigma, f_best, xi);
            // Equal z: prefer the higher mean, then grid order.
            if pick.is_none_or(|(_, bz, bmu)| z > bz || (z == bz && mu > bmu)) {
                pick = Some((i, z, mu));
            }
        }
        let Some((i, _, _)) = pick else {
            break Termination::Budget;
        };
        let e = evaluate(grid[i], obs.visited.len())?;
        let value = obs.push(grid, i, e);
        let previous = f_best;
        f_best = f_best.max(value);
        let gain = f_best - previous;
        let relative = if previous != 0.0 {
            gain / previous.abs()
        } else if gain > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if relative < settings.min_relative_improvement {
            stale += 1;
        } else {
            stale = 0;
        }
        if stale >= settings.stagnation_iterations {
            break Termination::Stagnation;
        }
    };

    let visited = obs.visited;
    let best = *visited
        .iter()
        .reduce(|a, b| if b.est_time_s < a.est_time_s { b } else { a })
        .expect("initial design is non-empty");
    Ok(SearchResult {
        best,
        n_evaluations: visited.len(),
        visited,
        terminated_by,
    })
}

#[derive(Default)]
struct Observed {
    seen: std::collections::BTreeSet<usize>,
    visited: Vec<Candidate>,
    points: Vec<[f64; 2]>,
    values: Vec<f64>,
}

impl Observed {
    fn push(&mut self, grid: &[FleetConfig], i: usize, e: Evaluation) -> f64 {
        self.seen.insert(i);
        self.visited.push(e.candidate);
        self.points.push(coords(grid[i]));
        self.values.push(e.objective);
        e.objective
    }
}

/// Grid indices of the initial design: the SL-only and VM-only extremes when
/// present, then distinct uniform draws.
fn initial_design(grid: &[FleetConfig], size: usize, seed: u64) -> Vec<usize> {
    use rand::seq::index::sample;

    let max_vm = grid.iter().map(|f| f.n_vm).max().unwrap_or(0);
    let max_sl = grid.iter().map(|f| f.n_sl).max().unwrap_or(0);
    let mut chosen: Vec<usize> = [FleetConfig::new(0, max_sl), FleetConfig::new(max_vm, 0)]
        .iter()
        .filter_map(|e| grid.iter().position(|f| f == e))
        .collect();
    chosen.dedup();
    chosen.truncate(size);
    let rest: Vec<usize> = (0..grid.len()).filter(|i| !chosen.contains(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let need = size - chosen.len();
    chosen.extend(
        sample(&mut rng, rest.len(), need.min(rest.len()))
            .iter()
            .map(|k| rest[k]),
    );
    chosen
}

/// The cheapest visited candidate that costs no more than the best one and
/// stays within `(1 + epsilon)` of its time; ties go to the slower one, then
/// to the earliest visited. Widening `epsilon` only grows the admissible set,
/// so the returned cost never increases with it.
pub fn select_with_knob(result: &SearchResult, epsilon: f64) -> Result<Candidate> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::Domain(format!("knob must be >= 0, got {epsilon}")));
    }
    let t_best = result.best.est_time_s;
    let c_best = result.best.est_cost;
    let limit = t_best * (1.0 + epsilon);
    let mut chosen = result.best;
    for c in &result.visited {
        if c.est_cost > c_best || c.est_time_s > limit {
            continue;
        }
        if c.est_cost < chosen.est_cost
            || (c.est_cost == chosen.est_cost && c.est_time_s > chosen.est_time_s)
        {
            chosen = *c;
        }
    }
    Ok(chosen)
}

/// `100 * (1 / time_s) / (1 + cost)`.
pub fn pc_ratio(time_s: f64, cost: f64) -> Result<f64> {
    if !(time_s.is_finite() && time_s > 0.0) {
        return Err(Error::Domain(format!(
            "time must be positive, got {time_s}"
        )));
    }
    if !(cost.is_finite() && cost >= 0.0) {
        return Err(Error::Domain(format!("cost must be >= 0, got {cost}")));
    }
    Ok(100.0 / time_s / (1.0 + cost))
}

#[cfg(test)]
mod tests;
