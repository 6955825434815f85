// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! Performance-cost comparison of three ways to pick a fleet.
//!
//! - `RF+BO`: surrogate search over forest predictions.
//! - `RF-exhaustive`: a forest prediction for every grid point.
//! - `BO-on-simulator`: surrogate search whose every probe is a simulated run.
//!
//! Latency and cost are those of reaching the decision. A forest call costs
//! `rf_call_latency_s` and the VM time it occupies; a surrogate step adds
//! `surrogate_step_s`. A simulated probe costs its simulated completion time
//! and bill, standing in for a live run.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bo::{pc_ratio, search, search_grid, Candidate, Evaluation, SearchSettings};
use crate::domain::{FleetConfig, ProviderProfile, QueryFeatures};
use crate::error::Result;
use crate::exec::Exec;
use crate::forest::PredictionModel;
use crate::money::Money;
use crate::sim::{simulate, Policy, QuerySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "RF+BO")]
    RfBo,
    #[serde(rename = "RF-exhaustive")]
    RfExhaustive,
    #[serde(rename = "BO-on-simulator")]
    BoSimulator,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::RfBo => "RF+BO",
            Strategy::RfExhaustive => "RF-exhaustive",
            Strategy::BoSimulator => "BO-on-simulator",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareSettings {
    pub rf_call_latency_s: f64,
    pub surrogate_step_s: f64,
    pub seed: u64,
    pub relay: bool,
}

impl Default for CompareSettings {
    fn default() -> Self {
        CompareSettings {
            rf_call_latency_s: 0.75,
            surrogate_step_s: 0.05,
            seed: 0,
            relay: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub fleet: FleetConfig,
    pub evaluations: usize,
    pub latency_s: f64,
    pub cost: Money,
    pub pc_ratio: f64,
    /// Measured time of the computation itself on this machine.
    pub wall_s: f64,
}

/// Modeled price of one forest call.
pub fn rf_call_cost(profile: &ProviderProfile, settings: &CompareSettings) -> Money {
    Money::from_units(profile.vm_rate_per_second() * settings.rf_call_latency_s)
}

pub fn compare(
    model: &PredictionModel,
    base: &QueryFeatures,
    query: &QuerySpec,
    profile: &ProviderProfile,
    settings: &CompareSettings,
) -> Result<Vec<StrategyReport>> {
    compare_with(Exec::default(), model, base, query, profile, settings)
}

pub fn compare_with(
    exec: Exec,
    model: &PredictionModel,
    base: &QueryFeatures,
    query: &QuerySpec,
    profile: &ProviderProfile,
    settings: &CompareSettings,
) -> Result<Vec<StrategyReport>> {
    let call_cost = rf_call_cost(profile, settings);
    let search_settings = SearchSettings {
        seed: settings.seed,
        relay: settings.relay,
        ..SearchSettings::default()
    };
    let times = |n: usize| Money::from_micros(call_cost.micros() * n as i64);

    let started = Instant::now();
    let rf_bo = search(model, base, profile, &search_settings)?;
    let rf_bo_wall = started.elapsed().as_secs_f64();
    let n = rf_bo.n_evaluations;
    let rf_bo_latency = n as f64 * (settings.rf_call_latency_s + settings.surrogate_step_s);

    let started = Instant::now();
    let grid = profile.grid();
    let predictions = exec.try_map(&grid, |&f| model.predict(&base.with_fleet(f)))?;
    let exhaustive_best = grid
        .iter()
        .zip(&predictions)
        .fold(None::<(FleetConfig, f64)>, |acc, (&f, &t)| match acc {
            Some((_, bt)) if bt <= t => acc,
            _ => Some((f, t)),
        })
        .map(|(f, _)| f)
        .expect("grid is non-empty");
    let exhaustive_wall = started.elapsed().as_secs_f64();

    let policy = Policy::hybrid(settings.relay);
    let started = Instant::now();
    let mut probe_cost = Money::ZERO;
    let mut probe_time = 0.0;
    let bo_sim = search_grid(&grid, &search_settings, |fleet, _| {
        let run = simulate(query, fleet, policy, profile)?;
        probe_cost += run.cost.total;
        probe_time += run.completion_s;
        Ok(Evaluation {
            objective: -run.completion_s,
            candidate: Candidate {
                fleet,
                est_time_s: run.completion_s,
                est_cost: run.cost.total,
            },
        })
    })?;
    let bo_sim_wall = started.elapsed().as_secs_f64();

    let report = |strategy,
                  fleet,
                  evaluations,
                  latency_s: f64,
                  cost: Money,
                  wall_s|
     -> Result<StrategyReport> {
        Ok(StrategyReport {
            strategy,
            fleet,
            evaluations,
            latency_s,
            cost,
            pc_ratio: pc_ratio(latency_s, cost.as_units())?,
            wall_s,
        })
    };
    Ok(vec![
        report(
            Strategy::RfBo,
            rf_bo.best.fleet,
            n,
            rf_bo_latency,
            times(n),
            rf_bo_wall,
        )?,
        report(
            Strategy::RfExhaustive,
            exhaustive_best,
            grid.len(),
            grid.len() as f64 * settings.rf_call_latency_s,
            times(grid.len()),
            exhaustive_wall,
        )?,
        report(
            Strategy::BoSimulator,
            bo_sim.best.fleet,
            bo_sim.n_evaluations,
            probe_time,
            probe_cost,
            bo_sim_wall,
        )?,
    ])
}

pub const COMPARE_CSV_HEADER: &str =
    "strategy,n_vm,n_sl,evaluations,latency_s,cost,pc_ratio,wall_s";

pub fn write_compare_csv<W: std::io::Write>(
    mut out: W,
    rows: &[StrategyReport],
) -> std::io::Result<()> {
    writeln!(out, "{COMPARE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.3},{},{:.6},{:.6}",
            r.strategy,
            r.fleet.n_vm,
            r.fleet.n_sl,
            r.evaluations,
            r.latency_s,
            r.cost,
            r.pc_ratio,
            r.wall_s
        )?;
    }
    Ok(())
}
