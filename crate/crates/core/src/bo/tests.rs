// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::config::bundled_profile;
use crate::domain::{fleet_grid, WorkloadSample};
use crate::exec::Exec;
use crate::forest::{fit, ForestHyper};

fn base() -> QueryFeatures {
    QueryFeatures {
        query_id: "q11".into(),
        instances: FleetConfig::new(1, 1),
        input_size_bytes: 2 << 30,
        start_time_epoch: 1_700_000_000,
        total_memory_mb: 65536,
        available_memory_mb: 40000,
        memory_per_executor_mb: 2048,
        num_waiting_apps: 0,
        total_available_cores: 16,
    }
}

fn surface_model(label: impl Fn(FleetConfig) -> f64) -> PredictionModel {
    let samples: Vec<_> = fleet_grid(8, 8)
        .into_iter()
        .map(|f| WorkloadSample::new(base().with_fleet(f), label(f)).unwrap())
        .collect();
    let hyper = ForestHyper {
        n_trees: 1,
        max_depth: None,
        min_leaf: 1,
        seed: 0,
        bootstrap: false,
    };
    fit(Exec::Sequential, samples, &hyper, 1).unwrap()
}

fn bowl(f: FleetConfig) -> f64 {
    let dv = f64::from(f.n_vm) - 5.0;
    let ds = f64::from(f.n_sl) - 3.0;
    40.0 + 2.0 * dv * dv + 1.5 * ds * ds
}

fn flat_profile() -> ProviderProfile {
    ProviderProfile {
        name: "flat".into(),
        vm_hourly_price: 3.6,
        vm_storage_hourly_price: 0.0,
        burstable_price_per_vcpu_hour: 0.0,
        vcpus_per_instance: 2,
        sl_price_per_gb_second: 0.0025,
        sl_memory_gb: 2.0,
        sl_billing_granularity_ms: 1,
        external_store_hourly_price: 36.0,
        vm_cold_boot_s: 55.0,
        sl_boot_s: 0.0,
        sl_overhead_factor: 1.3,
        max_vm: 8,
        max_sl: 8,
    }
}

#[test]
fn noiseless_objective_is_negated_prediction() {
    let model = surface_model(bowl);
    let f = FleetConfig::new(2, 6);
    assert_eq!(objective(&model, &base(), f, 0.0, 1).unwrap(), -bowl(f));
    assert_eq!(
        objective(&model, &base(), f, 3.0, 7).unwrap(),
        objective(&model, &base(), f, 3.0, 7).unwrap()
    );
    assert_ne!(
        objective(&model, &base(), f, 3.0, 7).unwrap(),
        objective(&model, &base(), f, 3.0, 8).unwrap()
    );
}

#[test]
fn objective_noise_is_centred() {
    let model = surface_model(bowl);
    let f = FleetConfig::new(4, 4);
    let sigma = 5.0;
    let n = 10_000;
    let mean = (0..n)
        .map(|s| objective(&model, &base(), f, sigma, s).unwrap())
        .sum::<f64>()
        / n as f64;
    assert!((mean + bowl(f)).abs() <= 3.0 * sigma / 100.0, "mean {mean}");
}

#[test]
fn pi_reference_values() {
    assert_eq!(pi_from_z(improvement_z(-9.0, 2.0, -10.0, 1.0)), 0.5);
    assert!((pi_from_z(improvement_z(-7.0, 2.0, -10.0, 1.0)) - 0.841_344_746).abs() < 1e-6);
    assert_eq!(pi_from_z(improvement_z(-11.0, 0.0, -10.0, 0.1)), 0.0);
    assert_eq!(pi_from_z(improvement_z(-9.0, 0.0, -10.0, 0.1)), 1.0);
    assert!(pi_from_z(improvement_z(-11.0, 1e-9, -10.0, 0.1)) < 1e-12);
}

#[test]
fn pi_on_a_fitted_surrogate() {
    let pts = [[0.0, 8.0], [8.0, 0.0], [3.0, 3.0]];
    let ys = [-90.0, -70.0, -50.0];
    let gp = GpSurrogate::fit(&pts, &ys).unwrap();
    let probe = FleetConfig::new(5, 5);
    let (mu, sigma) = gp.predict_fleet(probe);
    assert!(sigma > 0.0);
    let xi = 0.3;
    assert!((acquisition_pi(&gp, probe, mu - xi, xi) - 0.5).abs() < 1e-12);
    assert!((acquisition_pi(&gp, probe, mu - xi - sigma, xi) - 0.841_344_746).abs() < 1e-6);
    // At an observation the posterior is certain and no better than f_best.
    assert_eq!(acquisition_pi(&gp, FleetConfig::new(3, 3), -50.0, 0.5), 0.0);
}

#[test]
fn constant_objective_stagnates_after_design_plus_ten() {
    let grid = fleet_grid(8, 8);
    let settings = SearchSettings::default();
    let result = search_grid(&grid, &settings, |fleet, _| {
        Ok(Evaluation {
            objective: -40.0,
            candidate: Candidate {
                fleet,
                est_time_s: 40.0,
                est_cost: Money::ZERO,
            },
        })
    })
    .unwrap();
    assert_eq!(result.terminated_by, Termination::Stagnation);
    assert_eq!(result.n_evaluations, 5 + 10);
}

#[test]
fn constant_rf_model_stagnates_too() {
    let model = surface_model(|_| 40.0);
    let result = search(&model, &base(), &flat_profile(), &SearchSettings::default()).unwrap();
    assert_eq!(result.terminated_by, Termination::Stagnation);
    assert_eq!(result.n_evaluations, 15);
    assert_eq!(result.best.est_time_s, 40.0);
}

#[test]
fn initial_design_contains_extremes() {
    let grid = fleet_grid(8, 8);
    for seed in 0..20 {
        let d = initial_design(&grid, 5, seed);
        assert_eq!(d.len(), 5);
        assert_eq!(d.iter().collect::<BTreeSet<_>>().len(), 5);
        assert!(d.iter().any(|&i| grid[i] == FleetConfig::new(0, 8)));
        assert!(d.iter().any(|&i| grid[i] == FleetConfig::new(8, 0)));
    }
}

#[test]
fn budget_rules() {
    let model = surface_model(bowl);
    let tight = SearchSettings {
        budget: Some(4),
        ..SearchSettings::default()
    };
    assert!(matches!(
        search(&model, &base(), &flat_profile(), &tight),
        Err(Error::InvalidConfig(_))
    ));
    let small = SearchSettings {
        budget: Some(7),
        ..SearchSettings::default()
    };
    let r = search(&model, &base(), &flat_profile(), &small).unwrap();
    assert_eq!((r.n_evaluations, r.terminated_by), (7, Termination::Budget));
    // A grid smaller than the design is exhausted, not rejected.
    let tiny = ProviderProfile {
        max_vm: 1,
        max_sl: 1,
        ..flat_profile()
    };
    let r = search(&model, &base(), &tiny, &SearchSettings::default()).unwrap();
    assert_eq!((r.n_evaluations, r.terminated_by), (3, Termination::Budget));
    assert!(matches!(
        search(
            &PredictionModel::untrained(),
            &base(),
            &tiny,
            &SearchSettings::default()
        ),
        Err(Error::Untrained)
    ));
}

#[test]
fn search_finds_the_bowl_minimum_cheaply() {
    let model = surface_model(bowl);
    let result = search(&model, &base(), &flat_profile(), &SearchSettings::default()).unwrap();
    assert!(result.best.est_time_s <= 40.0 * 1.05, "{:?}", result.best);
    assert!(result.n_evaluations < 64);
    let min = result
        .visited
        .iter()
        .map(|c| c.est_time_s)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(result.best.est_time_s, min);
}

#[test]
fn estimate_cost_cases() {
    let p = flat_profile();
    // VM 0.001/s, SL 0.005/s, store 0.01/s.
    let vm_only = estimate_cost(FleetConfig::new(3, 0), 100.0, &p, true);
    assert_eq!(vm_only, Money::from_units(0.3));
    // Short query under relay: SL charged for the whole run.
    let short = estimate_cost(FleetConfig::new(1, 1), 30.0, &p, true);
    assert_eq!(short, Money::from_units(0.03 + 0.15 + 0.3));
    // {2,2}, 100 s: 2*100*0.001 + 2*55*0.005 + 100*0.01 with relay; 2*100*0.005 for SL without.
    assert_eq!(
        estimate_cost(FleetConfig::new(2, 2), 100.0, &p, true),
        Money::from_units(0.2 + 0.55 + 1.0)
    );
    assert_eq!(
        estimate_cost(FleetConfig::new(2, 2), 100.0, &p, false),
        Money::from_units(0.2 + 1.0 + 1.0)
    );
    // Unpaired serverless instances run for the whole query.
    assert_eq!(
        estimate_cost(FleetConfig::new(1, 3), 100.0, &p, true),
        Money::from_units(0.1 + 0.275 + 1.0 + 1.0)
    );
    assert_eq!(
        estimate_cost_with_grace(FleetConfig::new(2, 2), 100.0, &p, true, 5.0),
        Money::from_units(0.2 + 0.6 + 1.0)
    );
}

fn cand(v: u32, t: f64, cents: i64) -> Candidate {
    Candidate {
        fleet: FleetConfig::new(v, 1),
        est_time_s: t,
        est_cost: Money::from_micros(cents * 10_000),
    }
}

fn result_of(visited: Vec<Candidate>) -> SearchResult {
    let best = *visited
        .iter()
        .reduce(|a, b| if b.est_time_s < a.est_time_s { b } else { a })
        .unwrap();
    SearchResult {
        best,
        n_evaluations: visited.len(),
        visited,
        terminated_by: Termination::Stagnation,
    }
}

#[test]
fn knob_scan_examples() {
    let r = result_of(vec![
        cand(1, 100.0, 10),
        cand(2, 110.0, 8),
        cand(3, 125.0, 7),
    ]);
    assert_eq!(select_with_knob(&r, 0.2).unwrap(), cand(2, 110.0, 8));
    assert_eq!(select_with_knob(&r, 0.0).unwrap(), r.best);
    assert_eq!(select_with_knob(&r, 0.3).unwrap(), cand(3, 125.0, 7));
    assert!(matches!(select_with_knob(&r, -0.1), Err(Error::Domain(_))));
    // Slower but pricier candidates never qualify.
    let r = result_of(vec![cand(1, 100.0, 10), cand(2, 105.0, 12)]);
    assert_eq!(select_with_knob(&r, 0.5).unwrap(), r.best);
}

#[test]
fn pc_ratio_cases() {
    assert_eq!(pc_ratio(1.0, 0.0).unwrap(), 100.0);
    assert_eq!(pc_ratio(2.0, 1.0).unwrap(), 25.0);
    assert!(pc_ratio(3.0, 0.4).unwrap() > pc_ratio(3.0, 0.8).unwrap());
    assert!(pc_ratio(0.0, 1.0).is_err());
    assert!(pc_ratio(1.0, -1.0).is_err());
}

#[test]
fn real_profile_costs_are_positive() {
    let p = bundled_profile("aws-sim").unwrap();
    for f in p.grid() {
        assert!(estimate_cost(f, 60.0, &p, true) > Money::ZERO);
    }
}

fn arb_visited() -> impl Strategy<Value = Vec<Candidate>> {
    proptest::collection::vec((1.0f64..200.0, 0i64..1_000_000), 1..30).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (t, c))| Candidate {
                fleet: FleetConfig::new(i as u32, 1),
                est_time_s: t,
                est_cost: Money::from_micros(c),
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn knob_choice_satisfies_both_constraints(visited in arb_visited(), eps in 0.0f64..2.0) {
        let r = result_of(visited);
        let c = select_with_knob(&r, eps).unwrap();
        prop_assert!(c.est_time_s <= r.best.est_time_s * (1.0 + eps));
        prop_assert!(c.est_cost <= r.best.est_cost);
        prop_assert!(r.visited.contains(&c));
        // Nothing admissible is cheaper.
        for v in &r.visited {
            if v.est_cost <= r.best.est_cost && v.est_time_s <= r.best.est_time_s * (1.0 + eps) {
                prop_assert!(v.est_cost >= c.est_cost);
            }
        }
    }

    #[test]
    fn knob_cost_never_rises_with_tolerance(visited in arb_visited(), a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let r = result_of(visited);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(select_with_knob(&r, hi).unwrap().est_cost <= select_with_knob(&r, lo).unwrap().est_cost);
    }

    #[test]
    fn zero_knob_returns_the_fastest(visited in arb_visited()) {
        let r = result_of(visited);
        prop_assert_eq!(select_with_knob(&r, 0.0).unwrap().est_time_s, r.best.est_time_s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn search_never_repeats_and_reports_the_visited_minimum(seed in any::<u64>(), a in 0.5f64..4.0, b in 0.5f64..4.0, cv in 0u32..=8, cs in 0u32..=8) {
        let grid = fleet_grid(8, 8);
        let settings = SearchSettings { seed, ..SearchSettings::default() };
        let r = search_grid(&grid, &settings, |fleet, _| {
            let t = 30.0 + a * (f64::from(fleet.n_vm) - f64::from(cv)).powi(2) + b * (f64::from(fleet.n_sl) - f64::from(cs)).powi(2);
            Ok(Evaluation { objective: -t, candidate: Candidate { fleet, est_time_s: t, est_cost: Money::ZERO } })
        }).unwrap();
        let fleets: BTreeSet<_> = r.visited.iter().map(|c| c.fleet).collect();
        prop_assert_eq!(fleets.len(), r.n_evaluations);
        prop_assert!(r.n_evaluations <= grid.len());
        let min = r.visited.iter().map(|c| c.est_time_s).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(r.best.est_time_s, min);
    }
}
