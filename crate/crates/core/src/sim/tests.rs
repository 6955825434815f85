// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

use proptest::prelude::*;

use super::*;
use crate::config::bundled_profile;

fn aws() -> ProviderProfile {
    bundled_profile("aws-sim").unwrap()
}

/// Independent makespan oracle: every slot offers an arithmetic sequence of
/// completion instants; a bag of identical tasks finishes at the n-th
/// smallest offer. Returns (makespan_us, tasks_on_sl).
fn offer_oracle(
    query: &QuerySpec,
    fleet: FleetConfig,
    policy: Policy,
    profile: &ProviderProfile,
) -> (i64, u32) {
    let vm_p = to_micros(query.task_service_s).max(1);
    let sl_p = to_micros(query.task_service_s * profile.sl_overhead_factor).max(1);
    let vm_r = to_micros(profile.vm_cold_boot_s);
    let sl_r = to_micros(profile.sl_boot_s);
    let n = query.n_tasks as usize;
    // (completion, is_sl, instance, slot)
    let mut offers: Vec<(i64, u8, u32, u32)> = Vec::new();
    for v in 0..fleet.n_vm {
        for slot in 0..query.slots_per_instance {
            for k in 1..=n as i64 {
                offers.push((vm_r + k * vm_p, 0, v, slot));
            }
        }
    }
    for s in 0..fleet.n_sl {
        let stop = match policy {
            Policy::HybridRelay if s < fleet.n_vm => Some(vm_r),
            Policy::SegueStatic { segue_timeout_s } => Some(to_micros(segue_timeout_s)),
            _ => None,
        };
        for slot in 0..query.slots_per_instance {
            for k in 1..=n as i64 {
                let start = sl_r + (k - 1) * sl_p;
                if stop.is_some_and(|t| start >= t) {
                    break;
                }
                offers.push((start + sl_p, 1, fleet.n_vm + s, slot));
            }
        }
    }
    offers.sort();
    let taken = &offers[..n];
    (
        taken.last().map_or(0, |o| o.0),
        taken.iter().filter(|o| o.1 == 1).count() as u32,
    )
}

#[test]
fn single_vm_waits_for_cold_boot() {
    let out = simulate(
        &QuerySpec::new(10, 2.0),
        FleetConfig::new(1, 0),
        Policy::VmOnly,
        &aws(),
    )
    .unwrap();
    assert_eq!(out.completion_s, 75.0);
    assert_eq!(out.tasks_on_vm, 10);
    assert_eq!(out.cost.sl_compute, Money::ZERO);
    assert_eq!(out.cost.external_store, Money::ZERO);
}

#[test]
fn empty_query_costs_nothing() {
    for (fleet, policy) in [
        (FleetConfig::new(3, 0), Policy::VmOnly),
        (FleetConfig::new(0, 4), Policy::SlOnly),
        (FleetConfig::new(2, 2), Policy::HybridRelay),
    ] {
        let out = simulate(&QuerySpec::new(0, 7.0), fleet, policy, &aws()).unwrap();
        assert_eq!(out.completion_s, 0.0);
        assert_eq!(out.cost.total, Money::ZERO);
    }
}

#[test]
fn policy_preconditions_are_enforced() {
    let q = QuerySpec::new(10, 1.0);
    let p = aws();
    assert!(matches!(
        simulate(&q, FleetConfig::new(1, 1), Policy::SlOnly, &p),
        Err(Error::PolicyMismatch { .. })
    ));
    assert!(matches!(
        simulate(&q, FleetConfig::new(1, 1), Policy::VmOnly, &p),
        Err(Error::PolicyMismatch { .. })
    ));
    assert!(matches!(
        simulate(
            &q,
            FleetConfig::new(2, 1),
            Policy::SegueStatic {
                segue_timeout_s: 90.0
            },
            &p
        ),
        Err(Error::PolicyMismatch { .. })
    ));
    assert!(matches!(
        simulate(
            &q,
            FleetConfig::new(1, 1),
            Policy::SegueStatic {
                segue_timeout_s: 0.0
            },
            &p
        ),
        Err(Error::PolicyMismatch { .. })
    ));
    assert!(matches!(
        simulate(&q, FleetConfig::new(0, 0), Policy::HybridKeep, &p),
        Err(Error::EmptyFleet)
    ));
}

#[test]
fn short_query_favours_serverless() {
    let q = QuerySpec::new(100, 2.0);
    let p = aws();
    let sl = simulate(&q, FleetConfig::new(0, 5), Policy::SlOnly, &p).unwrap();
    let vm = simulate(&q, FleetConfig::new(5, 0), Policy::VmOnly, &p).unwrap();
    let best_hybrid = fleet_grid(5, 5)
        .into_iter()
        .filter(|f| f.n_vm > 0 && f.n_sl > 0)
        .map(|f| {
            simulate(&q, f, Policy::HybridRelay, &p)
                .unwrap()
                .completion_s
        })
        .fold(f64::INFINITY, f64::min);
    // 20 tasks per SL at 2.6 s each; VMs would only join after 55 s.
    assert_eq!(sl.completion_s, 52.0);
    assert!(sl.completion_s < vm.completion_s);
    assert!(sl.completion_s <= best_hybrid);
    assert!(sl.cost.total < vm.cost.total);
}

#[test]
fn long_query_favours_vms_over_serverless() {
    let q = QuerySpec::new(500, 2.0);
    let p = aws();
    let vm = simulate(&q, FleetConfig::new(5, 0), Policy::VmOnly, &p).unwrap();
    let sl = simulate(&q, FleetConfig::new(0, 5), Policy::SlOnly, &p).unwrap();
    assert_eq!(vm.completion_s, 255.0);
    assert_eq!(sl.completion_s, 260.0);
}

#[test]
fn relay_matches_hand_trace_for_long_query() {
    // Each SL starts tasks at 0, 2.6, ..., 54.6 (22 tasks) and stops at 55 s.
    // The remaining 390 tasks run 78 per VM from 55 s: 55 + 156 = 211 s.
    let q = QuerySpec::new(500, 2.0);
    let p = aws();
    let fleet = FleetConfig::new(5, 5);
    let relay = simulate_traced(&q, fleet, Policy::HybridRelay, &p).unwrap();
    assert_eq!(relay.outcome.completion_s, 211.0);
    assert_eq!(relay.outcome.tasks_on_sl, 110);
    assert!((relay.outcome.sl_busy_seconds - 286.0).abs() < 1e-9);
    assert_eq!(relay.sl_billed_ms, 286_000);

    // Without relaying, offers below 145 s: SL floor(145/2.6)=55 each, VM 45 each.
    let keep = simulate(&q, fleet, Policy::HybridKeep, &p).unwrap();
    assert_eq!(keep.completion_s, 145.0);
    assert_eq!(keep.tasks_on_sl, 275);

    // Static segue at 90 s: SL starts until 88.4 (35 tasks), VMs take 65 each.
    let segue = simulate(
        &q,
        fleet,
        Policy::SegueStatic {
            segue_timeout_s: 90.0,
        },
        &p,
    )
    .unwrap();
    assert_eq!(segue.completion_s, 185.0);
    assert_eq!(segue.tasks_on_sl, 175);

    assert!(relay.outcome.sl_busy_seconds < keep.sl_busy_seconds);
    assert!(relay.outcome.cost.sl_compute < keep.cost.sl_compute);
    assert!(relay.outcome.cost.sl_compute < segue.cost.sl_compute);
}

#[test]
fn relay_pairs_request_ids_with_instance_ids() {
    let trace = simulate_traced(
        &QuerySpec::new(300, 2.0),
        FleetConfig::new(2, 4),
        Policy::HybridRelay,
        &aws(),
    )
    .unwrap();
    let peers: Vec<_> = trace
        .instances
        .iter()
        .filter(|i| i.kind == InstanceKind::Sl)
        .map(|i| i.relay_peer.clone())
        .collect();
    assert_eq!(
        peers,
        vec![
            Some("i-00000001".into()),
            Some("i-00000002".into()),
            None,
            None
        ]
    );
    for inst in &trace.instances {
        if inst.kind == InstanceKind::Sl && inst.relay_peer.is_some() {
            assert!(inst.id.starts_with("req-"));
            // Stops at VM readiness, after its in-flight task.
            assert!(inst.terminate_s >= 55.0 && inst.terminate_s < 55.0 + 2.6);
        }
    }
}

#[test]
fn gcp_granularity_rounds_each_task_up() {
    let p = bundled_profile("gcp-sim").unwrap();
    // 1.01 s * 1.3 = 1.313 s per task, billed as 1.4 s.
    let trace = simulate_traced(
        &QuerySpec::new(7, 1.01),
        FleetConfig::new(0, 2),
        Policy::SlOnly,
        &p,
    )
    .unwrap();
    assert_eq!(trace.sl_billed_ms, 7 * 1400);
    assert_eq!(
        trace.outcome.cost.sl_compute,
        Money::from_units(7.0 * 1.4 * p.sl_rate_per_second())
    );
}

#[test]
fn sweep_covers_grid_in_order() {
    let rows = sweep(&QuerySpec::new(250, 2.0), &aws(), Policy::HybridRelay, 5, 5).unwrap();
    assert_eq!(rows.len(), 35);
    assert!(rows.windows(2).all(|w| w[0].fleet < w[1].fleet));
    assert!(rows.iter().any(|r| r.fleet == FleetConfig::new(0, 5)));
    assert!(rows.iter().any(|r| r.fleet == FleetConfig::new(5, 0)));
    let best = rows
        .iter()
        .min_by(|a, b| a.outcome.completion_s.total_cmp(&b.outcome.completion_s))
        .unwrap();
    assert!(best.fleet.n_vm >= 1 && best.fleet.n_sl >= 1);
}

#[test]
fn sweep_modes_agree() {
    let q = QuerySpec::new(120, 1.5);
    let seq = sweep_with(Exec::Sequential, &q, &aws(), Policy::HybridKeep, 4, 4).unwrap();
    let par = sweep_with(Exec::Parallel, &q, &aws(), Policy::HybridKeep, 4, 4).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn sweep_csv_has_header_and_one_line_per_fleet() {
    let rows = sweep(&QuerySpec::new(50, 2.0), &aws(), Policy::HybridRelay, 2, 2).unwrap();
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(SWEEP_CSV_HEADER));
    assert_eq!(lines.count(), 8);
}

#[test]
fn policy_names_parse() {
    assert_eq!(
        "hybrid-relay".parse::<Policy>().unwrap(),
        Policy::HybridRelay
    );
    assert_eq!(
        "SEGUE_STATIC:90".parse::<Policy>().unwrap(),
        Policy::SegueStatic {
            segue_timeout_s: 90.0
        }
    );
    assert!("SEGUE_STATIC".parse::<Policy>().is_err());
}

fn arb_profile() -> impl Strategy<Value = ProviderProfile> {
    (
        0.0f64..100.0,
        0.0f64..1.0,
        1.0f64..3.0,
        prop_oneof![Just(1u64), Just(100u64), 1u64..500],
        0.0f64..0.5,
        0.0f64..0.2,
        0.0f64..0.0001,
        0.0f64..0.5,
    )
        .prop_map(
            |(cold, boot_frac, overhead, gran, vm_price, burst, sl_price, store)| ProviderProfile {
                name: "prop".into(),
                vm_hourly_price: vm_price,
                vm_storage_hourly_price: vm_price / 20.0,
                burstable_price_per_vcpu_hour: burst,
                vcpus_per_instance: 2,
                sl_price_per_gb_second: sl_price,
                sl_memory_gb: 2.0,
                sl_billing_granularity_ms: gran,
                external_store_hourly_price: store,
                vm_cold_boot_s: cold,
                sl_boot_s: cold * boot_frac,
                sl_overhead_factor: overhead,
                max_vm: 8,
                max_sl: 8,
            },
        )
}

fn arb_query() -> impl Strategy<Value = QuerySpec> {
    (0u32..300, 0.05f64..10.0, 1u32..4).prop_map(|(n, svc, slots)| QuerySpec {
        n_tasks: n,
        task_service_s: svc,
        slots_per_instance: slots,
    })
}

fn arb_fleet() -> impl Strategy<Value = FleetConfig> {
    (0u32..7, 0u32..7)
        .prop_filter("non-empty", |(v, s)| v + s > 0)
        .prop_map(|(v, s)| FleetConfig::new(v, s))
}

fn arb_hybrid() -> impl Strategy<Value = Policy> {
    prop_oneof![Just(Policy::HybridKeep), Just(Policy::HybridRelay)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn billing_identity(q in arb_query(), fleet in arb_fleet(), policy in arb_hybrid(), p in arb_profile()) {
        let t = simulate_traced(&q, fleet, policy, &p).unwrap();
        let c = t.outcome.cost;
        prop_assert_eq!(c.total, c.vm_compute + c.vm_storage + c.burstable + c.sl_compute + c.external_store);
        let gran_us = p.sl_billing_granularity_ms as i64 * 1000;
        let per_task: u64 = t.tasks.iter()
            .filter(|r| t.instances[r.instance].kind == InstanceKind::Sl)
            .map(|r| (((r.end_us - r.start_us) + gran_us - 1) / gran_us) as u64 * p.sl_billing_granularity_ms)
            .sum();
        prop_assert_eq!(per_task, t.sl_billed_ms);
        prop_assert_eq!(c.sl_compute, Money::from_units(per_task as f64 / 1000.0 * p.sl_rate_per_second()));
        prop_assert_eq!(t.outcome.tasks_on_sl + t.outcome.tasks_on_vm, q.n_tasks);
        prop_assert!(t.outcome.completion_s >= 0.0);
        prop_assert!(c.vm_compute.micros() >= 0 && c.sl_compute.micros() >= 0 && c.external_store.micros() >= 0);
        if t.outcome.tasks_on_sl == 0 {
            prop_assert_eq!(c.external_store, Money::ZERO);
        }
    }

    #[test]
    fn external_store_charged_iff_serverless_worked(q in arb_query(), fleet in arb_fleet(), policy in arb_hybrid(), p in arb_profile()) {
        let p = ProviderProfile { external_store_hourly_price: p.external_store_hourly_price.max(10.0), ..p };
        let out = simulate(&q, fleet, policy, &p).unwrap();
        prop_assert_eq!(out.cost.external_store > Money::ZERO, out.tasks_on_sl >= 1);
    }

    #[test]
    fn adding_an_instance_never_delays(q in arb_query(), fleet in arb_fleet(), policy in arb_hybrid(), p in arb_profile()) {
        let base = simulate(&q, fleet, policy, &p).unwrap().completion_s;
        let more_vm = simulate(&q, FleetConfig::new(fleet.n_vm + 1, fleet.n_sl), policy, &p).unwrap().completion_s;
        let more_sl = simulate(&q, FleetConfig::new(fleet.n_vm, fleet.n_sl + 1), policy, &p).unwrap().completion_s;
        prop_assert!(more_vm <= base, "vm: {} -> {}", base, more_vm);
        prop_assert!(more_sl <= base, "sl: {} -> {}", base, more_sl);
    }

    #[test]
    fn single_kind_fleets_are_monotone(q in arb_query(), n in 1u32..7, p in arb_profile()) {
        let vm = simulate(&q, FleetConfig::new(n, 0), Policy::VmOnly, &p).unwrap().completion_s;
        let vm1 = simulate(&q, FleetConfig::new(n + 1, 0), Policy::VmOnly, &p).unwrap().completion_s;
        let sl = simulate(&q, FleetConfig::new(0, n), Policy::SlOnly, &p).unwrap().completion_s;
        let sl1 = simulate(&q, FleetConfig::new(0, n + 1), Policy::SlOnly, &p).unwrap().completion_s;
        prop_assert!(vm1 <= vm && sl1 <= sl);
    }

    #[test]
    fn relay_bills_no_more_serverless_than_alternatives(q in arb_query(), n in 1u32..6, extra_sl in 0u32..3, p in arb_profile(), margin in 0.001f64..100.0) {
        let fleet = FleetConfig::new(n, n + extra_sl);
        let relay = simulate(&q, fleet, Policy::HybridRelay, &p).unwrap();
        let keep = simulate(&q, fleet, Policy::HybridKeep, &p).unwrap();
        prop_assert!(relay.cost.sl_compute <= keep.cost.sl_compute);
        prop_assert!(relay.sl_busy_seconds <= keep.sl_busy_seconds);
        let pair = FleetConfig::new(n, n);
        let relay = simulate(&q, pair, Policy::HybridRelay, &p).unwrap();
        let segue = simulate(&q, pair, Policy::SegueStatic { segue_timeout_s: p.vm_cold_boot_s + margin }, &p).unwrap();
        prop_assert!(relay.cost.sl_compute <= segue.cost.sl_compute);
        prop_assert!(relay.sl_busy_seconds <= segue.sl_busy_seconds);
    }

    #[test]
    fn matches_offer_oracle(q in (0u32..120, 0.05f64..6.0, 1u32..3).prop_map(|(n, s, k)| QuerySpec { n_tasks: n, task_service_s: s, slots_per_instance: k }),
                            fleet in arb_fleet(), p in arb_profile(),
                            which in 0usize..3, timeout in 0.5f64..150.0) {
        let policy = match which {
            0 => Policy::HybridKeep,
            1 => Policy::HybridRelay,
            _ => Policy::SegueStatic { segue_timeout_s: timeout },
        };
        let fleet = if which == 2 { FleetConfig::new(fleet.total(), fleet.total()) } else { fleet };
        let out = simulate(&q, fleet, policy, &p).unwrap();
        let (makespan, on_sl) = offer_oracle(&q, fleet, policy, &p);
        prop_assert_eq!(out.completion_s, from_micros(makespan));
        prop_assert_eq!(out.tasks_on_sl, on_sl);
    }

    #[test]
    fn no_free_slot_could_finish_a_task_sooner(q in arb_query(), fleet in arb_fleet(), policy in arb_hybrid(), p in arb_profile()) {
        // Every task ran on a slot that finished it no later than any slot
        // still able to accept work would have.
        let t = simulate_traced(&q, fleet, policy, &p).unwrap();
        let makespan = t.tasks.iter().map(|r| r.end_us).max().unwrap_or(0);
        let vm_p = to_micros(q.task_service_s).max(1);
        let sl_p = to_micros(q.task_service_s * p.sl_overhead_factor).max(1);
        for (idx, inst) in t.instances.iter().enumerate() {
            for slot in 0..q.slots_per_instance {
                let last = t.tasks.iter().filter(|r| r.instance == idx && r.slot == slot).map(|r| r.end_us).max();
                let (ready, dur) = match inst.kind {
                    InstanceKind::Vm => (to_micros(p.vm_cold_boot_s), vm_p),
                    InstanceKind::Sl => (to_micros(p.sl_boot_s), sl_p),
                };
                let free = last.unwrap_or(ready);
                let accepting = match (&inst.relay_peer, inst.kind) {
                    (Some(_), _) => free < to_micros(p.vm_cold_boot_s),
                    _ => true,
                };
                if accepting && q.n_tasks > 0 {
                    prop_assert!(free + dur >= makespan, "slot {} of {} idle while it could finish by {}", slot, inst.id, free + dur);
                }
            }
        }
    }

    #[test]
    fn instance_lifecycles_are_consistent(q in arb_query(), fleet in arb_fleet(), policy in arb_hybrid(), p in arb_profile()) {
        let t = simulate_traced(&q, fleet, policy, &p).unwrap();
        let mut peers = std::collections::HashSet::new();
        for inst in &t.instances {
            let boot = match inst.kind { InstanceKind::Vm => p.vm_cold_boot_s, InstanceKind::Sl => p.sl_boot_s };
            prop_assert_eq!(inst.ready_s, inst.launch_s + boot);
            prop_assert!(inst.terminate_s >= inst.ready_s || inst.tasks == 0);
            if let Some(peer) = &inst.relay_peer {
                prop_assert!(peers.insert(peer.clone()));
            }
        }
        if policy == Policy::HybridRelay && q.n_tasks > 0 {
            prop_assert_eq!(peers.len() as u32, fleet.n_vm.min(fleet.n_sl));
        }
    }

    #[test]
    fn simulation_is_deterministic(q in arb_query(), fleet in arb_fleet(), policy in arb_hybrid(), p in arb_profile()) {
        let a = simulate_traced(&q, fleet, policy, &p).unwrap();
        let b = simulate_traced(&q, fleet, policy, &p).unwrap();
        prop_assert_eq!(a.outcome.completion_s.to_bits(), b.outcome.completion_s.to_bits());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn equal_speed_kinds_are_interchangeable(n_tasks in 0u32..300, svc in 0.05f64..10.0, k in 1u32..7, slots in 1u32..3, price in 0.0f64..0.3) {
        let p = ProviderProfile {
            name: "flat".into(),
            vm_hourly_price: price,
            vm_storage_hourly_price: 0.0,
            burstable_price_per_vcpu_hour: 0.0,
            vcpus_per_instance: 2,
            sl_price_per_gb_second: price / 3600.0 / 2.0,
            sl_memory_gb: 2.0,
            sl_billing_granularity_ms: 1,
            external_store_hourly_price: 0.0,
            vm_cold_boot_s: 0.0,
            sl_boot_s: 0.0,
            sl_overhead_factor: 1.0,
            max_vm: 8,
            max_sl: 8,
        };
        let q = QuerySpec { n_tasks, task_service_s: svc, slots_per_instance: slots };
        let vm = simulate(&q, FleetConfig::new(k, 0), Policy::VmOnly, &p).unwrap();
        let sl = simulate(&q, FleetConfig::new(0, k), Policy::SlOnly, &p).unwrap();
        prop_assert_eq!(vm.completion_s, sl.completion_s);
    }
}
