// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! Execution and billing model of one query on a hybrid VM/serverless fleet.
//!
//! A query is a bag of identical tasks. Every instance exposes
//! `slots_per_instance` slots; a slot runs one task at a time, taking
//! `task_service_s` on a VM and `task_service_s * sl_overhead_factor` on a
//! serverless instance. VM slots open after the cold boot, serverless slots
//! after `sl_boot_s`.
//!
//! Tasks are dispatched earliest-completion-first: each task goes to the slot
//! that would finish it soonest, ties preferring VM slots, then the lowest
//! instance id, then the lowest slot index. For identical tasks this yields
//! the minimum makespan over all dispatch orders, so adding an instance never
//! delays the query.
//!
//! Serverless instances can stop accepting tasks: under relaying when the
//! paired VM becomes ready, under static segueing at a fixed timeout. A
//! stopping instance always finishes its in-flight task.
//!
//! Time is tracked in integer microseconds, which makes outcomes
//! bit-reproducible.

mod schedule;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{fleet_grid, CostBreakdown, FleetConfig, ProviderProfile};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::money::Money;

pub use schedule::{InstanceKind, InstanceRecord, TaskRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub n_tasks: u32,
    pub task_service_s: f64,
    #[serde(default = "one")]
    pub slots_per_instance: u32,
}

fn one() -> u32 {
    1
}

impl QuerySpec {
    pub fn new(n_tasks: u32, task_service_s: f64) -> Self {
        QuerySpec {
            n_tasks,
            task_service_s,
            slots_per_instance: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.task_service_s.is_finite() && self.task_service_s > 0.0) {
            return Err(Error::Domain("task_service_s must be positive".into()));
        }
        if self.slots_per_instance == 0 {
            return Err(Error::Domain("slots_per_instance must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Policy {
    SlOnly,
    VmOnly,
    /// Serverless instances run until the query finishes.
    HybridKeep,
    /// Each serverless instance with a VM peer stops when that VM is ready.
    HybridRelay,
    /// Every serverless instance stops at a fixed timeout; the fleet must
    /// hold equal numbers of VMs and serverless instances.
    SegueStatic {
        segue_timeout_s: f64,
    },
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::SlOnly => "SL_ONLY",
            Policy::VmOnly => "VM_ONLY",
            Policy::HybridKeep => "HYBRID_KEEP",
            Policy::HybridRelay => "HYBRID_RELAY",
            Policy::SegueStatic { .. } => "SEGUE_STATIC",
        }
    }

    /// The hybrid policy implied by the relay switch.
    pub fn hybrid(relay: bool) -> Policy {
        if relay {
            Policy::HybridRelay
        } else {
            Policy::HybridKeep
        }
    }

    fn check(&self, fleet: FleetConfig) -> Result<()> {
        let mismatch = |reason| Error::PolicyMismatch {
            policy: self.name(),
            n_vm: fleet.n_vm,
            n_sl: fleet.n_sl,
            reason,
        };
        if fleet.is_empty() {
            return Err(Error::EmptyFleet);
        }
        match *self {
            Policy::SlOnly if fleet.n_vm != 0 => Err(mismatch("requires n_vm = 0")),
            Policy::VmOnly if fleet.n_sl != 0 => Err(mismatch("requires n_sl = 0")),
            Policy::SegueStatic { segue_timeout_s } => {
                if !(segue_timeout_s.is_finite() && segue_timeout_s > 0.0) {
                    Err(mismatch("requires a positive timeout"))
                } else if fleet.n_vm != fleet.n_sl {
                    Err(mismatch("requires n_sl = n_vm"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::SegueStatic { segue_timeout_s } => {
                write!(f, "SEGUE_STATIC({segue_timeout_s}s)")
            }
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    /// Accepts `SL_ONLY`, `VM_ONLY`, `HYBRID_KEEP`, `HYBRID_RELAY` and
    /// `SEGUE_STATIC:<timeout_s>` (case-insensitive, `-` or `_`).
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        let (head, arg) = match norm.split_once(':') {
            Some((h, a)) => (h.to_string(), Some(a.to_string())),
            None => (norm, None),
        };
        match (head.as_str(), arg) {
            ("SL_ONLY", None) => Ok(Policy::SlOnly),
            ("VM_ONLY", None) => Ok(Policy::VmOnly),
            ("HYBRID_KEEP", None) => Ok(Policy::HybridKeep),
            ("HYBRID_RELAY", None) => Ok(Policy::HybridRelay),
            ("SEGUE_STATIC", Some(t)) => t
                .parse()
                .map(|segue_timeout_s| Policy::SegueStatic { segue_timeout_s })
                .map_err(|_| Error::Domain(format!("bad segue timeout `{t}`"))),
            _ => Err(Error::Domain(format!("unknown policy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub completion_s: f64,
    pub cost: CostBreakdown,
    pub tasks_on_sl: u32,
    pub tasks_on_vm: u32,
    pub sl_busy_seconds: f64,
    /// VM-seconds billed, summed over all VMs.
    pub vm_billed_seconds: f64,
}

impl SimOutcome {
    fn idle() -> Self {
        SimOutcome {
            completion_s: 0.0,
            cost: CostBreakdown::default(),
            tasks_on_sl: 0,
            tasks_on_vm: 0,
            sl_busy_seconds: 0.0,
            vm_billed_seconds: 0.0,
        }
    }
}

/// A simulation outcome with the per-instance and per-task event trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub outcome: SimOutcome,
    pub instances: Vec<InstanceRecord>,
    pub tasks: Vec<TaskRecord>,
    /// Serverless billed milliseconds, summed over tasks.
    pub sl_billed_ms: u64,
}

pub(crate) fn to_micros(seconds: f64) -> i64 {
    (seconds * 1e6).round() as i64
}

pub(crate) fn from_micros(us: i64) -> f64 {
    us as f64 / 1e6
}

pub fn simulate(
    query: &QuerySpec,
    fleet: FleetConfig,
    policy: Policy,
    profile: &ProviderProfile,
) -> Result<SimOutcome> {
    simulate_traced(query, fleet, policy, profile).map(|t| t.outcome)
}

/// Like [`simulate`], also returning the instance and task records.
pub fn simulate_traced(
    query: &QuerySpec,
    fleet: FleetConfig,
    policy: Policy,
    profile: &ProviderProfile,
) -> Result<SimTrace> {
    query.validate()?;
    if query.n_tasks == 0 {
        return Ok(SimTrace {
            outcome: SimOutcome::idle(),
            instances: Vec::new(),
            tasks: Vec::new(),
            sl_billed_ms: 0,
        });
    }
    policy.check(fleet)?;

    let schedule = schedule::run(query, fleet, policy, profile)?;
    let completion_s = from_micros(schedule.makespan_us);
    let vm_billed_seconds = f64::from(fleet.n_vm) * completion_s;

    let granularity_us = profile.sl_billing_granularity_ms as i64 * 1000;
    let sl_billed_ms: u64 = schedule
        .tasks
        .iter()
        .filter(|t| schedule.instances[t.instance].kind == InstanceKind::Sl)
        .map(|t| {
            let busy = t.end_us - t.start_us;
            let units = (busy + granularity_us - 1) / granularity_us;
            (units as u64) * profile.sl_billing_granularity_ms
        })
        .sum();

    let tasks_on_sl = schedule.tasks_on(InstanceKind::Sl);
    let tasks_on_vm = query.n_tasks - tasks_on_sl;
    let sl_busy_us: i64 = schedule
        .tasks
        .iter()
        .filter(|t| schedule.instances[t.instance].kind == InstanceKind::Sl)
        .map(|t| t.end_us - t.start_us)
        .sum();

    let vm_hours = vm_billed_seconds / 3600.0;
    let cost = CostBreakdown::new(
        Money::from_units(profile.vm_hourly_price * vm_hours),
        Money::from_units(profile.vm_storage_hourly_price * vm_hours),
        Money::from_units(
            profile.burstable_price_per_vcpu_hour
                * f64::from(profile.vcpus_per_instance)
                * vm_hours,
        ),
        Money::from_units(sl_billed_ms as f64 / 1000.0 * profile.sl_rate_per_second()),
        if tasks_on_sl > 0 {
            Money::from_units(profile.external_store_hourly_price * completion_s / 3600.0)
        } else {
            Money::ZERO
        },
    );

    Ok(SimTrace {
        outcome: SimOutcome {
            completion_s,
            cost,
            tasks_on_sl,
            tasks_on_vm,
            sl_busy_seconds: from_micros(sl_busy_us),
            vm_billed_seconds,
        },
        instances: schedule.instances,
        tasks: schedule.tasks,
        sl_billed_ms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub fleet: FleetConfig,
    pub outcome: SimOutcome,
}

/// Simulates every non-empty fleet up to the given bounds, in lexicographic
/// fleet order. Fails on the first fleet the policy cannot run.
pub fn sweep(
    query: &QuerySpec,
    profile: &ProviderProfile,
    policy: Policy,
    max_vm: u32,
    max_sl: u32,
) -> Result<Vec<SweepRow>> {
    sweep_with(Exec::default(), query, profile, policy, max_vm, max_sl)
}

pub fn sweep_with(
    exec: Exec,
    query: &QuerySpec,
    profile: &ProviderProfile,
    policy: Policy,
    max_vm: u32,
    max_sl: u32,
) -> Result<Vec<SweepRow>> {
    if max_vm == 0 && max_sl == 0 {
        return Err(Error::Domain(
            "sweep bounds must allow at least one instance".into(),
        ));
    }
    let grid = fleet_grid(max_vm, max_sl);
    exec.try_map(&grid, |&fleet| {
        simulate(query, fleet, policy, profile).map(|outcome| SweepRow { fleet, outcome })
    })
}

pub const SWEEP_CSV_HEADER: &str = "n_vm,n_sl,completion_s,total_cost,vm_cost,sl_cost";

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for row in rows {
        let c = &row.outcome.cost;
        writeln!(
            out,
            "{},{},{:.6},{},{},{}",
            row.fleet.n_vm,
            row.fleet.n_sl,
            row.outcome.completion_s,
            c.total,
            c.vm_total(),
            c.sl_compute
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
