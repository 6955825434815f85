// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{from_micros, to_micros, Policy, QuerySpec};
use crate::domain::{FleetConfig, ProviderProfile};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InstanceKind {
    // Declaration order is the dispatch tie-break: VM slots first.
    Vm,
    Sl,
}

/// Lifecycle of one launched instance. Serverless instances carry a
/// request-style id, VMs an instance-style id; a relayed serverless instance
/// names its VM peer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub kind: InstanceKind,
    pub launch_s: f64,
    pub ready_s: f64,
    pub terminate_s: f64,
    pub relay_peer: Option<String>,
    pub tasks: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskRecord {
    /// Index into the instance list.
    pub instance: usize,
    pub slot: u32,
    pub start_us: i64,
    pub end_us: i64,
}

pub(super) struct Schedule {
    pub makespan_us: i64,
    pub instances: Vec<InstanceRecord>,
    pub tasks: Vec<TaskRecord>,
}

impl Schedule {
    pub fn tasks_on(&self, kind: InstanceKind) -> u32 {
        self.tasks
            .iter()
            .filter(|t| self.instances[t.instance].kind == kind)
            .count() as u32
    }
}

struct Slot {
    instance: usize,
    slot: u32,
    free_us: i64,
    duration_us: i64,
    /// Last instant (exclusive) at which this slot may start a task.
    accept_until_us: Option<i64>,
}

impl Slot {
    fn accepts(&self) -> bool {
        self.accept_until_us.is_none_or(|t| self.free_us < t)
    }
}

pub(super) fn run(
    query: &QuerySpec,
    fleet: FleetConfig,
    policy: Policy,
    profile: &ProviderProfile,
) -> Result<Schedule> {
    let vm_ready_us = to_micros(profile.vm_cold_boot_s);
    let sl_ready_us = to_micros(profile.sl_boot_s);
    let vm_task_us = to_micros(query.task_service_s).max(1);
    let sl_task_us = to_micros(query.task_service_s * profile.sl_overhead_factor).max(1);

    let n_vm = fleet.n_vm as usize;
    let n_sl = fleet.n_sl as usize;
    let mut instances = Vec::with_capacity(n_vm + n_sl);
    let mut stop_us: Vec<Option<i64>> = Vec::with_capacity(n_vm + n_sl);

    for v in 0..n_vm {
        instances.push(InstanceRecord {
            id: format!("i-{:08x}", v + 1),
            kind: InstanceKind::Vm,
            launch_s: 0.0,
            ready_s: profile.vm_cold_boot_s,
            terminate_s: 0.0,
            relay_peer: None,
            tasks: 0,
        });
        stop_us.push(None);
    }
    for s in 0..n_sl {
        let (stop, peer) = match policy {
            Policy::HybridRelay if s < n_vm => (Some(vm_ready_us), Some(instances[s].id.clone())),
            Policy::SegueStatic { segue_timeout_s } => (Some(to_micros(segue_timeout_s)), None),
            _ => (None, None),
        };
        instances.push(InstanceRecord {
            id: format!("req-{:06}", s + 1),
            kind: InstanceKind::Sl,
            launch_s: 0.0,
            ready_s: profile.sl_boot_s,
            terminate_s: 0.0,
            relay_peer: peer,
            tasks: 0,
        });
        stop_us.push(stop);
    }

    let mut slots = Vec::with_capacity(instances.len() * query.slots_per_instance as usize);
    for (idx, inst) in instances.iter().enumerate() {
        let (free_us, duration_us) = match inst.kind {
            InstanceKind::Vm => (vm_ready_us, vm_task_us),
            InstanceKind::Sl => (sl_ready_us, sl_task_us),
        };
        for slot in 0..query.slots_per_instance {
            slots.push(Slot {
                instance: idx,
                slot,
                free_us,
                duration_us,
                accept_until_us: stop_us[idx],
            });
        }
    }

    // Min-heap on (completion, kind, instance, slot).
    let key = |i: usize, s: &Slot, inst: &[InstanceRecord]| {
        Reverse((
            s.free_us + s.duration_us,
            inst[s.instance].kind,
            s.instance,
            s.slot,
            i,
        ))
    };
    let mut heap: BinaryHeap<_> = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.accepts())
        .map(|(i, s)| key(i, s, &instances))
        .collect();

    let mut tasks = Vec::with_capacity(query.n_tasks as usize);
    let mut last_end = vec![0i64; instances.len()];
    for _ in 0..query.n_tasks {
        let Reverse((end_us, _, instance, slot, i)) = heap
            .pop()
            .ok_or_else(|| Error::Domain("no instance can accept the remaining tasks".into()))?;
        let s = &mut slots[i];
        tasks.push(TaskRecord {
            instance,
            slot,
            start_us: s.free_us,
            end_us,
        });
        s.free_us = end_us;
        instances[instance].tasks += 1;
        last_end[instance] = last_end[instance].max(end_us);
        if s.accepts() {
            heap.push(key(i, s, &instances));
        }
    }

    let makespan_us = tasks.iter().map(|t| t.end_us).max().unwrap_or(0);
    let completion_s = from_micros(makespan_us);
    for (idx, inst) in instances.iter_mut().enumerate() {
        inst.terminate_s = match (inst.kind, stop_us[idx]) {
            (InstanceKind::Sl, Some(stop)) if stop <= makespan_us => {
                from_micros(stop.max(last_end[idx]))
            }
            _ => completion_s,
        };
    }

    Ok(Schedule {
        makespan_us,
        instances,
        tasks,
    })
}
