// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{FleetConfig, QueryFeatures, WorkloadSample};
use crate::error::{Error, Result};

/// Expands `samples` into `factor` jittered copies each.
///
/// Every numeric field, the label included, is scaled by its own uniform
/// draw from `[1 - jitter, 1 + jitter]`. Integer fields are rounded and then
/// clamped to the integers inside that band, so they never leave it. The
/// input is shuffled before expansion and the result shuffled again.
pub fn augment(
    samples: &[WorkloadSample],
    factor: usize,
    jitter: f64,
    seed: u64,
) -> Result<Vec<WorkloadSample>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("augment needs at least one sample"));
    }
    if factor == 0 {
        return Err(Error::Domain("augment factor must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&jitter) {
        return Err(Error::Domain(format!(
            "jitter must be in [0, 1), got {jitter}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut source = samples.to_vec();
    source.shuffle(&mut rng);

    let mut out = Vec::with_capacity(source.len() * factor);
    for s in &source {
        for _ in 0..factor {
            out.push(jitter_sample(s, jitter, &mut rng));
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

fn jitter_sample<R: Rng>(s: &WorkloadSample, jitter: f64, rng: &mut R) -> WorkloadSample {
    let mut scale = |v: f64| {
        if jitter == 0.0 {
            v
        } else {
            v * rng.random_range(1.0 - jitter..=1.0 + jitter)
        }
    };
    let f = &s.features;
    let n_vm = scale(f64::from(f.instances.n_vm));
    let n_sl = scale(f64::from(f.instances.n_sl));
    let input = scale(f.input_size_bytes as f64);
    let start = scale(f.start_time_epoch as f64);
    let total_mem = scale(f.total_memory_mb as f64);
    let avail_mem = scale(f.available_memory_mb as f64);
    let exec_mem = scale(f.memory_per_executor_mb as f64);
    let waiting = scale(f64::from(f.num_waiting_apps));
    let cores = scale(f64::from(f.total_available_cores));
    let label = scale(s.query_duration_s);

    let total_memory_mb = int_in_band(total_mem, f.total_memory_mb as f64, jitter);
    let features = QueryFeatures {
        query_id: f.query_id.clone(),
        instances: FleetConfig::new(
            int_in_band(n_vm, f64::from(f.instances.n_vm), jitter) as u32,
            int_in_band(n_sl, f64::from(f.instances.n_sl), jitter) as u32,
        ),
        input_size_bytes: int_in_band(input, f.input_size_bytes as f64, jitter),
        start_time_epoch: int_in_band(start, f.start_time_epoch as f64, jitter),
        total_memory_mb,
        available_memory_mb: int_in_band(avail_mem, f.available_memory_mb as f64, jitter)
            .min(total_memory_mb),
        memory_per_executor_mb: int_in_band(exec_mem, f.memory_per_executor_mb as f64, jitter),
        num_waiting_apps: int_in_band(waiting, f64::from(f.num_waiting_apps), jitter) as u32,
        total_available_cores: int_in_band(cores, f64::from(f.total_available_cores), jitter)
            as u32,
    };
    WorkloadSample {
        features,
        query_duration_s: label,
    }
}

fn int_in_band(scaled: f64, source: f64, jitter: f64) -> u64 {
    let lo = (source * (1.0 - jitter)).ceil();
    let hi = (source * (1.0 + jitter)).floor();
    scaled.round().clamp(lo, hi) as u64
}
