// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! Drift detection and background retraining.
//!
//! A completed run is compared against its prediction; an absolute error
//! above the trigger schedules a retrain. One monitor thread runs retrains
//! one at a time. Triggers that arrive while a retrain is running collapse
//! into a single pending follow-up. The serving model sits behind a
//! [`ModelHandle`] and is replaced in one pointer swap after the new version
//! has been persisted.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Condvar, Mutex, MutexGuard, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::forest::{
    augment, fit, load_model, warm_retrain_with, ForestHyper, ModelStore, PredictionModel,
};
use crate::history::{append_lines, read_lines, HistoryStore, TraceDataset};

pub const DRIFT_LOG_FILE: &str = "drift.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub query_id: String,
    pub predicted_s: f64,
    pub actual_s: f64,
    pub abs_error_s: f64,
    /// Unix seconds.
    pub timestamp: u64,
    pub triggered: bool,
}

pub fn check_trigger(
    query_id: &str,
    predicted_s: f64,
    actual_s: f64,
    trigger_s: f64,
) -> Result<DriftEvent> {
    if !(trigger_s.is_finite() && trigger_s > 0.0) {
        return Err(Error::Domain(format!(
            "trigger must be positive, got {trigger_s}"
        )));
    }
    let abs_error_s = (predicted_s - actual_s).abs();
    Ok(DriftEvent {
        query_id: query_id.to_string(),
        predicted_s,
        actual_s,
        abs_error_s,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        triggered: abs_error_s > trigger_s,
    })
}

/// JSON-lines audit log of drift events, kept beside the history file.
#[derive(Debug)]
pub struct DriftLog {
    path: PathBuf,
    writer: Mutex<()>,
}

impl DriftLog {
    pub fn beside(history_path: &Path) -> Self {
        let dir = history_path.parent().unwrap_or_else(|| Path::new(""));
        DriftLog {
            path: dir.join(DRIFT_LOG_FILE),
            writer: Mutex::new(()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, event: &DriftEvent) -> Result<()> {
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        append_lines(&self.path, std::slice::from_ref(event))
    }

    pub fn read_all(&self) -> Result<Vec<DriftEvent>> {
        read_lines(&self.path)
    }
}

/// The serving model. Readers clone the `Arc` and keep using that version
/// for the whole request, so a swap never splits one prediction.
#[derive(Debug)]
pub struct ModelHandle {
    current: RwLock<Arc<PredictionModel>>,
}

impl ModelHandle {
    pub fn new(model: PredictionModel) -> Self {
        ModelHandle {
            current: RwLock::new(Arc::new(model)),
        }
    }

    pub fn current(&self) -> Arc<PredictionModel> {
        Arc::clone(&self.current.read().unwrap_or_else(|p| p.into_inner()))
    }

    pub fn version(&self) -> u64 {
        self.current().version
    }

    /// Installs `model` and returns the one it replaced.
    pub fn swap(&self, model: PredictionModel) -> Arc<PredictionModel> {
        let mut guard = self.current.write().unwrap_or_else(|p| p.into_inner());
        std::mem::replace(&mut *guard, Arc::new(model))
    }
}

/// How a retrain turns recent history into a new model version.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrainPolicy {
    pub augment_factor: usize,
    pub augment_jitter: f64,
    /// Fresh trees added per retrain, as a multiple of the current count.
    pub tree_multiplier: usize,
    /// Past this ensemble size the model is refitted from scratch instead.
    pub max_trees: usize,
    /// Tree count of a from-scratch refit.
    pub base_trees: usize,
    pub seed: u64,
}

impl Default for RetrainPolicy {
    fn default() -> Self {
        RetrainPolicy {
            augment_factor: 10,
            augment_jitter: 0.05,
            tree_multiplier: 9,
            max_trees: 1000,
            base_trees: ForestHyper::default().n_trees,
            seed: 0,
        }
    }
}

/// Builds the next model version from the most recent history.
pub fn run_retrain(
    current: &PredictionModel,
    history: &TraceDataset,
    config: &EngineConfig,
    policy: &RetrainPolicy,
) -> Result<PredictionModel> {
    run_retrain_with(Exec::default(), current, history, config, policy)
}

pub fn run_retrain_with(
    exec: Exec,
    current: &PredictionModel,
    history: &TraceDataset,
    config: &EngineConfig,
    policy: &RetrainPolicy,
) -> Result<PredictionModel> {
    if !current.is_trained() {
        return Err(Error::Untrained);
    }
    if history.is_empty() {
        return Err(Error::EmptyInput("retraining needs recorded history"));
    }
    let start = history.len().saturating_sub(config.train_max_batch.max(1));
    let seed = policy.seed ^ current.version.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let fresh = augment(
        &history.samples[start..],
        policy.augment_factor,
        policy.augment_jitter,
        seed,
    )?;

    let n_old = current.trees.len();
    let added = (policy.tree_multiplier * n_old).max(1);
    let hyper = ForestHyper {
        seed,
        ..current.hyper
    };
    if n_old + added <= policy.max_trees {
        return warm_retrain_with(
            exec,
            current,
            &fresh,
            &ForestHyper {
                n_trees: added,
                ..hyper
            },
        );
    }
    log::info!(
        "ensemble would reach {} trees; refitting v{} from scratch",
        n_old + added,
        current.version
    );
    let mut data = current.training_set.clone();
    data.extend(fresh);
    let refit = fit(
        exec,
        data,
        &ForestHyper {
            n_trees: policy.base_trees,
            ..hyper
        },
        current.version + 1,
    )?;
    Ok(refit.with_known_queries(current.known_queries.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    InProcess,
    Worker,
}

/// In-process only when asked for and enough memory is free.
pub fn decide_placement(config: &EngineConfig, available_gb: Option<f64>) -> Placement {
    match available_gb {
        Some(gb) if config.train_pref_same_instance && gb >= config.train_min_ram_gb => {
            Placement::InProcess
        }
        _ => Placement::Worker,
    }
}

/// `MemAvailable` from `/proc/meminfo`, where the platform has one.
pub fn available_memory_gb() -> Option<f64> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / (1024.0 * 1024.0))
}

/// A separate process that performs one retrain.
///
/// It is invoked as `program args.. --model M --history H --config C --seed S
/// --out O`, must write the new model as JSON to `O` and exit with status 0.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerCommand {
    pub program: PathBuf,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RetrainSettings {
    pub policy: RetrainPolicy,
    /// Used for [`Placement::Worker`]; without it the worker is a thread.
    pub worker: Option<WorkerCommand>,
    /// Overrides the placement decision, mostly for tests.
    pub placement: Option<Placement>,
}

/// One complete retrain: read history, build, persist, then swap. Any
/// failure leaves the serving model untouched. Returns the new version.
pub fn retrain_and_publish(
    handle: &ModelHandle,
    store: &ModelStore,
    history: &HistoryStore,
    config: &EngineConfig,
    settings: &RetrainSettings,
) -> Result<u64> {
    let current = handle.current();
    let data = history.read_all()?;
    let placement = settings
        .placement
        .unwrap_or_else(|| decide_placement(config, available_memory_gb()));
    log::info!(
        "retraining v{} on {} samples ({placement:?})",
        current.version,
        data.len()
    );
    let next = match (placement, &settings.worker) {
        (Placement::InProcess, _) => {
            catch_panic(|| run_retrain(&current, &data, config, &settings.policy))?
        }
        (Placement::Worker, None) => {
            let (current, config, policy) = (Arc::clone(&current), config.clone(), settings.policy);
            std::thread::Builder::new()
                .name("retrain-worker".into())
                .spawn(move || run_retrain(&current, &data, &config, &policy))
                .map_err(Error::Io)?
                .join()
                .map_err(|_| Error::Retrain("retrain worker panicked".into()))??
        }
        (Placement::Worker, Some(cmd)) => run_worker_process(
            cmd,
            store,
            &current,
            history.path(),
            config,
            &settings.policy,
        )?,
    };
    if next.version <= current.version {
        return Err(Error::Retrain(format!(
            "worker returned v{} for v{}",
            next.version, current.version
        )));
    }
    store.save(&next)?;
    let version = next.version;
    handle.swap(next);
    log::info!("serving model v{version}");
    Ok(version)
}

fn catch_panic<T>(f: impl FnOnce() -> Result<T>) -> Result<T> {
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
        .unwrap_or_else(|_| Err(Error::Retrain("retrain panicked".into())))
}

fn run_worker_process(
    cmd: &WorkerCommand,
    store: &ModelStore,
    current: &PredictionModel,
    history_path: &Path,
    config: &EngineConfig,
    policy: &RetrainPolicy,
) -> Result<PredictionModel> {
    let scratch = store.dir().join(format!(
        ".retrain-{}-v{}",
        std::process::id(),
        current.version
    ));
    std::fs::create_dir_all(&scratch).map_err(|e| Error::storage(&scratch, e))?;
    let result = (|| {
        let model_path = scratch.join("input.json");
        let config_path = scratch.join("engine.properties");
        let out_path = scratch.join("output.json");
        std::fs::write(&model_path, serde_json::to_vec(current)?)
            .map_err(|e| Error::storage(&model_path, e))?;
        config.save(&config_path)?;
        let status = Command::new(&cmd.program)
            .args(&cmd.args)
            .arg("--model")
            .arg(&model_path)
            .arg("--history")
            .arg(history_path)
            .arg("--config")
            .arg(&config_path)
            .arg("--seed")
            .arg(policy.seed.to_string())
            .arg("--out")
            .arg(&out_path)
            .status()?;
        if !status.success() {
            return Err(Error::Retrain(format!("worker exited with {status}")));
        }
        load_model(&out_path)
    })();
    let _ = std::fs::remove_dir_all(&scratch);
    result
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorStatus {
    pub pending: bool,
    pub running: bool,
    pub completed: u64,
    pub failed: u64,
    pub last_error: Option<String>,
}

#[derive(Debug, Default)]
struct State {
    pending: Option<DriftEvent>,
    status: MonitorStatus,
    shutdown: bool,
}

struct Shared {
    state: Mutex<State>,
    changed: Condvar,
    handle: Arc<ModelHandle>,
    store: ModelStore,
    history: Arc<HistoryStore>,
    config: EngineConfig,
    settings: RetrainSettings,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Background retraining with at most one run in flight and one pending.
pub struct RetrainMonitor {
    shared: Arc<Shared>,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl RetrainMonitor {
    pub fn spawn(
        handle: Arc<ModelHandle>,
        store: ModelStore,
        history: Arc<HistoryStore>,
        config: EngineConfig,
        settings: RetrainSettings,
    ) -> Result<Self> {
        let shared = Arc::new(Shared {
            state: Mutex::new(State::default()),
            changed: Condvar::new(),
            handle,
            store,
            history,
            config,
            settings,
        });
        let worker = Arc::clone(&shared);
        let thread = std::thread::Builder::new()
            .name("retrain-monitor".into())
            .spawn(move || monitor_loop(&worker))?;
        Ok(RetrainMonitor {
            shared,
            thread: Mutex::new(Some(thread)),
        })
    }

    /// Queues a retrain for `event`. A still-pending request is replaced.
    /// Returns false once the monitor is shutting down.
    pub fn schedule(&self, event: DriftEvent) -> bool {
        let mut state = self.shared.lock();
        if state.shutdown {
            return false;
        }
        state.pending = Some(event);
        state.status.pending = true;
        self.shared.changed.notify_all();
        true
    }

    pub fn status(&self) -> MonitorStatus {
        self.shared.lock().status.clone()
    }

    /// Blocks until nothing is pending or running, or the timeout passes.
    pub fn wait_idle(&self, timeout: Duration) -> MonitorStatus {
        let state = self.shared.lock();
        let (state, _) = self
            .shared
            .changed
            .wait_timeout_while(state, timeout, |s| s.status.pending || s.status.running)
            .unwrap_or_else(|p| p.into_inner());
        state.status.clone()
    }

    /// Stops after the run in flight, dropping anything pending.
    pub fn shutdown(&self) {
        {
            let mut state = self.shared.lock();
            state.shutdown = true;
            state.pending = None;
            state.status.pending = false;
            self.shared.changed.notify_all();
        }
        let thread = self.thread.lock().unwrap_or_else(|p| p.into_inner()).take();
        if let Some(t) = thread {
            let _ = t.join();
        }
    }
}

impl Drop for RetrainMonitor {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn monitor_loop(shared: &Shared) {
    loop {
        let event = {
            let mut state = shared.lock();
            while state.pending.is_none() && !state.shutdown {
                state = shared
                    .changed
                    .wait(state)
                    .unwrap_or_else(|p| p.into_inner());
            }
            if state.shutdown {
                return;
            }
            state.status.pending = false;
            state.status.running = true;
            state.pending.take()
        };
        if let Some(e) = &event {
            log::info!(
                "drift on {}: |{:.1} - {:.1}| s",
                e.query_id,
                e.predicted_s,
                e.actual_s
            );
        }
        let result = catch_panic(|| {
            retrain_and_publish(
                &shared.handle,
                &shared.store,
                &shared.history,
                &shared.config,
                &shared.settings,
            )
        });
        let mut state = shared.lock();
        state.status.running = false;
        match result {
            Ok(_) => state.status.completed += 1,
            Err(e) => {
                log::warn!("retrain failed: {e}");
                state.status.failed += 1;
                state.status.last_error = Some(e.to_string());
            }
        }
        shared.changed.notify_all();
    }
}
