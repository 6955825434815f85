// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! Request-level workflow: route the query, assemble features, search,
//! apply the knob, and after execution record the run and check drift.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::bo::{search, select_with_knob, SearchSettings, Termination};
use crate::config::EngineConfig;
use crate::domain::{FleetConfig, ProviderProfile, QueryFeatures, WorkloadSample};
use crate::dynamics::{check_trigger, DriftEvent, DriftLog, ModelHandle, RetrainMonitor};
use crate::error::{Error, Result};
use crate::history::HistoryStore;
use crate::money::Money;
use crate::sim::{simulate, Policy, QuerySpec, SimOutcome};
use crate::similarity::{extract_signature, nearest_known};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    #[serde(default)]
    pub n_map_tasks: u32,
    pub input_size_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relay: Option<bool>,
}

impl PlanRequest {
    pub fn known(query_id: impl Into<String>, input_size_bytes: u64) -> Self {
        PlanRequest {
            query_id: Some(query_id.into()),
            input_size_bytes,
            ..PlanRequest::default()
        }
    }

    pub fn alien(query_text: impl Into<String>, n_map_tasks: u32, input_size_bytes: u64) -> Self {
        PlanRequest {
            query_text: Some(query_text.into()),
            n_map_tasks,
            input_size_bytes,
            ..PlanRequest::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.query_text.is_some() == self.query_id.is_some() {
            return Err(Error::Planning(
                "exactly one of query_text and query_id must be given".into(),
            ));
        }
        if let Some(e) = self.epsilon {
            if !(e.is_finite() && e >= 0.0) {
                return Err(Error::Domain(format!("epsilon must be >= 0, got {e}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub fleet: FleetConfig,
    pub predicted_time_s: f64,
    pub estimated_cost: Money,
    pub matched_query_id: String,
    pub similarity_score: f64,
    pub search_evaluations: usize,
    pub model_version: u64,
    pub best_time_s: f64,
    pub best_cost: Money,
    pub terminated_by: Termination,
    pub epsilon: f64,
    pub relay: bool,
    /// Features the prediction was made from, with `fleet` filled in.
    pub features: QueryFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub outcome: SimOutcome,
    pub drift: DriftEvent,
    pub retrain_scheduled: bool,
}

/// Planning state for one run directory.
pub struct Planner {
    handle: Arc<ModelHandle>,
    history: Arc<HistoryStore>,
    drift_log: DriftLog,
    config: EngineConfig,
    profile: ProviderProfile,
    seed: u64,
    monitor: Option<RetrainMonitor>,
}

impl Planner {
    pub fn new(
        handle: Arc<ModelHandle>,
        history: Arc<HistoryStore>,
        config: EngineConfig,
        profile: ProviderProfile,
    ) -> Result<Self> {
        config.validate()?;
        profile.validate()?;
        let drift_log = DriftLog::beside(history.path());
        Ok(Planner {
            handle,
            history,
            drift_log,
            config,
            profile,
            seed: 0,
            monitor: None,
        })
    }

    /// Seed of the search's initial design.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_monitor(mut self, monitor: RetrainMonitor) -> Self {
        self.monitor = Some(monitor);
        self
    }

    pub fn handle(&self) -> &Arc<ModelHandle> {
        &self.handle
    }

    pub fn monitor(&self) -> Option<&RetrainMonitor> {
        self.monitor.as_ref()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    pub fn drift_log(&self) -> &DriftLog {
        &self.drift_log
    }

    pub fn plan(&self, request: &PlanRequest) -> Result<PlanResponse> {
        request.validate()?;
        let model = self.handle.current();
        if !model.is_trained() {
            return Err(Error::Untrained);
        }
        let registry = &model.known_queries;
        let (matched_query_id, similarity_score) = match (&request.query_id, &request.query_text) {
            (Some(id), _) if registry.contains_key(id) => (id.clone(), 1.0),
            (Some(id), _) => return Err(Error::UnknownQuery(id.clone())),
            (None, Some(text)) => {
                if registry.is_empty() {
                    return Err(Error::Planning(
                        "no known queries to route an alien query to".into(),
                    ));
                }
                let sig = extract_signature(text, request.n_map_tasks)?;
                nearest_known(&sig, registry)?
            }
            (None, None) => unreachable!("validated"),
        };

        let base = self.features_for(&matched_query_id, request.input_size_bytes)?;
        let epsilon = request.epsilon.unwrap_or(self.config.compute_knob);
        let relay = request.relay.unwrap_or(self.config.compute_relay);
        let settings = SearchSettings {
            seed: self.seed,
            relay,
            ..SearchSettings::default()
        };
        let result = search(&model, &base, &self.profile, &settings)?;
        let chosen = select_with_knob(&result, epsilon)?;
        log::debug!(
            "{matched_query_id}: {} after {} evaluations ({})",
            chosen.fleet,
            result.n_evaluations,
            result.terminated_by
        );
        Ok(PlanResponse {
            fleet: chosen.fleet,
            predicted_time_s: chosen.est_time_s,
            estimated_cost: chosen.est_cost,
            matched_query_id,
            similarity_score,
            search_evaluations: result.n_evaluations,
            model_version: model.version,
            best_time_s: result.best.est_time_s,
            best_cost: result.best.est_cost,
            terminated_by: result.terminated_by,
            epsilon,
            relay,
            features: base.with_fleet(chosen.fleet),
        })
    }

    /// Cluster state from the latest recorded run of `query_id`, with the
    /// request's input size. Without history a nominal idle cluster is used.
    fn features_for(&self, query_id: &str, input_size_bytes: u64) -> Result<QueryFeatures> {
        let latest = self.history.latest_features_for(query_id, 1)?;
        let mut features = match latest.into_iter().next() {
            Some(s) => s.features,
            None => QueryFeatures {
                query_id: query_id.to_string(),
                instances: FleetConfig::new(0, 0),
                input_size_bytes,
                start_time_epoch: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                total_memory_mb: 65_536,
                available_memory_mb: 65_536,
                memory_per_executor_mb: 2048,
                num_waiting_apps: 0,
                total_available_cores: 16,
            },
        };
        features.input_size_bytes = input_size_bytes;
        Ok(features)
    }

    /// Runs `plan` on the simulator, appends the run to history and checks
    /// the prediction error; a violation schedules a retrain.
    pub fn execute_and_record(
        &self,
        plan: &PlanResponse,
        query: &QuerySpec,
    ) -> Result<ExecutionRecord> {
        let outcome = simulate(query, plan.fleet, Policy::hybrid(plan.relay), &self.profile)?;
        let sample =
            WorkloadSample::new(plan.features.with_fleet(plan.fleet), outcome.completion_s)?;
        self.history.append(&sample)?;
        let drift = check_trigger(
            &plan.matched_query_id,
            plan.predicted_time_s,
            outcome.completion_s,
            self.config.train_error_difference_trigger_s,
        )?;
        self.drift_log.append(&drift)?;
        let retrain_scheduled = drift.triggered
            && self
                .monitor
                .as_ref()
                .is_some_and(|m| m.schedule(drift.clone()));
        Ok(ExecutionRecord {
            outcome,
            drift,
            retrain_scheduled,
        })
    }
}
