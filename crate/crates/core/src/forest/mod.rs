// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! Random-forest regressor over [`QueryFeatures`].
//!
//! Trees are bagged CART regressors using all features at every split.
//! Each tree draws its bootstrap sample from its own seeded stream, so a
//! forest is identical whether its trees are fitted sequentially or in
//! parallel.

mod augment;
mod store;
mod tree;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{QueryFeatures, WorkloadSample, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::similarity::Registry;

pub use augment::augment;
pub use store::{load_model, ModelStore, REGISTRY_FILE};
pub use tree::{Node, RegressionTree};

use tree::{Row, TreeParams};

pub const MIN_TRAINING_SAMPLES: usize = 10;
pub const DEFAULT_WINDOW_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestHyper {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
    /// Resample rows with replacement per tree; when off every tree sees the
    /// full training set.
    pub bootstrap: bool,
}

impl Default for ForestHyper {
    fn default() -> Self {
        ForestHyper {
            n_trees: 100,
            max_depth: Some(12),
            min_leaf: 2,
            seed: 0,
            bootstrap: true,
        }
    }
}

impl ForestHyper {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Training("n_trees must be >= 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Training("min_leaf must be >= 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Training("max_depth must be >= 1".into()));
        }
        Ok(())
    }

    fn params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub rmse_train: f64,
    pub target_min: f64,
    pub target_max: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub rmse: f64,
    pub within_window_accuracy: f64,
    pub window_s: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionModel {
    pub version: u64,
    pub feature_order: Vec<String>,
    pub trees: Vec<RegressionTree>,
    pub training_stats: TrainingStats,
    pub known_queries: Registry,
    pub hyper: ForestHyper,
    /// Rows the ensemble was fitted on; warm retraining refits on these plus
    /// the new samples.
    pub training_set: Vec<WorkloadSample>,
}

impl PredictionModel {
    /// A model with no trees. Every prediction fails with
    /// [`Error::Untrained`].
    pub fn untrained() -> Self {
        PredictionModel {
            version: 0,
            feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            trees: Vec::new(),
            training_stats: TrainingStats {
                rmse_train: 0.0,
                target_min: 0.0,
                target_max: 0.0,
                n_samples: 0,
            },
            known_queries: Registry::new(),
            hyper: ForestHyper::default(),
            training_set: Vec::new(),
        }
    }

    pub fn is_trained(&self) -> bool {
        !self.trees.is_empty()
    }

    pub fn with_known_queries(mut self, registry: Registry) -> Self {
        self.known_queries = registry;
        self
    }

    pub fn predict(&self, features: &QueryFeatures) -> Result<f64> {
        if !self.is_trained() {
            return Err(Error::Untrained);
        }
        // Clamping only absorbs rounding in the mean; leaf values already lie in range.
        let stats = &self.training_stats;
        Ok(self
            .predict_row(&features.to_vector())
            .clamp(stats.target_min, stats.target_max))
    }

    /// Per-tree predictions, in ensemble order.
    pub fn tree_predictions(&self, features: &QueryFeatures) -> Result<Vec<f64>> {
        if !self.is_trained() {
            return Err(Error::Untrained);
        }
        let row = features.to_vector();
        Ok(self.trees.iter().map(|t| t.predict(&row)).collect())
    }

    fn predict_row(&self, row: &Row) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Splits `samples` after a seeded shuffle; the first part holds
/// `round(split * n)` samples, clamped so both parts are non-empty.
pub fn split_samples(
    samples: &[WorkloadSample],
    split: f64,
    seed: u64,
) -> Result<(Vec<WorkloadSample>, Vec<WorkloadSample>)> {
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::Training(format!(
            "split must be in (0, 1), got {split}"
        )));
    }
    if samples.len() < 2 {
        return Err(Error::Training("need at least two samples to split".into()));
    }
    let mut shuffled = samples.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((split * samples.len() as f64).round() as usize).clamp(1, samples.len() - 1);
    let test = shuffled.split_off(n_train);
    Ok((shuffled, test))
}

pub fn train(
    samples: &[WorkloadSample],
    split: f64,
    hyper: &ForestHyper,
) -> Result<(PredictionModel, TrainReport)> {
    train_with(Exec::default(), samples, split, hyper)
}

pub fn train_with(
    exec: Exec,
    samples: &[WorkloadSample],
    split: f64,
    hyper: &ForestHyper,
) -> Result<(PredictionModel, TrainReport)> {
    if samples.len() < MIN_TRAINING_SAMPLES {
        return Err(Error::Training(format!(
            "need at least {MIN_TRAINING_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    for s in samples {
        s.validate()?;
    }
    hyper.validate()?;
    let (train_set, test_set) = split_samples(samples, split, hyper.seed)?;
    let model = fit(exec, train_set, hyper, 1)?;
    let report = evaluate(&model, &test_set, DEFAULT_WINDOW_S)?;
    Ok((
        model,
        TrainReport {
            n_train: samples.len() - test_set.len(),
            ..report
        },
    ))
}

/// Fits a fresh ensemble on all of `samples` (no held-out split).
pub fn fit(
    exec: Exec,
    samples: Vec<WorkloadSample>,
    hyper: &ForestHyper,
    version: u64,
) -> Result<PredictionModel> {
    if samples.is_empty() {
        return Err(Error::Training("no samples to fit".into()));
    }
    hyper.validate()?;
    let trees = grow_trees(exec, &samples, hyper, hyper.n_trees, 0);
    let mut model = PredictionModel {
        version,
        trees,
        hyper: *hyper,
        ..PredictionModel::untrained()
    };
    model.training_stats = training_stats(&model, &samples);
    model.training_set = samples;
    Ok(model)
}

fn grow_trees(
    exec: Exec,
    samples: &[WorkloadSample],
    hyper: &ForestHyper,
    count: usize,
    offset: usize,
) -> Vec<RegressionTree> {
    let x: Vec<Row> = samples.iter().map(|s| s.features.to_vector()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.query_duration_s).collect();
    let n = samples.len();
    let params = hyper.params();
    exec.map_range(count, |k| {
        let idx = if hyper.bootstrap {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(hyper.seed, offset + k));
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        RegressionTree::fit(&x, &y, idx, params)
    })
}

fn tree_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer, so neighbouring indices get unrelated streams.
    let mut z = seed
        ^ (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn training_stats(model: &PredictionModel, samples: &[WorkloadSample]) -> TrainingStats {
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.query_duration_s), hi.max(s.query_duration_s))
        });
    let mse = samples
        .iter()
        .map(|s| (model.predict_row(&s.features.to_vector()) - s.query_duration_s).powi(2))
        .sum::<f64>()
        / samples.len() as f64;
    TrainingStats {
        rmse_train: mse.sqrt(),
        target_min: lo,
        target_max: hi,
        n_samples: samples.len(),
    }
}

pub fn evaluate(
    model: &PredictionModel,
    test: &[WorkloadSample],
    window_s: f64,
) -> Result<TrainReport> {
    if test.is_empty() {
        return Err(Error::EmptyInput("evaluation needs at least one sample"));
    }
    let mut sq = 0.0;
    let mut hits = 0usize;
    for s in test {
        let err = model.predict(&s.features)? - s.query_duration_s;
        sq += err * err;
        if err.abs() <= window_s {
            hits += 1;
        }
    }
    Ok(TrainReport {
        rmse: (sq / test.len() as f64).sqrt(),
        within_window_accuracy: hits as f64 / test.len() as f64,
        window_s,
        n_train: model.training_stats.n_samples,
        n_test: test.len(),
    })
}

/// Returns a new model holding the old trees plus `hyper.n_trees` trees
/// fitted on the old training set extended by `new_samples`. The input model
/// is not modified.
pub fn warm_retrain(
    model: &PredictionModel,
    new_samples: &[WorkloadSample],
    hyper: &ForestHyper,
) -> Result<PredictionModel> {
    warm_retrain_with(Exec::default(), model, new_samples, hyper)
}

pub fn warm_retrain_with(
    exec: Exec,
    model: &PredictionModel,
    new_samples: &[WorkloadSample],
    hyper: &ForestHyper,
) -> Result<PredictionModel> {
    if !model.is_trained() {
        return Err(Error::Untrained);
    }
    if new_samples.is_empty() {
        return Err(Error::EmptyInput("warm retraining needs new samples"));
    }
    for s in new_samples {
        s.validate()?;
    }
    hyper.validate()?;
    let mut data = model.training_set.clone();
    data.extend_from_slice(new_samples);
    let mut trees = model.trees.clone();
    trees.extend(grow_trees(
        exec,
        &data,
        hyper,
        hyper.n_trees,
        model.trees.len(),
    ));
    let mut next = PredictionModel {
        version: model.version + 1,
        feature_order: model.feature_order.clone(),
        trees,
        training_stats: model.training_stats,
        known_queries: model.known_queries.clone(),
        hyper: *hyper,
        training_set: Vec::new(),
    };
    next.training_stats = training_stats(&next, &data);
    next.training_set = data;
    Ok(next)
}
