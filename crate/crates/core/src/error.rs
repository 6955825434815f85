// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: expected `key=value`, got {text:?}")]
    MalformedLine { line: usize, text: String },

    #[error("line {line}: key `{key}` expects {expected}, got {value:?}")]
    InvalidValue {
        line: usize,
        key: String,
        expected: &'static str,
        value: String,
    },

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("fleet {{n_vm: {n_vm}, n_sl: {n_sl}}} exceeds bounds {{max_vm: {max_vm}, max_sl: {max_sl}}}")]
    FleetOutOfBounds {
        n_vm: u32,
        n_sl: u32,
        max_vm: u32,
        max_sl: u32,
    },

    #[error("fleet has no instances")]
    EmptyFleet,

    #[error("policy {policy} cannot run on fleet {{n_vm: {n_vm}, n_sl: {n_sl}}}: {reason}")]
    PolicyMismatch {
        policy: &'static str,
        n_vm: u32,
        n_sl: u32,
        reason: &'static str,
    },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("training failed: {0}")]
    Training(String),

    #[error("model is not trained")]
    Untrained,

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("unparseable query: {0}")]
    UnparseableQuery(String),

    #[error("similarity undefined for an all-zero signature")]
    ZeroSignature,

    #[error("no known queries registered")]
    NoKnownQueries,

    #[error("unknown query id `{0}`")]
    UnknownQuery(String),

    #[error("planning failed: {0}")]
    Planning(String),

    #[error("retraining failed: {0}")]
    Retrain(String),

    #[error("storage error at {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn storage(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Storage {
            path: path.into(),
            source,
        }
    }
}
