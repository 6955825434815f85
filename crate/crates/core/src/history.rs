// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! Append-only trace log of workload samples, one JSON object per line.
//!
//! Each record is written with a single `write` call including its trailing
//! newline. Readers only consume newline-terminated lines, so a record that
//! is still being written is never observed.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::domain::WorkloadSample;
use crate::error::{Error, Result};

/// Samples in append order.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceDataset {
    pub samples: Vec<WorkloadSample>,
    pub source_path: PathBuf,
}

impl TraceDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Up to `n` most recent samples of `query_id`, newest first.
    pub fn latest_for(&self, query_id: &str, n: usize) -> Vec<WorkloadSample> {
        self.samples
            .iter()
            .rev()
            .filter(|s| s.features.query_id == query_id)
            .take(n)
            .cloned()
            .collect()
    }
}

#[derive(Debug)]
pub struct HistoryStore {
    path: PathBuf,
    writer: Mutex<()>,
}

impl HistoryStore {
    /// Opens (without creating) the store at `path`; the file appears on the
    /// first append.
    pub fn open(path: impl Into<PathBuf>) -> Self {
        HistoryStore {
            path: path.into(),
            writer: Mutex::new(()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, sample: &WorkloadSample) -> Result<()> {
        self.append_all(std::slice::from_ref(sample))
    }

    /// Appends several samples; each is still its own complete line.
    pub fn append_all(&self, samples: &[WorkloadSample]) -> Result<()> {
        for s in samples {
            s.validate()?;
        }
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        append_lines(&self.path, samples)
    }

    pub fn read_all(&self) -> Result<TraceDataset> {
        Ok(TraceDataset {
            samples: read_lines(&self.path)?,
            source_path: self.path.clone(),
        })
    }

    pub fn latest_features_for(&self, query_id: &str, n: usize) -> Result<Vec<WorkloadSample>> {
        if n == 0 {
            return Err(Error::Domain("n must be >= 1".into()));
        }
        Ok(self.read_all()?.latest_for(query_id, n))
    }
}

pub(crate) fn append_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if records.is_empty() {
        return Ok(());
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::storage(path, e))?;
    for r in records {
        let mut line = serde_json::to_vec(r)?;
        line.push(b'\n');
        file.write_all(&line).map_err(|e| Error::storage(path, e))?;
    }
    file.sync_data().map_err(|e| Error::storage(path, e))?;
    Ok(())
}

/// Reads complete lines; a missing file reads as empty and an unterminated
/// trailing fragment is skipped.
pub(crate) fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut text = String::new();
    match File::open(path) {
        Ok(mut f) => {
            f.read_to_string(&mut text)
                .map_err(|e| Error::storage(path, e))?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::storage(path, e)),
    }
    let complete = match text.rfind('\n') {
        Some(end) => &text[..end],
        None => "",
    };
    complete
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
