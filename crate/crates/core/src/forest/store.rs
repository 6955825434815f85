// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! Versioned model directory.
//!
//! Layout: `model-v{N}.json` per version, `registry.json` with the known
//! query signatures of the latest save, and a `CURRENT` file naming the
//! serving version. Every file is written to a temporary name and renamed
//! into place, so readers see either the previous or the next content.

use std::fs;
use std::path::{Path, PathBuf};

use super::PredictionModel;
use crate::error::{Error, Result};
use crate::similarity::save_registry;

const CURRENT: &str = "CURRENT";
pub const REGISTRY_FILE: &str = "registry.json";

#[derive(Debug, Clone)]
pub struct ModelStore {
    dir: PathBuf,
}

impl ModelStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ModelStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn model_path(&self, version: u64) -> PathBuf {
        self.dir.join(format!("model-v{version}.json"))
    }

    /// Writes the model and its registry, then points `CURRENT` at it.
    pub fn save(&self, model: &PredictionModel) -> Result<PathBuf> {
        if !model.is_trained() {
            return Err(Error::Untrained);
        }
        fs::create_dir_all(&self.dir).map_err(|e| Error::storage(&self.dir, e))?;
        let path = self.model_path(model.version);
        write_atomic(&path, &serde_json::to_vec(model)?)?;
        let registry = self.dir.join(REGISTRY_FILE);
        let tmp = self.dir.join(format!("{REGISTRY_FILE}.tmp"));
        save_registry(&tmp, &model.known_queries)?;
        fs::rename(&tmp, &registry).map_err(|e| Error::storage(&registry, e))?;
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        write_atomic(&self.dir.join(CURRENT), format!("{name}\n").as_bytes())?;
        log::info!("saved model v{} to {}", model.version, path.display());
        Ok(path)
    }

    pub fn current_version(&self) -> Result<u64> {
        let name = self.current_name()?;
        name.strip_prefix("model-v")
            .and_then(|s| s.strip_suffix(".json"))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::InvalidConfig(format!("bad CURRENT pointer `{name}`")))
    }

    pub fn load_current(&self) -> Result<PredictionModel> {
        let name = self.current_name()?;
        load_model(&self.dir.join(name))
    }

    pub fn load_version(&self, version: u64) -> Result<PredictionModel> {
        load_model(&self.model_path(version))
    }

    fn current_name(&self) -> Result<String> {
        let path = self.dir.join(CURRENT);
        let text = fs::read_to_string(&path).map_err(|e| Error::storage(&path, e))?;
        Ok(text.trim().to_string())
    }
}

pub fn load_model(path: &Path) -> Result<PredictionModel> {
    let bytes = fs::read(path).map_err(|e| Error::storage(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::storage(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::storage(path, e))
}
