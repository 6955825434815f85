// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! `key=value` property files: the engine configuration and provider
//! profiles.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! collected as warnings rather than rejected.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::ProviderProfile;
use crate::error::{Error, Result};

pub const KEY_PROVIDER: &str = "smartpick.cloud.compute.provider";
pub const KEY_INSTANCE_FAMILY: &str = "smartpick.cloud.compute.instanceFamily";
pub const KEY_RELAY: &str = "smartpick.cloud.compute.relay";
pub const KEY_KNOB: &str = "smartpick.cloud.compute.knob";
pub const KEY_MAX_BATCH: &str = "smartpick.train.max.batch";
pub const KEY_PREF_SAME_INSTANCE: &str = "smartpick.train.pref.sameInstance";
pub const KEY_MIN_RAM_GB: &str = "smartpick.train.min.ram.gb";
pub const KEY_ERROR_TRIGGER: &str = "smartpick.train.errorDifference.trigger";

/// A parsed value together with the non-fatal diagnostics produced while
/// reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub compute_provider: String,
    pub compute_instance_family: String,
    pub compute_relay: bool,
    pub compute_knob: f64,
    pub train_max_batch: usize,
    pub train_pref_same_instance: bool,
    pub train_min_ram_gb: f64,
    pub train_error_difference_trigger_s: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            compute_provider: "aws-sim".into(),
            compute_instance_family: "t3".into(),
            compute_relay: true,
            compute_knob: 0.0,
            train_max_batch: 100,
            train_pref_same_instance: false,
            train_min_ram_gb: 4.0,
            train_error_difference_trigger_s: 50.0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.compute_knob.is_finite() && self.compute_knob >= 0.0) {
            return Err(Error::InvalidConfig(format!("{KEY_KNOB} must be >= 0")));
        }
        if !(self.train_error_difference_trigger_s.is_finite()
            && self.train_error_difference_trigger_s > 0.0)
        {
            return Err(Error::InvalidConfig(format!(
                "{KEY_ERROR_TRIGGER} must be > 0"
            )));
        }
        if self.train_max_batch == 0 {
            return Err(Error::InvalidConfig(format!(
                "{KEY_MAX_BATCH} must be >= 1"
            )));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Loaded<EngineConfig>> {
        let mut cfg = EngineConfig::default();
        let mut warnings = Vec::new();
        for entry in parse_properties(text)? {
            match entry.key.as_str() {
                KEY_PROVIDER => cfg.compute_provider = entry.value.clone(),
                KEY_INSTANCE_FAMILY => cfg.compute_instance_family = entry.value.clone(),
                KEY_RELAY => cfg.compute_relay = entry.parse_bool()?,
                KEY_KNOB => cfg.compute_knob = entry.parse("a number")?,
                KEY_MAX_BATCH => cfg.train_max_batch = entry.parse("a non-negative integer")?,
                KEY_PREF_SAME_INSTANCE => cfg.train_pref_same_instance = entry.parse_bool()?,
                KEY_MIN_RAM_GB => cfg.train_min_ram_gb = entry.parse("a number")?,
                KEY_ERROR_TRIGGER => {
                    cfg.train_error_difference_trigger_s = entry.parse("a number")?
                }
                other => warnings.push(format!(
                    "line {}: unknown key `{other}` ignored",
                    entry.line
                )),
            }
        }
        cfg.validate()?;
        Ok(Loaded {
            value: cfg,
            warnings,
        })
    }

    pub fn to_properties(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{KEY_PROVIDER}={}", self.compute_provider);
        let _ = writeln!(
            out,
            "{KEY_INSTANCE_FAMILY}={}",
            self.compute_instance_family
        );
        let _ = writeln!(out, "{KEY_RELAY}={}", self.compute_relay);
        let _ = writeln!(out, "{KEY_KNOB}={}", self.compute_knob);
        let _ = writeln!(out, "{KEY_MAX_BATCH}={}", self.train_max_batch);
        let _ = writeln!(
            out,
            "{KEY_PREF_SAME_INSTANCE}={}",
            self.train_pref_same_instance
        );
        let _ = writeln!(out, "{KEY_MIN_RAM_GB}={}", self.train_min_ram_gb);
        let _ = writeln!(
            out,
            "{KEY_ERROR_TRIGGER}={}",
            self.train_error_difference_trigger_s
        );
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_properties()).map_err(|e| Error::storage(path, e))
    }
}

/// Reads an engine configuration file, logging any unknown keys.
pub fn load_config(path: &Path) -> Result<EngineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
    let loaded = EngineConfig::parse(&text)?;
    for w in &loaded.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(loaded.value)
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Property {
    pub line: usize,
    pub key: String,
    pub value: String,
}

impl Property {
    fn parse<T: FromStr>(&self, expected: &'static str) -> Result<T> {
        self.value.parse().map_err(|_| self.invalid(expected))
    }

    fn parse_bool(&self) -> Result<bool> {
        match self.value.to_ascii_lowercase().as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(self.invalid("true or false")),
        }
    }

    fn invalid(&self, expected: &'static str) -> Error {
        Error::InvalidValue {
            line: self.line,
            key: self.key.clone(),
            expected,
            value: self.value.clone(),
        }
    }
}

pub(crate) fn parse_properties(text: &str) -> Result<Vec<Property>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::MalformedLine {
                line: idx + 1,
                text: raw.to_string(),
            });
        };
        out.push(Property {
            line: idx + 1,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

const AWS_SIM: &str = include_str!("../profiles/aws-sim.profile");
const GCP_SIM: &str = include_str!("../profiles/gcp-sim.profile");

pub const BUNDLED_PROFILES: [&str; 2] = ["aws-sim", "gcp-sim"];

/// Returns one of the provider profiles shipped with the crate.
pub fn bundled_profile(name: &str) -> Result<ProviderProfile> {
    let text = match name {
        "aws-sim" => AWS_SIM,
        "gcp-sim" => GCP_SIM,
        other => {
            return Err(Error::InvalidConfig(format!(
                "no bundled profile named `{other}`"
            )))
        }
    };
    Ok(ProviderProfile::parse(text)?.value)
}

/// Resolves `spec` as a bundled profile name first, then as a file path.
pub fn resolve_profile(spec: &str) -> Result<ProviderProfile> {
    if BUNDLED_PROFILES.contains(&spec) {
        return bundled_profile(spec);
    }
    load_profile(Path::new(spec))
}

pub fn load_profile(path: &Path) -> Result<ProviderProfile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
    let loaded = ProviderProfile::parse(&text)?;
    for w in &loaded.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(loaded.value)
}

impl ProviderProfile {
    pub fn parse(text: &str) -> Result<Loaded<ProviderProfile>> {
        let props = parse_properties(text)?;
        let mut warnings = Vec::new();
        let mut fields = serde_json::Map::new();
        for p in props {
            let value = match p.key.as_str() {
                "name" => serde_json::Value::String(p.value.clone()),
                "vcpus_per_instance" | "sl_billing_granularity_ms" | "max_vm" | "max_sl" => {
                    serde_json::Value::from(p.parse::<u64>("a non-negative integer")?)
                }
                "vm_hourly_price"
                | "vm_storage_hourly_price"
                | "burstable_price_per_vcpu_hour"
                | "sl_price_per_gb_second"
                | "sl_memory_gb"
                | "external_store_hourly_price"
                | "vm_cold_boot_s"
                | "sl_boot_s"
                | "sl_overhead_factor" => {
                    let v: f64 = p.parse("a number")?;
                    serde_json::Number::from_f64(v)
                        .map(serde_json::Value::Number)
                        .ok_or_else(|| p.invalid("a finite number"))?
                }
                other => {
                    warnings.push(format!("line {}: unknown key `{other}` ignored", p.line));
                    continue;
                }
            };
            fields.insert(p.key, value);
        }
        for key in PROFILE_KEYS {
            if !fields.contains_key(key) {
                return Err(Error::MissingKey(key.to_string()));
            }
        }
        let profile: ProviderProfile = serde_json::from_value(serde_json::Value::Object(fields))?;
        profile.validate()?;
        Ok(Loaded {
            value: profile,
            warnings,
        })
    }

    pub fn to_properties(&self) -> String {
        let value = serde_json::to_value(self).expect("profile serializes");
        let mut out = String::new();
        for key in PROFILE_KEYS {
            match &value[key] {
                serde_json::Value::String(s) => {
                    let _ = writeln!(out, "{key}={s}");
                }
                other => {
                    let _ = writeln!(out, "{key}={other}");
                }
            }
        }
        out
    }
}

const PROFILE_KEYS: [&str; 14] = [
    "name",
    "vm_hourly_price",
    "vm_storage_hourly_price",
    "burstable_price_per_vcpu_hour",
    "vcpus_per_instance",
    "sl_price_per_gb_second",
    "sl_memory_gb",
    "sl_billing_granularity_ms",
    "external_store_hourly_price",
    "vm_cold_boot_s",
    "sl_boot_s",
    "sl_overhead_factor",
    "max_vm",
    "max_sl",
];
