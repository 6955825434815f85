// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! Shared value types: fleets, provider price profiles, query features and
//! cost breakdowns.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Money;

/// A candidate compute allocation: how many VM and serverless instances.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct FleetConfig {
    pub n_vm: u32,
    pub n_sl: u32,
}

impl FleetConfig {
    pub const fn new(n_vm: u32, n_sl: u32) -> Self {
        FleetConfig { n_vm, n_sl }
    }

    pub fn total(self) -> u32 {
        self.n_vm + self.n_sl
    }

    pub fn is_empty(self) -> bool {
        self.total() == 0
    }
}

impl fmt::Display for FleetConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n_vm, self.n_sl)
    }
}

/// Checks a fleet against the search bounds of a provider profile.
pub fn validate_fleet(config: FleetConfig, profile: &ProviderProfile) -> Result<FleetConfig> {
    if config.is_empty() {
        return Err(Error::EmptyFleet);
    }
    if config.n_vm > profile.max_vm || config.n_sl > profile.max_sl {
        return Err(Error::FleetOutOfBounds {
            n_vm: config.n_vm,
            n_sl: config.n_sl,
            max_vm: profile.max_vm,
            max_sl: profile.max_sl,
        });
    }
    Ok(config)
}

/// Every fleet in `[0..=max_vm] x [0..=max_sl]` except the empty one, in
/// lexicographic `(n_vm, n_sl)` order.
pub fn fleet_grid(max_vm: u32, max_sl: u32) -> Vec<FleetConfig> {
    (0..=max_vm)
        .flat_map(|v| (0..=max_sl).map(move |s| FleetConfig::new(v, s)))
        .filter(|f| !f.is_empty())
        .collect()
}

/// Prices, billing granularity and boot behaviour of one cloud provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub name: String,
    pub vm_hourly_price: f64,
    pub vm_storage_hourly_price: f64,
    pub burstable_price_per_vcpu_hour: f64,
    pub vcpus_per_instance: u32,
    pub sl_price_per_gb_second: f64,
    pub sl_memory_gb: f64,
    pub sl_billing_granularity_ms: u64,
    pub external_store_hourly_price: f64,
    pub vm_cold_boot_s: f64,
    pub sl_boot_s: f64,
    pub sl_overhead_factor: f64,
    pub max_vm: u32,
    pub max_sl: u32,
}

impl ProviderProfile {
    pub fn validate(&self) -> Result<()> {
        let prices = [
            ("vm_hourly_price", self.vm_hourly_price),
            ("vm_storage_hourly_price", self.vm_storage_hourly_price),
            (
                "burstable_price_per_vcpu_hour",
                self.burstable_price_per_vcpu_hour,
            ),
            ("sl_price_per_gb_second", self.sl_price_per_gb_second),
            ("sl_memory_gb", self.sl_memory_gb),
            (
                "external_store_hourly_price",
                self.external_store_hourly_price,
            ),
            ("sl_boot_s", self.sl_boot_s),
        ];
        for (key, value) in prices {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{key} must be a finite value >= 0"
                )));
            }
        }
        if !(self.sl_overhead_factor.is_finite() && self.sl_overhead_factor >= 1.0) {
            return Err(Error::InvalidConfig(
                "sl_overhead_factor must be >= 1".into(),
            ));
        }
        if !(self.vm_cold_boot_s.is_finite() && self.vm_cold_boot_s >= self.sl_boot_s) {
            return Err(Error::InvalidConfig(
                "vm_cold_boot_s must be >= sl_boot_s".into(),
            ));
        }
        if self.sl_billing_granularity_ms == 0 {
            return Err(Error::InvalidConfig(
                "sl_billing_granularity_ms must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Per-second price of one running VM: compute, local disk and burst credit.
    pub fn vm_rate_per_second(&self) -> f64 {
        (self.vm_hourly_price
            + self.vm_storage_hourly_price
            + self.burstable_price_per_vcpu_hour * f64::from(self.vcpus_per_instance))
            / 3600.0
    }

    /// Per-second price of one busy serverless instance.
    pub fn sl_rate_per_second(&self) -> f64 {
        self.sl_price_per_gb_second * self.sl_memory_gb
    }

    pub fn external_store_rate_per_second(&self) -> f64 {
        self.external_store_hourly_price / 3600.0
    }

    pub fn grid(&self) -> Vec<FleetConfig> {
        fleet_grid(self.max_vm, self.max_sl)
    }
}

/// The prediction features of one query submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFeatures {
    pub query_id: String,
    pub instances: FleetConfig,
    #[serde(rename = "input_size")]
    pub input_size_bytes: u64,
    pub start_time_epoch: u64,
    #[serde(rename = "total_memory")]
    pub total_memory_mb: u64,
    #[serde(rename = "available_memory")]
    pub available_memory_mb: u64,
    #[serde(rename = "memory_per_executor")]
    pub memory_per_executor_mb: u64,
    pub num_waiting_apps: u32,
    pub total_available_cores: u32,
}

pub const FEATURE_COUNT: usize = 9;

/// Column order of the numeric feature vector fed to the regressor.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "n_vm",
    "n_sl",
    "input_size",
    "start_time_epoch",
    "total_memory",
    "available_memory",
    "memory_per_executor",
    "num_waiting_apps",
    "total_available_cores",
];

impl QueryFeatures {
    pub fn validate(&self) -> Result<()> {
        if self.available_memory_mb > self.total_memory_mb {
            return Err(Error::InvalidSample(format!(
                "available_memory {} exceeds total_memory {}",
                self.available_memory_mb, self.total_memory_mb
            )));
        }
        Ok(())
    }

    pub fn with_fleet(&self, fleet: FleetConfig) -> QueryFeatures {
        QueryFeatures {
            instances: fleet,
            ..self.clone()
        }
    }

    pub fn to_vector(&self) -> [f64; FEATURE_COUNT] {
        [
            f64::from(self.instances.n_vm),
            f64::from(self.instances.n_sl),
            self.input_size_bytes as f64,
            self.start_time_epoch as f64,
            self.total_memory_mb as f64,
            self.available_memory_mb as f64,
            self.memory_per_executor_mb as f64,
            f64::from(self.num_waiting_apps),
            f64::from(self.total_available_cores),
        ]
    }
}

/// One historical run: features plus the observed completion time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSample {
    #[serde(flatten)]
    pub features: QueryFeatures,
    #[serde(rename = "query_duration")]
    pub query_duration_s: f64,
}

impl WorkloadSample {
    pub fn new(features: QueryFeatures, query_duration_s: f64) -> Result<Self> {
        let sample = WorkloadSample {
            features,
            query_duration_s,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.query_duration_s.is_finite() && self.query_duration_s > 0.0) {
            return Err(Error::InvalidSample(format!(
                "query_duration must be positive, got {}",
                self.query_duration_s
            )));
        }
        self.features.validate()
    }
}

/// Itemized cost of one simulated (or estimated) query run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub vm_compute: Money,
    pub vm_storage: Money,
    pub burstable: Money,
    pub sl_compute: Money,
    pub external_store: Money,
    pub total: Money,
}

impl CostBreakdown {
    pub fn new(
        vm_compute: Money,
        vm_storage: Money,
        burstable: Money,
        sl_compute: Money,
        external_store: Money,
    ) -> Self {
        CostBreakdown {
            vm_compute,
            vm_storage,
            burstable,
            sl_compute,
            external_store,
            total: vm_compute + vm_storage + burstable + sl_compute + external_store,
        }
    }

    /// All VM-side charges: compute, disk and burst credit.
    pub fn vm_total(&self) -> Money {
        self.vm_compute + self.vm_storage + self.burstable
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::bundled_profile;

    fn bounded(max: u32) -> ProviderProfile {
        ProviderProfile {
            max_vm: max,
            max_sl: max,
            ..bundled_profile("aws-sim").unwrap()
        }
    }

    #[test]
    fn in_bounds_fleet_is_returned_unchanged() {
        let fleet = FleetConfig::new(5, 5);
        assert_eq!(validate_fleet(fleet, &bounded(8)).unwrap(), fleet);
    }

    #[test]
    fn empty_fleet_is_rejected() {
        assert!(matches!(
            validate_fleet(FleetConfig::new(0, 0), &bounded(8)),
            Err(Error::EmptyFleet)
        ));
    }

    #[test]
    fn oversized_fleet_is_rejected() {
        assert!(matches!(
            validate_fleet(FleetConfig::new(9, 0), &bounded(8)),
            Err(Error::FleetOutOfBounds { n_vm: 9, .. })
        ));
    }

    #[test]
    fn grid_excludes_origin_and_is_lexicographic() {
        let grid = fleet_grid(5, 5);
        assert_eq!(grid.len(), 35);
        assert!(!grid.contains(&FleetConfig::new(0, 0)));
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(
            fleet_grid(1, 1),
            vec![
                FleetConfig::new(0, 1),
                FleetConfig::new(1, 0),
                FleetConfig::new(1, 1)
            ]
        );
    }

    #[test]
    fn sample_json_uses_feature_table_names() {
        let sample = WorkloadSample::new(
            QueryFeatures {
                query_id: "q11".into(),
                instances: FleetConfig::new(2, 3),
                input_size_bytes: 1024,
                start_time_epoch: 1_700_000_000,
                total_memory_mb: 65536,
                available_memory_mb: 60000,
                memory_per_executor_mb: 2048,
                num_waiting_apps: 1,
                total_available_cores: 12,
            },
            42.5,
        )
        .unwrap();
        let value = serde_json::to_value(&sample).unwrap();
        for key in [
            "query_id",
            "instances",
            "input_size",
            "start_time_epoch",
            "total_memory",
            "available_memory",
            "memory_per_executor",
            "num_waiting_apps",
            "total_available_cores",
            "query_duration",
        ] {
            assert!(value.get(key).is_some(), "missing {key}");
        }
        assert_eq!(value["instances"]["n_sl"], 3);
    }

    #[test]
    fn non_positive_duration_is_invalid() {
        let mut features = QueryFeatures {
            query_id: "q".into(),
            instances: FleetConfig::new(1, 0),
            input_size_bytes: 0,
            start_time_epoch: 0,
            total_memory_mb: 10,
            available_memory_mb: 5,
            memory_per_executor_mb: 1,
            num_waiting_apps: 0,
            total_available_cores: 1,
        };
        assert!(WorkloadSample::new(features.clone(), 0.0).is_err());
        features.available_memory_mb = 11;
        assert!(WorkloadSample::new(features, 1.0).is_err());
    }
}
