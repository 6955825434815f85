// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

pub mod bo;
pub mod catalog;
pub mod compare;
pub mod config;
pub mod domain;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod forest;
pub mod history;
pub mod money;
pub mod planner;
pub mod service;
pub mod sim;
pub mod similarity;

pub use domain::{CostBreakdown, FleetConfig, ProviderProfile, QueryFeatures, WorkloadSample};
pub use error::{Error, Result};
pub use money::Money;
