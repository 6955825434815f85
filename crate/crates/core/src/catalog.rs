// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! Built-in query classes and simulator-labelled trace generation.
//!
//! Each class is an analytics query over a star schema with a nominal input
//! size and per-task service time. Inputs are split into 128 MiB partitions,
//! one task each. Generated samples pair a fleet with a random cluster state;
//! the label is the simulated completion time.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{FleetConfig, ProviderProfile, QueryFeatures, WorkloadSample};
use crate::error::{Error, Result};
use crate::sim::{simulate, Policy, QuerySpec, SimOutcome};
use crate::similarity::{extract_signature, Registry, StructuralSignature};

pub const SPLIT_BYTES: u64 = 128 << 20;
const GIB: u64 = 1 << 30;
const EPOCH_BASE: u64 = 1_700_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryClass {
    pub id: &'static str,
    pub sql: &'static str,
    pub input_size_bytes: u64,
    pub task_service_s: f64,
}

impl QueryClass {
    pub fn n_tasks(&self) -> u32 {
        tasks_for(self.input_size_bytes)
    }

    pub fn query_spec(&self) -> QuerySpec {
        self.query_spec_for(self.input_size_bytes)
    }

    /// The class's work at a different input size.
    pub fn query_spec_for(&self, input_size_bytes: u64) -> QuerySpec {
        QuerySpec::new(tasks_for(input_size_bytes), self.task_service_s)
    }

    pub fn signature(&self) -> StructuralSignature {
        extract_signature(self.sql, self.n_tasks()).expect("built-in query text parses")
    }
}

pub fn tasks_for(input_size_bytes: u64) -> u32 {
    input_size_bytes.div_ceil(SPLIT_BYTES) as u32
}

const CLASSES: [QueryClass; 5] = [
    QueryClass {
        id: "q11",
        sql: "WITH year_total AS (
                SELECT c.c_customer_id customer_id, d.d_year dyear, sum(ss.ss_net_paid) total
                FROM customer c
                JOIN store_sales ss ON c.c_customer_sk = ss.ss_customer_sk
                JOIN date_dim d ON ss.ss_sold_date_sk = d.d_date_sk
                GROUP BY c.c_customer_id, d.d_year)
              SELECT t1.customer_id
              FROM year_total t1 JOIN year_total t2 ON t1.customer_id = t2.customer_id
              WHERE t1.dyear = 2001 AND t2.dyear = 2002 AND t2.total > t1.total
              ORDER BY t1.customer_id",
        input_size_bytes: 2 * GIB,
        task_service_s: 3.0,
    },
    QueryClass {
        id: "q49",
        sql: "SELECT channel, item, return_ratio
              FROM (SELECT 'web' channel, ws.ws_item_sk item,
                           sum(wr.wr_return_quantity) / sum(ws.ws_quantity) return_ratio
                    FROM web_sales ws LEFT JOIN web_returns wr
                      ON ws.ws_order_number = wr.wr_order_number AND ws.ws_item_sk = wr.wr_item_sk
                    WHERE ws.ws_net_profit > 1 AND ws.ws_sold_date_sk IN
                      (SELECT d_date_sk FROM date_dim WHERE d_year = 2001 AND d_moy = 12)
                    GROUP BY ws.ws_item_sk
                    UNION ALL
                    SELECT 'store' channel, sts.ss_item_sk item,
                           sum(sr.sr_return_quantity) / sum(sts.ss_quantity) return_ratio
                    FROM store_sales sts LEFT JOIN store_returns sr
                      ON sts.ss_ticket_number = sr.sr_ticket_number AND sts.ss_item_sk = sr.sr_item_sk
                    WHERE sts.ss_net_profit > 1
                    GROUP BY sts.ss_item_sk) x
              ORDER BY channel, return_ratio",
        input_size_bytes: 4 * GIB,
        task_service_s: 2.0,
    },
    QueryClass {
        id: "q68",
        sql: "SELECT c.c_last_name, c.c_first_name, ca.ca_city, dn.bought_city, dn.ss_ticket_number, dn.amt
              FROM (SELECT ss.ss_ticket_number, ss.ss_customer_sk, a.ca_city bought_city,
                           sum(ss.ss_ext_sales_price) amt
                    FROM store_sales ss
                    JOIN date_dim d ON ss.ss_sold_date_sk = d.d_date_sk
                    JOIN store s ON ss.ss_store_sk = s.s_store_sk
                    JOIN household_demographics hd ON ss.ss_hdemo_sk = hd.hd_demo_sk
                    JOIN customer_address a ON ss.ss_addr_sk = a.ca_address_sk
                    WHERE d.d_dom BETWEEN 1 AND 2 AND s.s_city IN ('Midway', 'Fairview')
                    GROUP BY ss.ss_ticket_number, ss.ss_customer_sk, a.ca_city) dn
              JOIN customer c ON dn.ss_customer_sk = c.c_customer_sk
              JOIN customer_address ca ON c.c_current_addr_sk = ca.ca_address_sk
              WHERE ca.ca_city <> dn.bought_city
              ORDER BY c.c_last_name, dn.ss_ticket_number",
        input_size_bytes: 3 * GIB,
        task_service_s: 4.0,
    },
    QueryClass {
        id: "q74",
        sql: "WITH web_total AS (
                SELECT c.c_customer_id customer_id, d.d_year dyear, sum(ws.ws_net_paid) total
                FROM customer c
                JOIN web_sales ws ON c.c_customer_sk = ws.ws_bill_customer_sk
                JOIN date_dim d ON ws.ws_sold_date_sk = d.d_date_sk
                WHERE d.d_year IN (2001, 2002)
                GROUP BY c.c_customer_id, d.d_year)
              SELECT w1.customer_id, w2.total
              FROM web_total w1 JOIN web_total w2 ON w1.customer_id = w2.customer_id
              WHERE w1.dyear = 2001 AND w2.dyear = 2002
              ORDER BY w1.customer_id",
        input_size_bytes: 5 * GIB,
        task_service_s: 2.5,
    },
    QueryClass {
        id: "q82",
        sql: "SELECT i.i_item_id, i.i_item_desc, i.i_current_price
              FROM item i
              JOIN inventory inv ON inv.inv_item_sk = i.i_item_sk
              JOIN date_dim d ON d.d_date_sk = inv.inv_date_sk
              JOIN store_sales ss ON ss.ss_item_sk = i.i_item_sk
              WHERE i.i_current_price BETWEEN 62 AND 92
                AND inv.inv_quantity_on_hand BETWEEN 100 AND 500
              GROUP BY i.i_item_id, i.i_item_desc, i.i_current_price
              ORDER BY i.i_item_id",
        input_size_bytes: 3 * GIB / 2,
        task_service_s: 5.0,
    },
];

pub fn classes() -> &'static [QueryClass] {
    &CLASSES
}

pub fn class(id: &str) -> Result<&'static QueryClass> {
    CLASSES
        .iter()
        .find(|c| c.id == id)
        .ok_or_else(|| Error::UnknownQuery(id.to_string()))
}

/// Signatures of the given classes, keyed by id.
pub fn registry_of(classes: &[QueryClass]) -> Registry {
    classes
        .iter()
        .map(|c| (c.id.to_string(), c.signature()))
        .collect()
}

pub fn registry() -> Registry {
    registry_of(classes())
}

/// A random but plausible cluster state for one submission of `class`.
pub fn random_features<R: Rng>(
    class: &QueryClass,
    fleet: FleetConfig,
    rng: &mut R,
) -> QueryFeatures {
    let total_memory_mb = 65_536;
    QueryFeatures {
        query_id: class.id.to_string(),
        instances: fleet,
        input_size_bytes: class.input_size_bytes,
        start_time_epoch: EPOCH_BASE + rng.random_range(0..30 * 86_400),
        total_memory_mb,
        available_memory_mb: rng.random_range(16_384..=total_memory_mb),
        memory_per_executor_mb: 2048,
        num_waiting_apps: rng.random_range(0..=3),
        total_available_cores: rng.random_range(8..=32),
    }
}

/// Simulated completion of `class` with the input size and fleet in `features`.
pub fn label(
    class: &QueryClass,
    features: &QueryFeatures,
    policy: Policy,
    profile: &ProviderProfile,
) -> Result<SimOutcome> {
    simulate(
        &class.query_spec_for(features.input_size_bytes),
        features.instances,
        policy,
        profile,
    )
}

/// Draws `fleets_per_class` fleets for every class and labels each with the
/// simulator. Fleets are distinct within a class while the grid allows;
/// beyond that they repeat.
pub fn generate(
    classes: &[QueryClass],
    profile: &ProviderProfile,
    policy: Policy,
    fleets_per_class: usize,
    max_vm: u32,
    max_sl: u32,
    seed: u64,
) -> Result<Vec<WorkloadSample>> {
    let grid = crate::domain::fleet_grid(max_vm, max_sl);
    if grid.is_empty() {
        return Err(Error::Domain("fleet bounds admit no configuration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(classes.len() * fleets_per_class);
    for class in classes {
        let mut fleets = grid.clone();
        fleets.shuffle(&mut rng);
        fleets.truncate(fleets_per_class);
        while fleets.len() < fleets_per_class {
            fleets.push(grid[rng.random_range(0..grid.len())]);
        }
        for fleet in fleets {
            let features = random_features(class, fleet, &mut rng);
            let outcome = label(class, &features, policy, profile)?;
            out.push(WorkloadSample::new(features, outcome.completion_s)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::config::bundled_profile;

    #[test]
    fn classes_have_distinct_parseable_signatures() {
        let reg = registry();
        assert_eq!(reg.len(), 5);
        let distinct: BTreeSet<_> = reg.values().collect();
        assert_eq!(distinct.len(), 5);
        for sig in reg.values() {
            assert!(sig.n_tables >= 1 && sig.n_columns >= 1);
        }
        assert_eq!(class("q11").unwrap().n_tasks(), 16);
        assert_eq!(class("q82").unwrap().n_tasks(), 12);
        assert!(matches!(class("q99"), Err(Error::UnknownQuery(_))));
    }

    #[test]
    fn five_classes_twenty_fleets_make_a_hundred_samples() {
        let profile = bundled_profile("aws-sim").unwrap();
        let samples = generate(classes(), &profile, Policy::HybridRelay, 20, 8, 8, 1).unwrap();
        assert_eq!(samples.len(), 100);
        for c in classes() {
            let fleets: BTreeSet<_> = samples
                .iter()
                .filter(|s| s.features.query_id == c.id)
                .map(|s| (s.features.instances.n_vm, s.features.instances.n_sl))
                .collect();
            assert_eq!(fleets.len(), 20);
        }
        assert_eq!(
            samples,
            generate(classes(), &profile, Policy::HybridRelay, 20, 8, 8, 1).unwrap()
        );
    }

    #[test]
    fn tiny_grid_only_yields_its_three_fleets() {
        let profile = bundled_profile("aws-sim").unwrap();
        let samples =
            generate(&classes()[..1], &profile, Policy::HybridRelay, 20, 1, 1, 4).unwrap();
        let fleets: BTreeSet<_> = samples
            .iter()
            .map(|s| (s.features.instances.n_vm, s.features.instances.n_sl))
            .collect();
        assert_eq!(fleets, BTreeSet::from([(0, 1), (1, 0), (1, 1)]));
        assert_eq!(samples.len(), 20);
    }

    #[test]
    fn labels_follow_the_simulator() {
        let profile = bundled_profile("aws-sim").unwrap();
        let samples = generate(classes(), &profile, Policy::HybridKeep, 3, 5, 5, 9).unwrap();
        for s in &samples {
            let c = class(&s.features.query_id).unwrap();
            let sim = simulate(
                &c.query_spec(),
                s.features.instances,
                Policy::HybridKeep,
                &profile,
            )
            .unwrap();
            assert_eq!(s.query_duration_s, sim.completion_s);
        }
    }
}
