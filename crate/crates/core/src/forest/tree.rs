// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! CART regression tree with squared-error splits.

use serde::{Deserialize, Serialize};

use crate::domain::FEATURE_COUNT;

pub(crate) type Row = [f64; FEATURE_COUNT];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    /// `(feature, threshold, left, right)`; rows with `x[feature] <= threshold` go left.
    Split(u8, f64, u32, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl RegressionTree {
    /// Fits a tree on the rows selected by `idx` (indices may repeat).
    pub(crate) fn fit(x: &[Row], y: &[f64], idx: Vec<usize>, params: TreeParams) -> Self {
        debug_assert!(!idx.is_empty());
        let mut tree = RegressionTree { nodes: Vec::new() };
        tree.grow(x, y, idx, 0, params);
        tree
    }

    pub fn predict(&self, row: &Row) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split(f, t, l, r) => {
                    i = if row[f as usize] <= t {
                        l as usize
                    } else {
                        r as usize
                    };
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split(_, _, l, r) => 1 + walk(nodes, l as usize).max(walk(nodes, r as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    fn grow(
        &mut self,
        x: &[Row],
        y: &[f64],
        idx: Vec<usize>,
        depth: usize,
        params: TreeParams,
    ) -> u32 {
        let id = self.nodes.len() as u32;
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf(mean));

        if params.max_depth.is_some_and(|d| depth >= d) || idx.len() < 2 * params.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = best_split(x, y, &idx, params.min_leaf) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| x[i][feature] <= threshold);
        let l = self.grow(x, y, left, depth + 1, params);
        let r = self.grow(x, y, right, depth + 1, params);
        self.nodes[id as usize] = Node::Split(feature as u8, threshold, l, r);
        id
    }
}

/// Split maximizing the squared-error reduction, or `None` when no split
/// reduces it.
fn best_split(x: &[Row], y: &[f64], idx: &[usize], min_leaf: usize) -> Option<(usize, f64)> {
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let (lo, hi) = idx
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(y[i]), hi.max(y[i]))
        });
    if hi - lo <= 0.0 {
        return None;
    }
    // Maximizing sum_l^2/n_l + sum_r^2/n_r is equivalent to minimizing child SSE.
    let base = total * total / n as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = idx.to_vec();
    #[allow(clippy::needless_range_loop)]
    for f in 0..FEATURE_COUNT {
        order.sort_unstable_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left_sum = 0.0;
        for k in 1..n {
            left_sum += y[order[k - 1]];
            if k < min_leaf || n - k < min_leaf {
                continue;
            }
            let (a, b) = (x[order[k - 1]][f], x[order[k]][f]);
            if a == b {
                continue;
            }
            let right_sum = total - left_sum;
            let score =
                left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64 - base;
            if best.is_none_or(|(s, _, _)| score > s) {
                let mid = a + (b - a) / 2.0;
                best = Some((score, f, if mid < b { mid } else { a }));
            }
        }
    }
    best.filter(|&(s, _, _)| s > 1e-12 * (1.0 + base.abs()))
        .map(|(_, f, t)| (f, t))
}
