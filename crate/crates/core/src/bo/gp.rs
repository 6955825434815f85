// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! Gaussian-process regression on fleet coordinates.
//!
//! Squared-exponential kernel with one length scale per axis. Observations
//! are standardized before fitting, so the signal variance is 1 on that
//! scale. Length scales are picked by maximizing the log marginal likelihood
//! over [`LENGTH_SCALE_GRID`] for each axis.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::domain::FleetConfig;
use crate::error::{Error, Result};

pub const LENGTH_SCALE_GRID: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// Diagonal added when the noise-free kernel matrix is numerically singular.
const JITTER_STEPS: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

#[derive(Debug, Clone)]
pub struct GpSurrogate {
    points: Vec<[f64; 2]>,
    values: Vec<f64>,
    pub length_scales: [f64; 2],
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Diagonal actually added on top of the noise to factorize.
    jitter: f64,
    y_mean: f64,
    y_scale: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

pub fn coords(fleet: FleetConfig) -> [f64; 2] {
    [f64::from(fleet.n_vm), f64::from(fleet.n_sl)]
}

impl GpSurrogate {
    /// Fits with length scales chosen by marginal likelihood and zero noise.
    pub fn fit(points: &[[f64; 2]], values: &[f64]) -> Result<Self> {
        let mut best: Option<GpSurrogate> = None;
        for &l0 in &LENGTH_SCALE_GRID {
            for &l1 in &LENGTH_SCALE_GRID {
                let Ok(gp) = GpSurrogate::fit_with(points, values, [l0, l1], 0.0) else {
                    continue;
                };
                // Prefer fits that needed no jitter: their likelihood is exact.
                let better = match &best {
                    None => true,
                    Some(b) => {
                        (gp.jitter, -gp.log_marginal_likelihood())
                            < (b.jitter, -b.log_marginal_likelihood())
                    }
                };
                if better {
                    best = Some(gp);
                }
            }
        }
        best.ok_or_else(|| Error::Planning("no kernel setting could be factorized".into()))
    }

    pub fn fit_with(
        points: &[[f64; 2]],
        values: &[f64],
        length_scales: [f64; 2],
        noise_variance: f64,
    ) -> Result<Self> {
        if points.is_empty() || points.len() != values.len() {
            return Err(Error::EmptyInput(
                "surrogate needs matching, non-empty observations",
            ));
        }
        if !(noise_variance >= 0.0 && length_scales.iter().all(|&l| l > 0.0)) {
            return Err(Error::Domain(
                "kernel hyperparameters must be positive".into(),
            ));
        }
        let n = values.len();
        let y_mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(n, values.iter().map(|v| (v - y_mean) / y_scale));

        let signal_variance = 1.0;
        let base = DMatrix::from_fn(n, n, |i, j| {
            kernel(&points[i], &points[j], length_scales, signal_variance)
        });
        for jitter in JITTER_STEPS {
            let k = &base + DMatrix::identity(n, n) * (noise_variance + jitter);
            if let Some(chol) = Cholesky::new(k) {
                let alpha = chol.solve(&y);
                return Ok(GpSurrogate {
                    points: points.to_vec(),
                    values: values.to_vec(),
                    length_scales,
                    signal_variance,
                    noise_variance,
                    jitter,
                    y_mean,
                    y_scale,
                    chol,
                    alpha,
                });
            }
        }
        Err(Error::Planning(
            "kernel matrix is not positive definite".into(),
        ))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn observations(&self) -> impl Iterator<Item = (&[f64; 2], f64)> {
        self.points.iter().zip(self.values.iter().copied())
    }

    /// Log marginal likelihood of the standardized observations.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.points.len();
        let y = DVector::from_iterator(
            n,
            self.values.iter().map(|v| (v - self.y_mean) / self.y_scale),
        );
        let log_det: f64 = self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .take(n)
            .map(|d| d.ln())
            .sum();
        -0.5 * y.dot(&self.alpha) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    /// Posterior mean and standard deviation at `x`, in observation units.
    pub fn predict(&self, x: &[f64; 2]) -> (f64, f64) {
        let n = self.points.len();
        let ks = DVector::from_iterator(
            n,
            self.points
                .iter()
                .map(|p| kernel(p, x, self.length_scales, self.signal_variance)),
        );
        let mean = self.y_mean + self.y_scale * ks.dot(&self.alpha);
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&ks)
            .unwrap_or_else(|| DVector::zeros(n));
        let var = (self.signal_variance - v.dot(&v)).max(0.0);
        (mean, self.y_scale * var.sqrt())
    }

    pub fn predict_fleet(&self, fleet: FleetConfig) -> (f64, f64) {
        self.predict(&coords(fleet))
    }
}

fn kernel(a: &[f64; 2], b: &[f64; 2], l: [f64; 2], signal_variance: f64) -> f64 {
    let d0 = (a[0] - b[0]) / l[0];
    let d1 = (a[1] - b[1]) / l[1];
    signal_variance * (-0.5 * (d0 * d0 + d1 * d1)).exp()
}
