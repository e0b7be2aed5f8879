//! Reward-trend estimation and residual-softmax importance weights.
//!
//! Each dimension's recent mean rewards are fitted with an ordinary
//! least-squares line; the residual of the current mean against the line's
//! prediction measures how far the dimension is running ahead of its own
//! trend. A softmax over residuals gives the importance weights and the
//! dimension with the largest weight becomes the pivot.

use serde::{Deserialize, Serialize};

use crate::error::{MoaError, Result};
use crate::types::{argmax_lowest, HistoryBuffer, MoaConfig, RewardMatrix, WeightVector};

/// Trend prediction and residuals for one group at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendEstimate {
    pub predicted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Set when history was too short for a fit; residuals are then zero.
    pub used_fallback: bool,
}

/// Column means of `rewards`.
pub fn group_mean_rewards(rewards: &RewardMatrix) -> Vec<f64> {
    let g = rewards.num_rollouts() as f64;
    let mut sums = vec![0.0; rewards.num_dims()];
    for row in rewards.rows() {
        for (s, r) in sums.iter_mut().zip(row) {
            *s += r;
        }
    }
    sums.into_iter().map(|s| s / g).collect()
}

/// Ordinary least-squares fit of value on step, evaluated at `target_step`.
///
/// Steps are used directly as abscissae. The fit is centred on the mean step,
/// so large step numbers do not cost precision.
pub fn linreg_predict(series: &[(u64, f64)], target_step: u64) -> Result<f64> {
    if series.len() < 2 {
        return Err(MoaError::InsufficientData(format!(
            "trend fit needs 2 points, got {}",
            series.len()
        )));
    }
    let n = series.len() as f64;
    let x_mean = series.iter().map(|&(x, _)| x as f64).sum::<f64>() / n;
    let y_mean = series.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in series {
        let dx = x as f64 - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(MoaError::InsufficientData(
            "trend fit needs at least two distinct steps".into(),
        ));
    }
    let slope = sxy / sxx;
    Ok(y_mean + slope * (target_step as f64 - x_mean))
}

/// Residuals of `observed_means` against the per-dimension trend at `step`.
///
/// With fewer than `config.min_history_for_trend` stored entries the
/// residuals are all zero, which yields uniform weights downstream.
pub fn estimate_trend(
    buffer: &HistoryBuffer,
    observed_means: &[f64],
    step: u64,
    config: &MoaConfig,
) -> Result<TrendEstimate> {
    let dims = observed_means.len();
    if dims != buffer.num_dims() {
        return Err(MoaError::Shape(format!(
            "observed means have {dims} dims, history has {}",
            buffer.num_dims()
        )));
    }
    let fallback = || TrendEstimate {
        predicted: observed_means.to_vec(),
        residuals: vec![0.0; dims],
        used_fallback: true,
    };
    if buffer.len() < config.min_history_for_trend {
        return Ok(fallback());
    }
    let mut predicted = Vec::with_capacity(dims);
    for d in 0..dims {
        match linreg_predict(&buffer.column(d)?, step) {
            Ok(p) => predicted.push(p),
            Err(MoaError::InsufficientData(_)) => return Ok(fallback()),
            Err(e) => return Err(e),
        }
    }
    let residuals = observed_means
        .iter()
        .zip(&predicted)
        .map(|(o, p)| o - p)
        .collect();
    Ok(TrendEstimate {
        predicted,
        residuals,
        used_fallback: false,
    })
}

/// `softmax(beta * u)` with the max-shift; pivot is the lowest argmax.
///
/// `beta = 0` gives uniform weights. Negative `beta` is accepted (it inverts
/// the preference) so the function can be probed across the full
/// temperature axis.
pub fn softmax_weights(residuals: &[f64], beta: f64) -> Result<WeightVector> {
    if residuals.is_empty() {
        return Err(MoaError::Shape("empty residual vector".into()));
    }
    if !beta.is_finite() {
        return Err(MoaError::NonFinite("beta"));
    }
    if residuals.iter().any(|u| !u.is_finite()) {
        return Err(MoaError::NonFinite("residuals"));
    }
    let scaled: Vec<f64> = residuals.iter().map(|u| beta * u).collect();
    let shift = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|z| (z - shift).exp()).collect();
    let total: f64 = exps.iter().sum();
    WeightVector::new(exps.into_iter().map(|e| e / total).collect())
}

/// Linearized softmax `1/D + (beta/D)(u_d - mean(u))`.
///
/// Only an approximation; entries can leave `[0, 1]` for large `beta`.
pub fn first_order_weights(residuals: &[f64], beta: f64) -> Vec<f64> {
    let d = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / d;
    residuals
        .iter()
        .map(|u| 1.0 / d + beta / d * (u - mean))
        .collect()
}

pub fn select_pivot(weights: &WeightVector) -> usize {
    weights.pivot()
}

/// Index of the column with the largest population standard deviation.
pub fn select_pivot_sigma(rewards: &RewardMatrix) -> Result<usize> {
    let g = rewards.num_rollouts();
    if g < 2 {
        return Err(MoaError::InsufficientData(format!(
            "standard-deviation pivot needs G >= 2, got {g}"
        )));
    }
    let stds: Vec<f64> = (0..rewards.num_dims())
        .map(|d| population_std(&rewards.column(d)))
        .collect();
    Ok(argmax_lowest(&stds))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}
