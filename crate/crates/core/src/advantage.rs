//! Group-normalized advantages and the end-to-end multi-objective pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conflict::{dot, largest_subset};
use crate::error::{MoaError, Result};
use crate::trend::{
    estimate_trend, group_mean_rewards, mean, population_std, select_pivot, select_pivot_sigma,
    softmax_weights,
};
use crate::types::{AdvantageResult, HistoryBuffer, MoaConfig, RewardMatrix, WeightVector};

/// How scalar rewards are turned into advantages within a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    /// `(r - mean) / (std + eps)`.
    Grpo,
    /// `r - mean(others)`.
    Rloo,
}

/// Advantage strategies compared by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Trend-weighted, conflict-filtered, group-normalized.
    MoaGrpo,
    /// As `MoaGrpo` with leave-one-out normalization.
    MoaRloo,
    /// Uniform weights, whole group, group-normalized.
    UniformGrpo,
    /// Uniform weights, whole group, leave-one-out.
    UniformRloo,
    /// Only the dimension with the largest reward spread.
    MoaSigma,
    /// One group-normalized update per dimension, in sequence.
    MoaMu,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::MoaGrpo,
        Strategy::MoaRloo,
        Strategy::UniformGrpo,
        Strategy::UniformRloo,
        Strategy::MoaSigma,
        Strategy::MoaMu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::MoaGrpo => "moa_grpo",
            Strategy::MoaRloo => "moa_rloo",
            Strategy::UniformGrpo => "uniform_grpo",
            Strategy::UniformRloo => "uniform_rloo",
            Strategy::MoaSigma => "moa_sigma",
            Strategy::MoaMu => "moa_mu",
        }
    }

    pub fn is_moa_variant(self) -> bool {
        !matches!(self, Strategy::UniformGrpo | Strategy::UniformRloo)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = MoaError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MoaError::invalid("strategy", format!("unknown strategy `{s}`")))
    }
}

/// `R' = R w`, one weighted reward per rollout.
pub fn collapse_rewards(rewards: &RewardMatrix, weights: &WeightVector) -> Result<Vec<f64>> {
    if weights.len() != rewards.num_dims() {
        return Err(MoaError::Shape(format!(
            "weights have {} dims, rewards have {}",
            weights.len(),
            rewards.num_dims()
        )));
    }
    Ok(rewards
        .rows()
        .map(|row| dot(weights.weights(), row))
        .collect())
}

/// `(r - mean) / (std + eps)` with the population standard deviation.
pub fn grpo_normalize(collapsed: &[f64], adv_epsilon: f64) -> Vec<f64> {
    if collapsed.is_empty() {
        return Vec::new();
    }
    let mu = mean(collapsed);
    let sigma = population_std(collapsed);
    collapsed
        .iter()
        .map(|r| (r - mu) / (sigma + adv_epsilon))
        .collect()
}

/// Leave-one-out baseline: `r_g - mean(r_j, j != g)`.
pub fn rloo_normalize(collapsed: &[f64]) -> Result<Vec<f64>> {
    let g = collapsed.len();
    if g < 2 {
        return Err(MoaError::InsufficientData(format!(
            "leave-one-out baseline needs G >= 2, got {g}"
        )));
    }
    let total: f64 = collapsed.iter().sum();
    let others = (g - 1) as f64;
    Ok(collapsed.iter().map(|r| r - (total - r) / others).collect())
}

/// Zeroes every advantage whose index is not in `retained`.
pub fn mask_conflicts(advantages: &[f64], retained: &[usize]) -> Result<Vec<f64>> {
    let mut keep = vec![false; advantages.len()];
    for &i in retained {
        if i >= advantages.len() {
            return Err(MoaError::Index {
                index: i,
                len: advantages.len(),
            });
        }
        keep[i] = true;
    }
    Ok(advantages
        .iter()
        .zip(keep)
        .map(|(&a, k)| if k { a } else { 0.0 })
        .collect())
}

fn normalize(collapsed: &[f64], normalizer: Normalizer, adv_epsilon: f64) -> Result<Vec<f64>> {
    match normalizer {
        Normalizer::Grpo => Ok(grpo_normalize(collapsed, adv_epsilon)),
        Normalizer::Rloo => rloo_normalize(collapsed),
    }
}

fn finish(
    rewards: &RewardMatrix,
    weights: WeightVector,
    retained: Vec<usize>,
    normalizer: Normalizer,
    adv_epsilon: f64,
) -> Result<AdvantageResult> {
    let collapsed = collapse_rewards(rewards, &weights)?;
    // Statistics cover the whole group, masked rollouts included.
    let group_mean = mean(&collapsed);
    let group_std = population_std(&collapsed);
    let raw = normalize(&collapsed, normalizer, adv_epsilon)?;
    let advantages = mask_conflicts(&raw, &retained)?;
    Ok(AdvantageResult {
        advantages,
        retained,
        weights,
        collapsed,
        group_mean,
        group_std,
    })
}

/// Trend-weighted, conflict-filtered advantages for one group.
///
/// Group means are compared against the trend in `history` to get residual
/// softmax weights and the pivot; the longest strict chain over
/// `(pivot reward, weighted sum)` is retained; the weighted rewards are
/// normalized over the whole group and everything outside the chain is
/// zeroed.
///
/// With a single reward dimension no two rollouts can conflict, so the whole
/// group is retained and the result equals plain group normalization.
pub fn moa_advantage(
    rewards: &RewardMatrix,
    history: &HistoryBuffer,
    step: u64,
    config: &MoaConfig,
    normalizer: Normalizer,
) -> Result<AdvantageResult> {
    let means = group_mean_rewards(rewards);
    let trend = estimate_trend(history, &means, step, config)?;
    let weights = softmax_weights(&trend.residuals, config.beta)?;
    let pivot = select_pivot(&weights);
    let g = rewards.num_rollouts();
    let retained = if rewards.num_dims() == 1 {
        (0..g).collect()
    } else {
        let chain = largest_subset(rewards, &weights, pivot)?;
        if config.singleton_chain_fallback && chain.len() <= 1 {
            (0..g).collect()
        } else {
            chain
        }
    };
    finish(rewards, weights, retained, normalizer, config.adv_epsilon)
}

/// Uniform weights, whole group retained.
pub fn uniform_advantage(
    rewards: &RewardMatrix,
    normalizer: Normalizer,
    adv_epsilon: f64,
) -> Result<AdvantageResult> {
    let g = rewards.num_rollouts();
    finish(
        rewards,
        WeightVector::uniform(rewards.num_dims()),
        (0..g).collect(),
        normalizer,
        adv_epsilon,
    )
}

/// Group-normalized advantages of the single dimension with the largest
/// reward spread; the other dimensions are ignored.
pub fn sigma_advantage(rewards: &RewardMatrix, adv_epsilon: f64) -> Result<AdvantageResult> {
    let pivot = select_pivot_sigma(rewards)?;
    let g = rewards.num_rollouts();
    finish(
        rewards,
        WeightVector::one_hot(rewards.num_dims(), pivot),
        (0..g).collect(),
        Normalizer::Grpo,
        adv_epsilon,
    )
}

/// One group-normalized advantage vector per reward dimension, to be applied
/// as `D` successive updates.
pub fn moa_mu_advantages(rewards: &RewardMatrix, adv_epsilon: f64) -> Vec<Vec<f64>> {
    (0..rewards.num_dims())
        .map(|d| grpo_normalize(&rewards.column(d), adv_epsilon))
        .collect()
}

/// Advantages a strategy produces for one group.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategyAdvantages {
    Single(AdvantageResult),
    /// Per-dimension advantages for sequential updates.
    Sequential(Vec<Vec<f64>>),
}

pub fn strategy_advantages(
    strategy: Strategy,
    rewards: &RewardMatrix,
    history: &HistoryBuffer,
    step: u64,
    config: &MoaConfig,
) -> Result<StrategyAdvantages> {
    let eps = config.adv_epsilon;
    let single = match strategy {
        Strategy::MoaGrpo => moa_advantage(rewards, history, step, config, Normalizer::Grpo)?,
        Strategy::MoaRloo => moa_advantage(rewards, history, step, config, Normalizer::Rloo)?,
        Strategy::UniformGrpo => uniform_advantage(rewards, Normalizer::Grpo, eps)?,
        Strategy::UniformRloo => uniform_advantage(rewards, Normalizer::Rloo, eps)?,
        Strategy::MoaSigma => sigma_advantage(rewards, eps)?,
        Strategy::MoaMu => {
            return Ok(StrategyAdvantages::Sequential(moa_mu_advantages(
                rewards, eps,
            )))
        }
    };
    Ok(StrategyAdvantages::Single(single))
}
