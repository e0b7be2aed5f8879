//! Clipped-surrogate training loop over groups of bandit rollouts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advantage::{strategy_advantages, Strategy, StrategyAdvantages};
use crate::error::{MoaError, Result};
use crate::sim::env::BanditEnv;
use crate::sim::policy::{sample_group, surrogate_update, PolicyParams};
use crate::trend::group_mean_rewards;
use crate::types::{argmax_lowest, GroupSample, HistoryBuffer, MoaConfig, RewardMatrix};

/// Inverse temperature of the frozen expert over scalarized action rewards.
pub const EXPERT_SHARPNESS: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub group_size: usize,
    pub groups_per_step: usize,
    /// Expert samples mixed into every group.
    pub off_policy_count: usize,
    /// Step size of each surrogate update.
    pub eta: f64,
    #[serde(skip)]
    pub moa: MoaConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            group_size: 16,
            groups_per_step: 12,
            off_policy_count: 1,
            eta: 0.05,
            moa: MoaConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.moa.validate()?;
        if self.steps == 0 {
            return Err(MoaError::invalid("steps", "must be at least 1"));
        }
        if self.group_size < 2 {
            return Err(MoaError::invalid("group_size", "must be at least 2"));
        }
        if self.groups_per_step == 0 {
            return Err(MoaError::invalid("groups_per_step", "must be at least 1"));
        }
        if self.off_policy_count >= self.group_size {
            return Err(MoaError::invalid(
                "off_policy_count",
                format!(
                    "{} must be below group_size {}",
                    self.off_policy_count, self.group_size
                ),
            ));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(MoaError::invalid(
                "eta",
                format!("{} must be > 0", self.eta),
            ));
        }
        Ok(())
    }
}

/// Per-step training summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub seed: u64,
    pub strategy: Strategy,
    pub step: u64,
    /// Batch mean reward per dimension.
    pub mean_rewards: Vec<f64>,
    /// Importance weights averaged over the step's groups.
    pub weights: Vec<f64>,
    /// Most frequent pivot among the step's groups, lowest index on ties.
    pub pivot: usize,
    /// Mean retained rollouts per group.
    pub retained: f64,
    /// Mean of `mean_rewards`.
    pub scalarized: f64,
}

/// Frozen guidance policy concentrated on the actions with the highest mean
/// reward.
pub fn expert_policy(env: &BanditEnv) -> PolicyParams {
    let scores: Vec<f64> = (0..env.num_actions()).map(|a| env.scalarized(a)).collect();
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    PolicyParams {
        logits: scores
            .iter()
            .map(|s| EXPERT_SHARPNESS * (s - best))
            .collect(),
    }
}

fn group_rng(seed: u64, step: u64, group: usize, groups_per_step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step * groups_per_step as u64 + group as u64);
    rng
}

struct ScoredGroup {
    samples: Vec<GroupSample>,
    rewards: RewardMatrix,
}

/// Trains a uniform-initialized softmax policy on `env` and returns one record
/// per step.
///
/// Each step snapshots the policy, samples `groups_per_step` groups from the
/// snapshot (plus expert samples), scores them under `strategy`, applies one
/// surrogate update per group in order, then pushes the batch-mean reward
/// vector into the history buffer. Groups draw from independent RNG streams
/// keyed by `(seed, step, group)`, so results do not depend on thread count.
pub fn run_training(
    env: &BanditEnv,
    strategy: Strategy,
    config: &TrainConfig,
    seed: u64,
) -> Result<Vec<StepRecord>> {
    config.validate()?;
    let dims = env.num_dims();
    let expert = expert_policy(env);
    let mut params = PolicyParams::uniform(env.num_actions());
    let mut history = HistoryBuffer::new(config.moa.history_capacity, dims)?;
    let mut records = Vec::with_capacity(config.steps);

    for step in 0..config.steps as u64 {
        let old = params.clone();
        let groups = (0..config.groups_per_step)
            .into_par_iter()
            .map(|gi| {
                let mut rng = group_rng(seed, step, gi, config.groups_per_step);
                let samples = sample_group(
                    &old,
                    &expert,
                    env,
                    config.group_size,
                    config.off_policy_count,
                    &mut rng,
                )?;
                let rows: Vec<&[f64]> = samples.iter().map(|s| s.rewards.as_slice()).collect();
                let rewards = RewardMatrix::from_rows(&rows)?;
                Ok(ScoredGroup { samples, rewards })
            })
            .collect::<Result<Vec<_>>>()?;

        let advantages = groups
            .par_iter()
            .map(|g| strategy_advantages(strategy, &g.rewards, &history, step, &config.moa))
            .collect::<Result<Vec<_>>>()?;

        let clip = config.moa.clip_range;
        let mut weight_sum = vec![0.0; dims];
        let mut pivot_votes = vec![0usize; dims];
        let mut retained = 0usize;
        let mut sequential: Vec<&Vec<Vec<f64>>> = Vec::new();
        for (group, adv) in groups.iter().zip(&advantages) {
            match adv {
                StrategyAdvantages::Single(res) => {
                    params = surrogate_update(
                        &params,
                        &old,
                        &group.samples,
                        &res.advantages,
                        config.eta,
                        clip,
                    )?;
                    weight_sum
                        .iter_mut()
                        .zip(res.weights.weights())
                        .for_each(|(s, w)| *s += w);
                    pivot_votes[res.weights.pivot()] += 1;
                    retained += res.retained.len();
                }
                StrategyAdvantages::Sequential(per_dim) => {
                    sequential.push(per_dim);
                    weight_sum.iter_mut().for_each(|s| *s += 1.0 / dims as f64);
                    pivot_votes[0] += 1;
                    retained += config.group_size;
                }
            }
        }
        // Sequential strategies update once per dimension, all groups each time.
        if !sequential.is_empty() {
            for d in 0..dims {
                for (group, per_dim) in groups.iter().zip(&sequential) {
                    params = surrogate_update(
                        &params,
                        &old,
                        &group.samples,
                        &per_dim[d],
                        config.eta,
                        clip,
                    )?;
                }
            }
        }

        let n = config.groups_per_step as f64;
        let mut mean_rewards = vec![0.0; dims];
        for g in &groups {
            for (m, v) in mean_rewards.iter_mut().zip(group_mean_rewards(&g.rewards)) {
                *m += v / n;
            }
        }
        history.push(step, &mean_rewards)?;

        let counts: Vec<f64> = pivot_votes.iter().map(|&c| c as f64).collect();
        records.push(StepRecord {
            seed,
            strategy,
            step,
            scalarized: mean_rewards.iter().sum::<f64>() / dims as f64,
            mean_rewards,
            weights: weight_sum.into_iter().map(|s| s / n).collect(),
            pivot: argmax_lowest(&counts),
            retained: retained as f64 / n,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            groups_per_step: 3,
            ..TrainConfig::default()
        }
    }

    fn trade_off_env() -> BanditEnv {
        BanditEnv::custom(vec![
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 1.0, 1.0],
            vec![0.0, 0.0, 0.0],
            vec![0.5, 0.5, 0.5],
        ])
        .unwrap()
    }

    #[test]
    fn single_step_smoke() {
        let env = trade_off_env();
        for s in Strategy::ALL {
            let recs = run_training(&env, s, &short(1), 4).unwrap();
            assert_eq!(recs.len(), 1);
            let r = &recs[0];
            assert!(r.scalarized.is_finite());
            assert!(r.mean_rewards.iter().all(|v| v.is_finite()));
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(r.retained >= 1.0 && r.retained <= 16.0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let env = trade_off_env();
        let a = run_training(&env, Strategy::MoaGrpo, &short(20), 9).unwrap();
        let b = run_training(&env, Strategy::MoaGrpo, &short(20), 9).unwrap();
        assert_eq!(a, b);
        let c = run_training(&env, Strategy::MoaGrpo, &short(20), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_dimension_matches_uniform() {
        let env = BanditEnv::custom(vec![vec![0.1], vec![0.9], vec![0.4], vec![0.4]]).unwrap();
        let moa = run_training(&env, Strategy::MoaGrpo, &short(30), 5).unwrap();
        let uni = run_training(&env, Strategy::UniformGrpo, &short(30), 5).unwrap();
        for (a, b) in moa.iter().zip(&uni) {
            assert_eq!(a.mean_rewards, b.mean_rewards);
            assert_eq!(a.scalarized.to_bits(), b.scalarized.to_bits());
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.retained, b.retained);
        }
    }

    #[test]
    fn rejects_invalid_config() {
        let env = trade_off_env();
        let cfg = TrainConfig {
            off_policy_count: 16,
            ..short(1)
        };
        assert!(run_training(&env, Strategy::MoaGrpo, &cfg, 0).is_err());
    }

    #[test]
    fn expert_prefers_best_action() {
        let env = trade_off_env();
        let p = expert_policy(&env).probs();
        // Three actions tie at mean 2/3.
        let top: f64 = p[..3].iter().sum();
        assert!(top > 0.98);
    }
}
