//! Multi-objective advantage estimation for group-relative policy optimization.
//!
//! The pipeline scores a group of rollouts on `D` reward dimensions and turns
//! that reward matrix into one scalar advantage per rollout:
//!
//! 1. per-dimension group means are compared against a least-squares trend
//!    fitted to recent history ([`trend`]); the residuals go through a softmax
//!    to produce importance weights and a pivot dimension,
//! 2. rollouts that disagree with the pivot ordering are dropped by a longest
//!    chain search over a strict partial order ([`conflict`]),
//! 3. the weighted rewards are group-normalized and masked ([`advantage`]).
//!
//! [`sim`] contains a tabular multi-objective bandit, a clipped-surrogate
//! softmax-policy trainer and a Monte-Carlo harness for the small-temperature
//! improvement bound of residual-softmax weighting.

pub mod advantage;
pub mod conflict;
pub mod error;
pub mod sim;
pub mod trend;
pub mod types;

pub use advantage::{
    collapse_rewards, grpo_normalize, mask_conflicts, moa_advantage, moa_mu_advantages,
    rloo_normalize, Normalizer, Strategy,
};
pub use conflict::{brute_force_largest_subset, dominates, largest_subset, OrderedPair};
pub use error::{MoaError, Result};
pub use trend::{
    estimate_trend, first_order_weights, group_mean_rewards, linreg_predict, select_pivot,
    select_pivot_sigma, softmax_weights, TrendEstimate,
};
pub use types::{
    AdvantageResult, GroupSample, HistoryBuffer, MoaConfig, Origin, RewardMatrix, WeightVector,
};
