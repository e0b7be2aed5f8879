//! Multi-objective bandit environments.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MoaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    /// Per-dimension reward variation confined to disjoint action blocks.
    Orthogonal,
    /// Contains reward vectors that pairwise trade off against each other.
    Conflict,
    Custom,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Orthogonal => "orthogonal",
            EnvKind::Conflict => "conflict",
            EnvKind::Custom => "custom",
        }
    }
}

/// A bandit whose actions carry fixed reward vectors in `[0, 1]^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditEnv {
    kind: EnvKind,
    dims: usize,
    reward_table: Vec<Vec<f64>>,
    /// Standard deviation of Gaussian noise added to each observed reward
    /// (clamped back into `[0, 1]`). Zero gives deterministic rewards.
    #[serde(default)]
    reward_noise: f64,
}

/// Reward every dimension takes outside its own block in an orthogonal env.
pub const ORTHOGONAL_BASELINE: f64 = 0.5;

impl BanditEnv {
    fn build(kind: EnvKind, reward_table: Vec<Vec<f64>>) -> Result<Self> {
        if reward_table.len() < 2 {
            return Err(MoaError::invalid(
                "reward_table",
                "needs at least two actions",
            ));
        }
        let dims = reward_table[0].len();
        if dims == 0 {
            return Err(MoaError::invalid(
                "reward_table",
                "needs at least one dimension",
            ));
        }
        for (a, row) in reward_table.iter().enumerate() {
            if row.len() != dims {
                return Err(MoaError::invalid(
                    "reward_table",
                    format!("action {a} has {} dims, expected {dims}", row.len()),
                ));
            }
            if row.iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(MoaError::invalid(
                    "reward_table",
                    format!("action {a} has a reward outside [0, 1]"),
                ));
            }
        }
        Ok(Self {
            kind,
            dims,
            reward_table,
            reward_noise: 0.0,
        })
    }

    /// Sets the observation noise level.
    pub fn with_reward_noise(mut self, std: f64) -> Result<Self> {
        if !(std.is_finite() && std >= 0.0) {
            return Err(MoaError::invalid(
                "reward_noise",
                format!("{std} must be >= 0"),
            ));
        }
        self.reward_noise = std;
        Ok(self)
    }

    pub fn reward_noise(&self) -> f64 {
        self.reward_noise
    }

    /// Draws an observed reward vector for `action`.
    pub fn observe<R: Rng + ?Sized>(&self, action: usize, rng: &mut R) -> Vec<f64> {
        let mean = &self.reward_table[action];
        if self.reward_noise == 0.0 {
            return mean.clone();
        }
        mean.iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                (m + self.reward_noise * z).clamp(0.0, 1.0)
            })
            .collect()
    }

    pub fn custom(reward_table: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(EnvKind::Custom, reward_table)
    }

    /// One block of actions per dimension. Inside block `d`, actions alternate
    /// between `0.5 + deltas[d]` and `0.5 - deltas[d]` on dimension `d`; every
    /// other entry is `0.5`.
    ///
    /// At any policy that is uniform within each block pair the expected
    /// reward of dimension `d` is exactly the baseline, so the centred
    /// per-dimension gradients have disjoint support and the Gram matrix is
    /// diagonal with `s_d = (block_size / A^2) deltas[d]^2` at the uniform
    /// policy.
    pub fn orthogonal(block_size: usize, deltas: &[f64]) -> Result<Self> {
        if block_size < 2 || !block_size.is_multiple_of(2) {
            return Err(MoaError::invalid(
                "block_size",
                "must be even and at least 2",
            ));
        }
        if deltas.is_empty() {
            return Err(MoaError::invalid("deltas", "need at least one dimension"));
        }
        if deltas
            .iter()
            .any(|d| !(*d >= 0.0 && *d <= ORTHOGONAL_BASELINE))
        {
            return Err(MoaError::invalid("deltas", "entries must lie in [0, 0.5]"));
        }
        let dims = deltas.len();
        let mut table = Vec::with_capacity(dims * block_size);
        for (d, delta) in deltas.iter().enumerate() {
            for i in 0..block_size {
                let mut row = vec![ORTHOGONAL_BASELINE; dims];
                row[d] = if i % 2 == 0 {
                    ORTHOGONAL_BASELINE + delta
                } else {
                    ORTHOGONAL_BASELINE - delta
                };
                table.push(row);
            }
        }
        Self::build(EnvKind::Orthogonal, table)
    }

    /// Four dimensions, blocks of two, deltas `0.1, 0.2, 0.3, 0.4`.
    pub fn default_orthogonal() -> Self {
        Self::orthogonal(2, &[0.1, 0.2, 0.3, 0.4]).expect("valid default")
    }

    /// Orthogonal layout with the same delta on every dimension, so all
    /// gradient norms coincide.
    pub fn symmetric_orthogonal(dims: usize, delta: f64) -> Result<Self> {
        Self::orthogonal(2, &vec![delta; dims])
    }

    /// The eight corners of the unit cube in three dimensions. Contains the
    /// pairwise trade-off triple `(1,0,1)`, `(1,1,0)`, `(0,1,1)`.
    pub fn conflict() -> Self {
        let table = (0..8u32)
            .map(|bits| (0..3).map(|d| f64::from((bits >> (2 - d)) & 1)).collect())
            .collect();
        Self::build(EnvKind::Conflict, table).expect("valid conflict table")
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn num_actions(&self) -> usize {
        self.reward_table.len()
    }

    pub fn num_dims(&self) -> usize {
        self.dims
    }

    pub fn reward_table(&self) -> &[Vec<f64>] {
        &self.reward_table
    }

    pub fn rewards(&self, action: usize) -> &[f64] {
        &self.reward_table[action]
    }

    pub fn reward(&self, action: usize, d: usize) -> f64 {
        self.reward_table[action][d]
    }

    /// Mean of the action's reward vector.
    pub fn scalarized(&self, action: usize) -> f64 {
        self.reward_table[action].iter().sum::<f64>() / self.dims as f64
    }
}
