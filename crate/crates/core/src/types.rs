//! Shared domain types and the rolling reward-history buffer.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{MoaError, Result};

/// Absolute tolerance for "weights sum to one".
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// A `G x D` matrix of rollout rewards, row-major. Rows are rollouts, columns
/// are reward dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardMatrix {
    rows: usize,
    dims: usize,
    values: Vec<f64>,
}

impl RewardMatrix {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let g = rows.len();
        if g == 0 {
            return Err(MoaError::Shape(
                "reward matrix needs at least one row".into(),
            ));
        }
        let d = rows[0].as_ref().len();
        if d == 0 {
            return Err(MoaError::Shape(
                "reward matrix needs at least one column".into(),
            ));
        }
        let mut values = Vec::with_capacity(g * d);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != d {
                return Err(MoaError::Shape(format!(
                    "row {i} has {} columns, expected {d}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MoaError::NonFinite("reward matrix"));
        }
        Ok(Self {
            rows: g,
            dims: d,
            values,
        })
    }

    /// Number of rollouts `G`.
    pub fn num_rollouts(&self) -> usize {
        self.rows
    }

    /// Number of reward dimensions `D`.
    pub fn num_dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, g: usize) -> &[f64] {
        &self.values[g * self.dims..(g + 1) * self.dims]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dims)
    }

    pub fn get(&self, g: usize, d: usize) -> f64 {
        self.values[g * self.dims + d]
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        self.rows().map(|r| r[d]).collect()
    }

    /// Returns a copy with every entry shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            dims: self.dims,
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }
}

/// Rolling buffer of per-step mean reward vectors, most recent last.
///
/// Holds at most `capacity` entries; pushing beyond that evicts the oldest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryBuffer {
    capacity: usize,
    dims: usize,
    entries: VecDeque<(u64, Vec<f64>)>,
}

impl HistoryBuffer {
    pub fn new(capacity: usize, dims: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(MoaError::invalid("history_capacity", "must be positive"));
        }
        if dims == 0 {
            return Err(MoaError::Shape(
                "history needs at least one dimension".into(),
            ));
        }
        Ok(Self {
            capacity,
            dims,
            entries: VecDeque::with_capacity(capacity + 1),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn num_dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_step(&self) -> Option<u64> {
        self.entries.back().map(|(s, _)| *s)
    }

    pub fn steps(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|(s, _)| *s)
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, &[f64])> + '_ {
        self.entries.iter().map(|(s, v)| (*s, v.as_slice()))
    }

    /// Appends the mean reward vector for `step`, evicting the oldest entry
    /// once the buffer is over capacity.
    pub fn push(&mut self, step: u64, means: &[f64]) -> Result<()> {
        if means.len() != self.dims {
            return Err(MoaError::Shape(format!(
                "history entry has {} dims, expected {}",
                means.len(),
                self.dims
            )));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(MoaError::NonFinite("history entry"));
        }
        if let Some(last) = self.last_step() {
            if step <= last {
                return Err(MoaError::Ordering { step, last });
            }
        }
        self.entries.push_back((step, means.to_vec()));
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    /// Consuming variant of [`push`](Self::push).
    pub fn with_entry(mut self, step: u64, means: &[f64]) -> Result<Self> {
        self.push(step, means)?;
        Ok(self)
    }

    /// The `d`-th coordinate of every stored entry, paired with its step.
    pub fn column(&self, d: usize) -> Result<Vec<(u64, f64)>> {
        if d >= self.dims {
            return Err(MoaError::Index {
                index: d,
                len: self.dims,
            });
        }
        Ok(self.entries.iter().map(|(s, v)| (*s, v[d])).collect())
    }
}

/// Softmax importance weights together with the pivot dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
    pivot: usize,
}

impl WeightVector {
    /// Validates `weights` and sets the pivot to the lowest index attaining
    /// the maximum.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(MoaError::Shape("weight vector is empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(MoaError::NonFinite("weights"));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(MoaError::invalid("weights", "negative entry"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(MoaError::invalid(
                "weights",
                format!("sum is {sum}, expected 1"),
            ));
        }
        let pivot = argmax_lowest(&weights);
        Ok(Self { weights, pivot })
    }

    pub fn uniform(dims: usize) -> Self {
        assert!(dims > 0, "uniform weights need at least one dimension");
        Self {
            weights: vec![1.0 / dims as f64; dims],
            pivot: 0,
        }
    }

    pub fn one_hot(dims: usize, index: usize) -> Self {
        assert!(index < dims, "one-hot index {index} out of range {dims}");
        let mut weights = vec![0.0; dims];
        weights[index] = 1.0;
        Self {
            weights,
            pivot: index,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn pivot(&self) -> usize {
        self.pivot
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Index of the first maximal element. NaN-free input assumed.
pub(crate) fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Which policy produced a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    OnPolicy,
    OffPolicy,
}

/// One rollout of a group: the action taken, its reward vector, and the
/// probability of that action under the policy that sampled it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub action: usize,
    pub rewards: Vec<f64>,
    pub origin: Origin,
    pub behavior_prob: f64,
}

impl GroupSample {
    pub fn new(
        action: usize,
        rewards: Vec<f64>,
        origin: Origin,
        behavior_prob: f64,
    ) -> Result<Self> {
        if !(behavior_prob > 0.0 && behavior_prob <= 1.0) {
            return Err(MoaError::invalid(
                "behavior_prob",
                format!("{behavior_prob} not in (0, 1]"),
            ));
        }
        Ok(Self {
            action,
            rewards,
            origin,
            behavior_prob,
        })
    }
}

/// Hyperparameters of the advantage pipeline and the clipped surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoaConfig {
    /// Softmax inverse temperature applied to trend residuals.
    pub beta: f64,
    /// Number of past steps kept for the trend fit.
    pub history_capacity: usize,
    /// Denominator guard in group normalization.
    pub adv_epsilon: f64,
    /// Surrogate ratio clip range.
    pub clip_range: f64,
    /// Entries required before the trend fit replaces the cold-start fallback.
    pub min_history_for_trend: usize,
    /// Retain the whole group when the conflict chain has at most one member.
    pub singleton_chain_fallback: bool,
}

impl Default for MoaConfig {
    fn default() -> Self {
        Self {
            beta: 10.0,
            history_capacity: 8,
            adv_epsilon: 1e-8,
            clip_range: 0.2,
            min_history_for_trend: 3,
            singleton_chain_fallback: false,
        }
    }
}

impl MoaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(MoaError::invalid(
                "beta",
                format!("{} must be > 0", self.beta),
            ));
        }
        if self.history_capacity < 2 {
            return Err(MoaError::invalid("history_capacity", "must be at least 2"));
        }
        if !(self.adv_epsilon.is_finite() && self.adv_epsilon > 0.0) {
            return Err(MoaError::invalid(
                "adv_epsilon",
                format!("{} must be > 0", self.adv_epsilon),
            ));
        }
        if !(self.clip_range > 0.0 && self.clip_range < 1.0) {
            return Err(MoaError::invalid(
                "clip_range",
                format!("{} not in (0, 1)", self.clip_range),
            ));
        }
        if self.min_history_for_trend < 2 {
            return Err(MoaError::invalid(
                "min_history_for_trend",
                "must be at least 2",
            ));
        }
        if self.min_history_for_trend > self.history_capacity {
            return Err(MoaError::invalid(
                "min_history_for_trend",
                format!(
                    "{} exceeds history_capacity {}",
                    self.min_history_for_trend, self.history_capacity
                ),
            ));
        }
        Ok(())
    }
}

/// Output of the advantage pipeline for one group, kept whole for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageResult {
    pub advantages: Vec<f64>,
    /// Retained rollout indices, ascending.
    pub retained: Vec<usize>,
    pub weights: WeightVector,
    /// Weighted rewards `R' = R w`.
    pub collapsed: Vec<f64>,
    pub group_mean: f64,
    pub group_std: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_into_empty_buffer() {
        let mut h = HistoryBuffer::new(8, 2).unwrap();
        h.push(0, &[0.5, 0.5]).unwrap();
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn push_evicts_oldest_at_capacity() {
        let h = HistoryBuffer::new(2, 1)
            .unwrap()
            .with_entry(0, &[0.0])
            .unwrap()
            .with_entry(1, &[0.1])
            .unwrap()
            .with_entry(2, &[0.2])
            .unwrap();
        assert_eq!(h.steps().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn push_rejects_repeated_step() {
        let mut h = HistoryBuffer::new(4, 1).unwrap();
        h.push(0, &[0.0]).unwrap();
        h.push(1, &[0.0]).unwrap();
        assert_eq!(
            h.push(1, &[0.0]),
            Err(MoaError::Ordering { step: 1, last: 1 })
        );
    }

    #[test]
    fn push_rejects_dimension_mismatch_and_nan() {
        let mut h = HistoryBuffer::new(4, 2).unwrap();
        assert!(matches!(h.push(0, &[0.0]), Err(MoaError::Shape(_))));
        assert!(matches!(
            h.push(0, &[0.0, f64::NAN]),
            Err(MoaError::NonFinite(_))
        ));
        assert!(h.is_empty());
    }

    #[test]
    fn column_projection() {
        let h = HistoryBuffer::new(8, 2)
            .unwrap()
            .with_entry(0, &[0.1, 0.9])
            .unwrap()
            .with_entry(1, &[0.2, 0.8])
            .unwrap();
        assert_eq!(h.column(0).unwrap(), vec![(0, 0.1), (1, 0.2)]);
        assert_eq!(h.column(1).unwrap(), vec![(0, 0.9), (1, 0.8)]);
        assert_eq!(h.column(2), Err(MoaError::Index { index: 2, len: 2 }));
    }

    #[test]
    fn reward_matrix_rejects_ragged_and_empty() {
        assert!(RewardMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0]]).is_err());
        assert!(RewardMatrix::from_rows::<Vec<f64>>(&[]).is_err());
        assert!(RewardMatrix::from_rows(&[Vec::<f64>::new()]).is_err());
        assert!(RewardMatrix::from_rows(&[vec![f64::INFINITY]]).is_err());
    }

    #[test]
    fn weight_vector_pivot_is_lowest_argmax() {
        let w = WeightVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(w.pivot(), 1);
        let w = WeightVector::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(w.pivot(), 0);
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn config_validation() {
        MoaConfig::default().validate().unwrap();
        let bad = MoaConfig {
            beta: -1.0,
            ..MoaConfig::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(MoaError::InvalidParameter { name: "beta", .. })
        ));
        let bad = MoaConfig {
            clip_range: 1.0,
            ..MoaConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = MoaConfig {
            min_history_for_trend: 9,
            ..MoaConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn group_sample_checks_probability() {
        assert!(GroupSample::new(0, vec![1.0], Origin::OnPolicy, 0.0).is_err());
        assert!(GroupSample::new(0, vec![1.0], Origin::OffPolicy, 1.0).is_ok());
    }
}
