//! Conflict-rollout elimination.
//!
//! Each rollout `g` is mapped to the pair `(R[g, d*], w . R[g])`. Rollout `i`
//! dominates `j` when it is strictly better in both coordinates. The retained
//! set is a maximum-cardinality chain under that strict partial order, found
//! as a longest strictly increasing subsequence after sorting by pivot reward
//! (ties by descending weighted sum, which keeps equal-pivot rollouts out of
//! the same chain).
//!
//! Weighted sums that differ by at most [`WEIGHTED_SUM_TIE_TOL`] are treated
//! as equal, so rows that tie exactly in real arithmetic are not separated by
//! floating-point rounding of the dot product.

use serde::{Deserialize, Serialize};

use crate::error::{MoaError, Result};
use crate::types::{RewardMatrix, WeightVector};

/// Weighted sums closer than this are incomparable.
pub const WEIGHTED_SUM_TIE_TOL: f64 = 1e-12;

/// Largest group accepted by [`brute_force_largest_subset`].
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderedPair {
    pub rollout_index: usize,
    pub pivot_reward: f64,
    pub weighted_sum: f64,
}

/// `true` iff `a` is strictly greater than `b` on both the pivot reward and
/// the weighted sum.
pub fn dominates(a: &OrderedPair, b: &OrderedPair) -> bool {
    a.pivot_reward > b.pivot_reward && a.weighted_sum > b.weighted_sum + WEIGHTED_SUM_TIE_TOL
}

/// Builds the `(pivot reward, weighted sum)` pair of every rollout.
pub fn ordered_pairs(
    rewards: &RewardMatrix,
    weights: &WeightVector,
    pivot: usize,
) -> Result<Vec<OrderedPair>> {
    let dims = rewards.num_dims();
    if weights.len() != dims {
        return Err(MoaError::Shape(format!(
            "weights have {} dims, rewards have {dims}",
            weights.len()
        )));
    }
    if pivot >= dims {
        return Err(MoaError::Index {
            index: pivot,
            len: dims,
        });
    }
    Ok(rewards
        .rows()
        .enumerate()
        .map(|(g, row)| OrderedPair {
            rollout_index: g,
            pivot_reward: row[pivot],
            weighted_sum: dot(weights.weights(), row),
        })
        .collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Longest chain among `pairs`, returned in increasing order.
///
/// Among maximum chains, returns the one that is lexicographically first in
/// the (pivot ascending, weighted sum descending, index ascending) sort.
/// `O(n log n)`.
pub fn longest_chain(pairs: &[OrderedPair]) -> Vec<OrderedPair> {
    let n = pairs.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| {
        a.pivot_reward
            .total_cmp(&b.pivot_reward)
            .then(b.weighted_sum.total_cmp(&a.weighted_sum))
            .then(a.rollout_index.cmp(&b.rollout_index))
    });

    // starts[k]: length of the longest chain that begins at sorted[k]. Built
    // right to left as an increasing-subsequence pass over negated sums.
    let mut starts = vec![0usize; n];
    let mut tails: Vec<f64> = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let v = -sorted[k].weighted_sum;
        let pos = tails.partition_point(|&t| v > t + WEIGHTED_SUM_TIE_TOL);
        if pos == tails.len() {
            tails.push(v);
        } else if v < tails[pos] {
            tails[pos] = v;
        }
        starts[k] = pos + 1;
    }

    let best = tails.len();
    let mut chain = Vec::with_capacity(best);
    let mut need = best;
    for (k, pair) in sorted.iter().enumerate() {
        if need == 0 {
            break;
        }
        let extends = chain.last().is_none_or(|prev: &OrderedPair| {
            pair.weighted_sum > prev.weighted_sum + WEIGHTED_SUM_TIE_TOL
        });
        if starts[k] == need && extends {
            chain.push(*pair);
            need -= 1;
        }
    }
    debug_assert_eq!(chain.len(), best);
    chain
}

/// Maximum-cardinality set of rollouts forming a strict chain under
/// [`dominates`], as ascending rollout indices.
pub fn largest_subset(
    rewards: &RewardMatrix,
    weights: &WeightVector,
    pivot: usize,
) -> Result<Vec<usize>> {
    let pairs = ordered_pairs(rewards, weights, pivot)?;
    let mut idx: Vec<usize> = longest_chain(&pairs)
        .into_iter()
        .map(|p| p.rollout_index)
        .collect();
    idx.sort_unstable();
    Ok(idx)
}

/// Whether every two members of `pairs` are comparable.
pub fn is_chain(pairs: &[OrderedPair]) -> bool {
    for (i, a) in pairs.iter().enumerate() {
        for b in &pairs[i + 1..] {
            if !(dominates(a, b) || dominates(b, a)) {
                return false;
            }
        }
    }
    true
}

/// Exhaustive search over all subsets. Test oracle for [`largest_subset`].
pub fn brute_force_largest_subset(
    rewards: &RewardMatrix,
    weights: &WeightVector,
    pivot: usize,
) -> Result<Vec<usize>> {
    let g = rewards.num_rollouts();
    if g > BRUTE_FORCE_LIMIT {
        return Err(MoaError::TooLarge(g));
    }
    let pairs = ordered_pairs(rewards, weights, pivot)?;
    let mut best: Vec<usize> = Vec::new();
    let mut members = Vec::with_capacity(g);
    for mask in 1u32..(1u32 << g) {
        if (mask.count_ones() as usize) <= best.len() {
            continue;
        }
        members.clear();
        members.extend((0..g).filter(|i| mask & (1 << i) != 0).map(|i| pairs[i]));
        if is_chain(&members) {
            best = members.iter().map(|p| p.rollout_index).collect();
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(p: f64, s: f64) -> OrderedPair {
        OrderedPair {
            rollout_index: 0,
            pivot_reward: p,
            weighted_sum: s,
        }
    }

    fn matrix(rows: &[&[f64]]) -> RewardMatrix {
        RewardMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&pair(1.0, 0.9), &pair(0.5, 0.4)));
        assert!(!dominates(&pair(1.0, 0.4), &pair(0.5, 0.4)));
        let p = pair(0.3, 0.3);
        assert!(!dominates(&p, &p));
    }

    #[test]
    fn singleton_group() {
        let r = matrix(&[&[0.2, 0.7]]);
        assert_eq!(
            largest_subset(&r, &WeightVector::uniform(2), 0).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn pairwise_trade_off_triple_has_no_comparable_pair() {
        let r = matrix(&[&[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0], &[0.0, 1.0, 1.0]]);
        let w = WeightVector::uniform(3);
        assert_eq!(largest_subset(&r, &w, 0).unwrap().len(), 1);
        assert_eq!(brute_force_largest_subset(&r, &w, 0).unwrap().len(), 1);
    }

    #[test]
    fn totally_ordered_rows_are_all_kept() {
        let r = matrix(&[&[0.0, 0.0], &[0.5, 0.5], &[1.0, 1.0]]);
        let w = WeightVector::uniform(2);
        assert_eq!(largest_subset(&r, &w, 0).unwrap(), vec![0, 1, 2]);
        assert_eq!(
            brute_force_largest_subset(&r, &w, 0).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn opposed_orders_keep_one() {
        let r = matrix(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let w = WeightVector::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(largest_subset(&r, &w, 0).unwrap().len(), 1);
        assert_eq!(brute_force_largest_subset(&r, &w, 0).unwrap().len(), 1);
        // Uniform weights also tie the weighted sums.
        let w = WeightVector::uniform(2);
        assert_eq!(brute_force_largest_subset(&r, &w, 0).unwrap().len(), 1);
    }

    #[test]
    fn identical_rows_keep_one() {
        let r = matrix(&[&[0.4, 0.6], &[0.4, 0.6], &[0.4, 0.6], &[0.4, 0.6]]);
        let w = WeightVector::uniform(2);
        assert_eq!(largest_subset(&r, &w, 1).unwrap().len(), 1);
        assert_eq!(brute_force_largest_subset(&r, &w, 1).unwrap().len(), 1);
    }

    #[test]
    fn rounding_does_not_break_ties() {
        // 0.1 + 0.2 and 0.2 + 0.1 can round differently; both are 0.3.
        let r = matrix(&[&[0.1, 0.2, 0.0], &[0.2, 0.0, 0.1], &[0.0, 0.1, 0.2]]);
        let w = WeightVector::uniform(3);
        assert_eq!(largest_subset(&r, &w, 0).unwrap().len(), 1);
    }

    #[test]
    fn equal_pivot_rewards_never_chain() {
        let r = matrix(&[&[0.5, 0.0], &[0.5, 1.0], &[1.0, 1.0]]);
        let w = WeightVector::uniform(2);
        let m = largest_subset(&r, &w, 0).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(brute_force_largest_subset(&r, &w, 0).unwrap().len(), 2);
    }

    #[test]
    fn lexicographically_first_chain() {
        // Two maximum chains {0, 2} and {1, 2}; row 0 sorts first.
        let r = matrix(&[&[0.0, 0.1], &[0.1, 0.0], &[1.0, 1.0]]);
        let w = WeightVector::uniform(2);
        assert_eq!(largest_subset(&r, &w, 0).unwrap(), vec![0, 2]);
    }

    #[test]
    fn brute_force_guard() {
        let rows: Vec<Vec<f64>> = (0..21).map(|i| vec![i as f64 / 21.0]).collect();
        let r = RewardMatrix::from_rows(&rows).unwrap();
        assert_eq!(
            brute_force_largest_subset(&r, &WeightVector::uniform(1), 0),
            Err(MoaError::TooLarge(21))
        );
    }

    #[test]
    fn rejects_bad_pivot_and_weights() {
        let r = matrix(&[&[0.0, 1.0]]);
        assert!(largest_subset(&r, &WeightVector::uniform(2), 2).is_err());
        assert!(largest_subset(&r, &WeightVector::uniform(3), 0).is_err());
    }

    #[test]
    fn empty_pair_list() {
        assert!(longest_chain(&[]).is_empty());
    }

    fn grid_matrix() -> impl Strategy<Value = (Vec<Vec<f64>>, usize)> {
        (1usize..=3).prop_flat_map(|d| {
            (
                prop::collection::vec(
                    prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0]), d),
                    1..=8,
                ),
                0..d,
            )
        })
    }

    fn weights_for(d: usize, raw: &[f64]) -> WeightVector {
        let w: Vec<f64> = raw[..d].iter().map(|x| x + 0.05).collect();
        let s: f64 = w.iter().sum();
        WeightVector::new(w.into_iter().map(|x| x / s).collect()).unwrap()
    }

    proptest! {
        #[test]
        fn matches_oracle_and_is_a_chain(
            (rows, pivot) in grid_matrix(),
            raw in prop::collection::vec(0.0f64..1.0, 3),
            uniform in any::<bool>(),
        ) {
            let r = RewardMatrix::from_rows(&rows).unwrap();
            let d = r.num_dims();
            let w = if uniform { WeightVector::uniform(d) } else { weights_for(d, &raw) };
            let fast = largest_subset(&r, &w, pivot).unwrap();
            let slow = brute_force_largest_subset(&r, &w, pivot).unwrap();
            prop_assert_eq!(fast.len(), slow.len());
            let pairs = ordered_pairs(&r, &w, pivot).unwrap();
            let chosen: Vec<OrderedPair> = fast.iter().map(|&i| pairs[i]).collect();
            prop_assert!(is_chain(&chosen));
        }

        #[test]
        fn duplicating_a_row_never_grows_the_chain(
            (rows, pivot) in grid_matrix(),
            pick in any::<prop::sample::Index>(),
        ) {
            let r = RewardMatrix::from_rows(&rows).unwrap();
            let w = WeightVector::uniform(r.num_dims());
            let before = largest_subset(&r, &w, pivot).unwrap().len();
            let mut dup = rows.clone();
            dup.push(rows[pick.index(rows.len())].clone());
            let r2 = RewardMatrix::from_rows(&dup).unwrap();
            prop_assert_eq!(largest_subset(&r2, &w, pivot).unwrap().len(), before);
        }

        #[test]
        fn permutation_keeps_cardinality(
            (rows, pivot) in grid_matrix(),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let r = RewardMatrix::from_rows(&rows).unwrap();
            let w = WeightVector::uniform(r.num_dims());
            let mut perm: Vec<usize> = (0..rows.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
            let r2 = RewardMatrix::from_rows(&shuffled).unwrap();
            let a = largest_subset(&r, &w, pivot).unwrap();
            let b = largest_subset(&r2, &w, pivot).unwrap();
            prop_assert_eq!(a.len(), b.len());
            let pairs = ordered_pairs(&r2, &w, pivot).unwrap();
            let chosen: Vec<OrderedPair> = b.iter().map(|&i| pairs[i]).collect();
            prop_assert!(is_chain(&chosen));
        }
    }
}
