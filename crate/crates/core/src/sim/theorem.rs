//! Monte-Carlo check of the small-temperature improvement bound.
//!
//! With pairwise-orthogonal per-dimension gradients (diagonal Gram matrix with
//! entries `s_d`) and residuals `u_d = c sqrt(s_d) + xi_d`, residual-softmax
//! weights `w = softmax(beta u)` beat uniform weights `alpha` on first-order
//! expected improvement by
//!
//! ```text
//! E[eta (w'Gw - alpha'G alpha)] = eta (2 beta / D) Cov(u, s) + O(beta^2)
//! ```
//!
//! [`verify_theorem`] draws the noise, evaluates the exact left side for each
//! draw and compares its mean against the mean of the leading-order term.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MoaError, Result};
use crate::sim::env::{BanditEnv, EnvKind};
use crate::sim::policy::{
    exact_dimension_gradient, expected_improvement, gram_matrix, population_covariance,
    predicted_gap, PolicyParams,
};
use crate::trend::softmax_weights;

/// Temperatures above this are outside the regime the bound describes.
pub const SMALL_BETA_WARN: f64 = 0.2;

/// Relative spread of `s_d` below which the gradient norms count as equal.
const EQUAL_NORMS_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub beta: f64,
    /// Mean of `eta (w'Gw - alpha'G alpha)` over trials.
    pub measured_gap: f64,
    /// Mean of `eta (2 beta / D) Cov(u, s)` over trials.
    pub predicted_gap: f64,
    /// Mean sample covariance of residuals and squared gradient norms.
    pub covariance_u_s: f64,
    pub trials: usize,
    /// All `s_d` equal: the covariance vanishes and the bound makes no claim.
    pub zero_covariance: bool,
}

/// Outcome of judging a report against the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoremCheck {
    Pass,
    /// The bound does not apply (zero temperature or equal gradient norms).
    NotApplicable,
    NotPositive,
    OutsideTolerance,
}

impl TheoremReport {
    /// Positive gap within `rel_tol` of the leading-order prediction.
    pub fn check(&self, rel_tol: f64) -> TheoremCheck {
        if self.beta == 0.0 {
            return if self.measured_gap == 0.0 {
                TheoremCheck::Pass
            } else {
                TheoremCheck::OutsideTolerance
            };
        }
        if self.zero_covariance {
            return TheoremCheck::NotApplicable;
        }
        if self.beta > 0.0 && self.measured_gap <= 0.0 {
            return TheoremCheck::NotPositive;
        }
        if (self.measured_gap - self.predicted_gap).abs() > rel_tol * self.predicted_gap.abs() {
            return TheoremCheck::OutsideTolerance;
        }
        TheoremCheck::Pass
    }
}

/// Runs the harness at the uniform policy of `env`.
pub fn verify_theorem(
    env: &BanditEnv,
    c: f64,
    sigma_xi: f64,
    beta: f64,
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<TheoremReport> {
    let params = PolicyParams::uniform(env.num_actions());
    verify_theorem_at(&params, env, c, sigma_xi, beta, eta, trials, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn verify_theorem_at(
    params: &PolicyParams,
    env: &BanditEnv,
    c: f64,
    sigma_xi: f64,
    beta: f64,
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<TheoremReport> {
    if env.kind() != EnvKind::Orthogonal {
        return Err(MoaError::WrongEnvKind {
            expected: EnvKind::Orthogonal.name(),
            found: env.kind().name(),
        });
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(MoaError::invalid("c", format!("{c} must be > 0")));
    }
    if !(sigma_xi.is_finite() && sigma_xi >= 0.0) {
        return Err(MoaError::invalid(
            "sigma_xi",
            format!("{sigma_xi} must be >= 0"),
        ));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(MoaError::invalid("eta", format!("{eta} must be > 0")));
    }
    if !beta.is_finite() {
        return Err(MoaError::NonFinite("beta"));
    }
    if trials == 0 {
        return Err(MoaError::invalid("trials", "must be at least 1"));
    }
    if beta.abs() > SMALL_BETA_WARN {
        log::warn!("beta = {beta} is outside the small-temperature regime");
    }

    let dims = env.num_dims();
    let gradients = (0..dims)
        .map(|d| exact_dimension_gradient(params, env, d))
        .collect::<Result<Vec<_>>>()?;
    let gram = gram_matrix(&gradients)?;
    let s: Vec<f64> = (0..dims).map(|d| gram[d][d]).collect();
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let s_min = s.iter().copied().fold(f64::INFINITY, f64::min);
    let zero_covariance = s_max - s_min <= EQUAL_NORMS_RTOL * s_max;

    let uniform = vec![1.0 / dims as f64; dims];
    let baseline = expected_improvement(&uniform, &gram, eta)?;
    let noise =
        Normal::new(0.0, sigma_xi).map_err(|e| MoaError::invalid("sigma_xi", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut measured = 0.0;
    let mut predicted = 0.0;
    let mut covariance = 0.0;
    let mut u = vec![0.0; dims];
    for _ in 0..trials {
        for (ud, sd) in u.iter_mut().zip(&s) {
            *ud = c * sd.sqrt() + noise.sample(&mut rng);
        }
        let w = softmax_weights(&u, beta)?;
        measured += expected_improvement(w.weights(), &gram, eta)? - baseline;
        predicted += predicted_gap(&u, &s, beta, eta)?;
        covariance += population_covariance(&u, &s)?;
    }
    let n = trials as f64;
    Ok(TheoremReport {
        beta,
        measured_gap: measured / n,
        predicted_gap: predicted / n,
        covariance_u_s: covariance / n,
        trials,
        zero_covariance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_env_has_diagonal_gram() {
        let env = BanditEnv::default_orthogonal();
        let p = PolicyParams::uniform(env.num_actions());
        let grads: Vec<Vec<f64>> = (0..4)
            .map(|d| exact_dimension_gradient(&p, &env, d).unwrap())
            .collect();
        let gram = gram_matrix(&grads).unwrap();
        let max_diag = (0..4).map(|d| gram[d][d]).fold(0.0, f64::max);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(gram[i][j].abs() <= 1e-6 * max_diag);
                }
            }
        }
        // s_d = (2 / 64) delta_d^2
        for (d, delta) in [0.1, 0.2, 0.3, 0.4].iter().enumerate() {
            assert!((gram[d][d] - 2.0 / 64.0 * delta * delta).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_temperature_gives_zero_gap() {
        let env = BanditEnv::default_orthogonal();
        let r = verify_theorem(&env, 1.0, 0.01, 0.0, 1.0, 100, 3).unwrap();
        assert_eq!(r.measured_gap, 0.0);
        assert_eq!(r.check(0.25), TheoremCheck::Pass);
    }

    #[test]
    fn equal_norms_without_noise_give_zero_gap() {
        let env = BanditEnv::symmetric_orthogonal(4, 0.3).unwrap();
        let r = verify_theorem(&env, 1.0, 0.0, 0.05, 1.0, 1000, 3).unwrap();
        assert!(r.zero_covariance);
        assert!(r.measured_gap.abs() < 1e-15);
        assert_eq!(r.check(0.25), TheoremCheck::NotApplicable);
    }

    #[test]
    fn distinct_norms_give_predicted_positive_gap() {
        let env = BanditEnv::default_orthogonal();
        for beta in [0.01, 0.05] {
            let r = verify_theorem(&env, 1.0, 0.005, beta, 1.0, 10_000, 11).unwrap();
            assert!(r.measured_gap > 0.0);
            assert!((r.measured_gap - r.predicted_gap).abs() <= 0.25 * r.predicted_gap.abs());
            assert_eq!(r.check(0.25), TheoremCheck::Pass);
        }
    }

    #[test]
    fn rejects_non_orthogonal_env() {
        let env = BanditEnv::custom(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            verify_theorem(&env, 1.0, 0.0, 0.05, 1.0, 10, 0),
            Err(MoaError::WrongEnvKind { .. })
        ));
    }
}
