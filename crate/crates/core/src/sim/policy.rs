//! Tabular softmax policy, exact gradients and the clipped surrogate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MoaError, Result};
use crate::sim::env::BanditEnv;
use crate::types::{GroupSample, Origin};

/// Logits of a softmax policy over the environment's actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub logits: Vec<f64>,
}

impl PolicyParams {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(MoaError::Shape("policy needs at least one action".into()));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(MoaError::NonFinite("logits"));
        }
        Ok(Self { logits })
    }

    pub fn uniform(num_actions: usize) -> Self {
        Self {
            logits: vec![0.0; num_actions],
        }
    }

    pub fn num_actions(&self) -> usize {
        self.logits.len()
    }

    pub fn probs(&self) -> Vec<f64> {
        let max = self
            .logits
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        // u landed in the rounding gap above the cumulative sum.
        probs
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(probs.len() - 1)
    }
}

/// Exact gradient of `E_{a~pi}[r_d(a)]` with respect to the logits:
/// `pi(a) (r_d(a) - E_pi[r_d])`.
pub fn exact_dimension_gradient(
    params: &PolicyParams,
    env: &BanditEnv,
    d: usize,
) -> Result<Vec<f64>> {
    check_policy_env(params, env)?;
    if d >= env.num_dims() {
        return Err(MoaError::Index {
            index: d,
            len: env.num_dims(),
        });
    }
    let probs = params.probs();
    let expected: f64 = probs
        .iter()
        .enumerate()
        .map(|(a, p)| p * env.reward(a, d))
        .sum();
    Ok(probs
        .iter()
        .enumerate()
        .map(|(a, p)| p * (env.reward(a, d) - expected))
        .collect())
}

fn check_policy_env(params: &PolicyParams, env: &BanditEnv) -> Result<()> {
    if params.num_actions() != env.num_actions() {
        return Err(MoaError::Shape(format!(
            "policy has {} actions, environment has {}",
            params.num_actions(),
            env.num_actions()
        )));
    }
    Ok(())
}

/// Inner products `g_d . g_i`.
pub fn gram_matrix(gradients: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if let Some(first) = gradients.first() {
        if gradients.iter().any(|g| g.len() != first.len()) {
            return Err(MoaError::Shape("gradients differ in length".into()));
        }
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let n = gradients.len();
    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = dot(&gradients[i], &gradients[j]);
            gram[i][j] = v;
            gram[j][i] = v;
        }
    }
    Ok(gram)
}

/// First-order expected improvement `eta v^T G v` of a step along `sum_d v_d g_d`.
pub fn expected_improvement(weights: &[f64], gram: &[Vec<f64>], eta: f64) -> Result<f64> {
    if gram.len() != weights.len() || gram.iter().any(|row| row.len() != weights.len()) {
        return Err(MoaError::Shape(format!(
            "gram is not {0}x{0}",
            weights.len()
        )));
    }
    let mut q = 0.0;
    for (i, row) in gram.iter().enumerate() {
        for (j, g) in row.iter().enumerate() {
            q += weights[i] * g * weights[j];
        }
    }
    Ok(eta * q)
}

/// Population covariance `(1/D) sum (x - mean x)(y - mean y)`.
pub fn population_covariance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(MoaError::Shape(
            "covariance needs two equal non-empty vectors".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    Ok(x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / n)
}

/// Leading-order improvement of residual-softmax over uniform weights on a
/// diagonal Gram matrix: `eta (2 beta / D) Cov(u, s)`.
pub fn predicted_gap(residuals: &[f64], sq_norms: &[f64], beta: f64, eta: f64) -> Result<f64> {
    let cov = population_covariance(residuals, sq_norms)?;
    Ok(eta * 2.0 * beta / residuals.len() as f64 * cov)
}

/// Draws `group_size - off_policy_count` actions from `params` and the rest
/// from `expert`, on-policy samples first.
pub fn sample_group<R: Rng + ?Sized>(
    params: &PolicyParams,
    expert: &PolicyParams,
    env: &BanditEnv,
    group_size: usize,
    off_policy_count: usize,
    rng: &mut R,
) -> Result<Vec<GroupSample>> {
    check_policy_env(params, env)?;
    check_policy_env(expert, env)?;
    if off_policy_count >= group_size {
        return Err(MoaError::invalid(
            "off_policy_count",
            format!("{off_policy_count} must be below group size {group_size}"),
        ));
    }
    let on = params.probs();
    let off = expert.probs();
    let mut group = Vec::with_capacity(group_size);
    for i in 0..group_size {
        let (probs, origin) = if i < group_size - off_policy_count {
            (&on, Origin::OnPolicy)
        } else {
            (&off, Origin::OffPolicy)
        };
        let a = PolicyParams::sample_action(probs, rng);
        group.push(GroupSample {
            action: a,
            rewards: env.observe(a, rng),
            origin,
            behavior_prob: probs[a],
        });
    }
    Ok(group)
}

fn ratio_denominator(sample: &GroupSample, old_probs: &[f64]) -> f64 {
    match sample.origin {
        Origin::OnPolicy => old_probs[sample.action],
        Origin::OffPolicy => sample.behavior_prob,
    }
}

fn check_group(
    params: &PolicyParams,
    old: &PolicyParams,
    group: &[GroupSample],
    advantages: &[f64],
) -> Result<()> {
    if group.len() != advantages.len() {
        return Err(MoaError::Shape(format!(
            "{} samples but {} advantages",
            group.len(),
            advantages.len()
        )));
    }
    if old.num_actions() != params.num_actions() {
        return Err(MoaError::Shape(
            "old policy has a different action count".into(),
        ));
    }
    if let Some(s) = group.iter().find(|s| s.action >= params.num_actions()) {
        return Err(MoaError::Index {
            index: s.action,
            len: params.num_actions(),
        });
    }
    Ok(())
}

/// `(1/G) sum_g min(rho_g A_g, clip(rho_g, 1-eps, 1+eps) A_g)`.
///
/// The ratio denominator is the old policy's probability for on-policy
/// samples and the recorded behavior probability for off-policy ones.
pub fn surrogate_objective(
    params: &PolicyParams,
    old: &PolicyParams,
    group: &[GroupSample],
    advantages: &[f64],
    clip_range: f64,
) -> Result<f64> {
    check_group(params, old, group, advantages)?;
    let probs = params.probs();
    let old_probs = old.probs();
    let total: f64 = group
        .iter()
        .zip(advantages)
        .map(|(s, &adv)| {
            let rho = probs[s.action] / ratio_denominator(s, &old_probs);
            let clipped = rho.clamp(1.0 - clip_range, 1.0 + clip_range);
            (rho * adv).min(clipped * adv)
        })
        .sum();
    Ok(total / group.len() as f64)
}

/// Gradient of [`surrogate_objective`] with respect to the logits.
///
/// A sample contributes `A rho (e_a - pi)` while its unclipped term is the
/// active side of the `min`, and nothing once clipping holds it constant.
pub fn surrogate_gradient(
    params: &PolicyParams,
    old: &PolicyParams,
    group: &[GroupSample],
    advantages: &[f64],
    clip_range: f64,
) -> Result<Vec<f64>> {
    check_group(params, old, group, advantages)?;
    let probs = params.probs();
    let old_probs = old.probs();
    let mut grad = vec![0.0; probs.len()];
    for (s, &adv) in group.iter().zip(advantages) {
        if adv == 0.0 {
            continue;
        }
        let rho = probs[s.action] / ratio_denominator(s, &old_probs);
        let active = if adv > 0.0 {
            rho <= 1.0 + clip_range
        } else {
            rho >= 1.0 - clip_range
        };
        if !active {
            continue;
        }
        let scale = adv * rho;
        for (a, g) in grad.iter_mut().enumerate() {
            let indicator = if a == s.action { 1.0 } else { 0.0 };
            *g += scale * (indicator - probs[a]);
        }
    }
    let n = group.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}

/// One gradient-ascent step of size `eta` on the clipped surrogate.
pub fn surrogate_update(
    params: &PolicyParams,
    old: &PolicyParams,
    group: &[GroupSample],
    advantages: &[f64],
    eta: f64,
    clip_range: f64,
) -> Result<PolicyParams> {
    let grad = surrogate_gradient(params, old, group, advantages, clip_range)?;
    let logits: Vec<f64> = params
        .logits
        .iter()
        .zip(&grad)
        .map(|(l, g)| l + eta * g)
        .collect();
    PolicyParams::new(logits)
}
