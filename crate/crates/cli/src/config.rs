//! Experiment configuration documents.
//!
//! A config is a TOML file with the sections `[env]`, `[moa]`, `[train]`,
//! `[output]` and `[theorem]`. Every key except `env.kind` has a default; see
//! `docs/config.md` for the full schema.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use moa_core::sim::{BanditEnv, EnvKind, TrainConfig};
use moa_core::{MoaConfig, MoaError, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Key the error refers to, when known.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

impl From<MoaError> for ConfigError {
    fn from(e: MoaError) -> Self {
        match e {
            MoaError::InvalidParameter { name, reason } => ConfigError::invalid(name, reason),
            other => ConfigError::invalid("config", other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" => Ok(OutputFormat::Jsonl),
            _ => Err(format!("unknown format `{s}` (expected csv or jsonl)")),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvSection {
    kind: EnvKind,
    #[serde(default)]
    reward_noise: f64,
    block_size: Option<usize>,
    deltas: Option<Vec<f64>>,
    reward_table: Option<Vec<Vec<f64>>>,
    num_actions: Option<usize>,
    num_dims: Option<usize>,
    generator_seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSection {
    strategies: Vec<Strategy>,
    seeds: Vec<u64>,
    steps: usize,
    group_size: usize,
    groups_per_step: usize,
    off_policy_count: usize,
    eta: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            strategies: vec![Strategy::MoaGrpo],
            seeds: vec![0],
            steps: t.steps,
            group_size: t.group_size,
            groups_per_step: t.groups_per_step,
            off_policy_count: t.off_policy_count,
            eta: t.eta,
        }
    }
}

/// Where and how results are written.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Results file; standard output when absent.
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
    /// Exponential moving average of reward columns, factor 0.9.
    pub smooth: bool,
}

/// Parameters of the improvement-bound harness.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremConfig {
    pub betas: Vec<f64>,
    pub trials: usize,
    /// Slope of residuals against gradient norms.
    pub c: f64,
    /// Residual noise level as a fraction of the mean gradient norm.
    pub sigma_xi_rel: f64,
    pub eta: f64,
    pub seed: u64,
    /// Report file; standard output when absent. Written in `output.format`.
    pub report: Option<PathBuf>,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        Self {
            betas: vec![0.01, 0.05],
            trials: 10_000,
            c: 1.0,
            sigma_xi_rel: 0.05,
            eta: 1.0,
            seed: 0,
            report: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    env: EnvSection,
    #[serde(default)]
    moa: MoaConfig,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    output: OutputConfig,
    #[serde(default)]
    theorem: TheoremConfig,
}

/// A validated experiment configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub env: BanditEnv,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub output: OutputConfig,
    pub theorem: TheoremConfig,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text)?;
    let env = build_env(&raw.env)?;

    let t = raw.train;
    if t.strategies.is_empty() {
        return Err(ConfigError::invalid(
            "train.strategies",
            "at least one strategy is required",
        ));
    }
    if t.seeds.is_empty() {
        return Err(ConfigError::invalid(
            "train.seeds",
            "at least one seed is required",
        ));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = t.seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(ConfigError::invalid(
            "train.seeds",
            format!("duplicate seed {dup}"),
        ));
    }
    let train = TrainConfig {
        steps: t.steps,
        group_size: t.group_size,
        groups_per_step: t.groups_per_step,
        off_policy_count: t.off_policy_count,
        eta: t.eta,
        moa: raw.moa,
    };
    train.validate()?;

    let th = &raw.theorem;
    if th.betas.is_empty() {
        return Err(ConfigError::invalid(
            "theorem.betas",
            "at least one value is required",
        ));
    }
    if let Some(b) = th.betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(ConfigError::invalid(
            "theorem.betas",
            format!("{b} must be >= 0"),
        ));
    }
    if th.trials == 0 {
        return Err(ConfigError::invalid("theorem.trials", "must be at least 1"));
    }
    if !(th.c.is_finite() && th.c > 0.0) {
        return Err(ConfigError::invalid(
            "theorem.c",
            format!("{} must be > 0", th.c),
        ));
    }
    if !(th.sigma_xi_rel.is_finite() && th.sigma_xi_rel >= 0.0) {
        return Err(ConfigError::invalid(
            "theorem.sigma_xi_rel",
            format!("{} must be >= 0", th.sigma_xi_rel),
        ));
    }
    if !(th.eta.is_finite() && th.eta > 0.0) {
        return Err(ConfigError::invalid(
            "theorem.eta",
            format!("{} must be > 0", th.eta),
        ));
    }

    Ok(ExperimentConfig {
        env,
        strategies: t.strategies,
        seeds: t.seeds,
        train,
        output: raw.output,
        theorem: raw.theorem,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_config(&text)
}

fn reject(key: &str, present: bool, kind: EnvKind) -> Result<(), ConfigError> {
    if present {
        return Err(ConfigError::invalid(
            format!("env.{key}"),
            format!("not used by kind `{}`", kind.name()),
        ));
    }
    Ok(())
}

fn build_env(s: &EnvSection) -> Result<BanditEnv, ConfigError> {
    let env = match s.kind {
        EnvKind::Orthogonal => {
            reject("reward_table", s.reward_table.is_some(), s.kind)?;
            reject("num_actions", s.num_actions.is_some(), s.kind)?;
            reject("generator_seed", s.generator_seed.is_some(), s.kind)?;
            let block = s.block_size.unwrap_or(2);
            match (&s.deltas, s.num_dims) {
                (Some(d), Some(n)) if d.len() != n => {
                    return Err(ConfigError::invalid(
                        "env.deltas",
                        format!("{} entries but num_dims = {n}", d.len()),
                    ))
                }
                (Some(d), _) => BanditEnv::orthogonal(block, d)?,
                (None, Some(n)) => BanditEnv::orthogonal(block, &default_deltas(n))?,
                (None, None) => BanditEnv::orthogonal(block, &default_deltas(4))?,
            }
        }
        EnvKind::Conflict => {
            for (key, present) in [
                ("block_size", s.block_size.is_some()),
                ("deltas", s.deltas.is_some()),
                ("reward_table", s.reward_table.is_some()),
                ("num_actions", s.num_actions.is_some()),
                ("num_dims", s.num_dims.is_some()),
                ("generator_seed", s.generator_seed.is_some()),
            ] {
                reject(key, present, s.kind)?;
            }
            BanditEnv::conflict()
        }
        EnvKind::Custom => {
            reject("block_size", s.block_size.is_some(), s.kind)?;
            reject("deltas", s.deltas.is_some(), s.kind)?;
            match (&s.reward_table, s.generator_seed) {
                (Some(_), Some(_)) => {
                    return Err(ConfigError::invalid(
                        "env.generator_seed",
                        "give either reward_table or generator_seed, not both",
                    ))
                }
                (Some(table), None) => {
                    reject("num_actions", s.num_actions.is_some(), s.kind)?;
                    reject("num_dims", s.num_dims.is_some(), s.kind)?;
                    BanditEnv::custom(table.clone())?
                }
                (None, Some(seed)) => {
                    let a = s.num_actions.ok_or_else(|| {
                        ConfigError::invalid("env.num_actions", "required with generator_seed")
                    })?;
                    let d = s.num_dims.ok_or_else(|| {
                        ConfigError::invalid("env.num_dims", "required with generator_seed")
                    })?;
                    BanditEnv::custom(random_table(a, d, seed))?
                }
                (None, None) => {
                    return Err(ConfigError::invalid(
                        "env.reward_table",
                        "custom env needs reward_table or generator_seed",
                    ))
                }
            }
        }
    };
    Ok(env.with_reward_noise(s.reward_noise)?)
}

/// Spread evenly over `(0, 0.4]`; `0.1, 0.2, 0.3, 0.4` for four dimensions.
fn default_deltas(dims: usize) -> Vec<f64> {
    (1..=dims).map(|d| d as f64 / (2.5 * dims as f64)).collect()
}

/// Uniform `[0, 1)` rewards drawn from a seeded generator.
pub fn random_table(actions: usize, dims: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..actions)
        .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
        .collect()
}
