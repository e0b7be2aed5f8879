//! The `run`, `verify-theorem` and `compare` subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use moa_core::sim::{
    exact_dimension_gradient, gram_matrix, run_training, verify_theorem, EnvKind, PolicyParams,
    StepRecord, TheoremCheck,
};
use moa_core::{MoaError, Strategy};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, OutputFormat};
use crate::output::{self, OutputError, TheoremRow};

/// Largest temperature at which the improvement bound is asserted.
pub const THEOREM_MAX_CLAIMED_BETA: f64 = 0.05;

/// Allowed relative deviation of the measured gap from its prediction.
pub const THEOREM_REL_TOL: f64 = 0.25;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] MoaError),
    #[error("writing results: {0}")]
    Output(#[from] OutputError),
    #[error("cannot write {path}: {source}")]
    Create {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Rejected(String),
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub seed: Option<u64>,
    pub smooth: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), ConfigError> {
        if let Some(p) = &self.out {
            cfg.output.path = Some(p.clone());
        }
        if let Some(f) = self.format {
            cfg.output.format = f;
        }
        if let Some(s) = self.seed {
            if cfg.seeds[1..].contains(&s) {
                return Err(ConfigError::Invalid {
                    key: "seed".into(),
                    reason: format!("{s} duplicates another configured seed"),
                });
            }
            cfg.seeds[0] = s;
        }
        cfg.output.smooth |= self.smooth;
        Ok(())
    }
}

/// Opens the configured output file, or standard output when none is set.
fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>, CommandError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| {
            CommandError::Create {
                path: p.clone(),
                source,
            }
        })?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Trains every `(seed, strategy)` pair. Runs are returned seed-major in
/// config order regardless of scheduling.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<Vec<StepRecord>>, MoaError> {
    let jobs: Vec<(u64, Strategy)> = cfg
        .seeds
        .iter()
        .flat_map(|&seed| cfg.strategies.iter().map(move |&s| (seed, s)))
        .collect();
    jobs.par_iter()
        .map(|&(seed, strategy)| {
            log::debug!("training {strategy} seed {seed}");
            run_training(&cfg.env, strategy, &cfg.train, seed)
        })
        .collect()
}

/// Trains all runs and writes them through a single writer.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<usize, CommandError> {
    // Open first so an unwritable path fails before any training.
    let out = open_output(cfg.output.path.as_ref())?;
    let runs = run_all(cfg)?;
    let mut records: Vec<StepRecord> = runs.into_iter().flatten().collect();
    if cfg.output.smooth {
        records = output::smooth(&records);
    }
    output::write_records(out, &records, cfg.env.num_dims(), cfg.output.format)?;
    log::info!("wrote {} records", records.len());
    Ok(records.len())
}

/// Result of the theorem harness across the configured temperatures.
pub struct TheoremOutcome {
    pub rows: Vec<TheoremRow>,
    /// One message per claimed temperature that failed its check.
    pub failures: Vec<String>,
}

/// Residual noise level for the harness: `sigma_xi_rel` times the mean
/// gradient norm at the uniform policy.
pub fn theorem_noise(cfg: &ExperimentConfig) -> Result<f64, MoaError> {
    let params = PolicyParams::uniform(cfg.env.num_actions());
    let grads = (0..cfg.env.num_dims())
        .map(|d| exact_dimension_gradient(&params, &cfg.env, d))
        .collect::<Result<Vec<_>, _>>()?;
    let gram = gram_matrix(&grads)?;
    let dims = gram.len() as f64;
    let mean_norm = (0..gram.len()).map(|d| gram[d][d].sqrt()).sum::<f64>() / dims;
    Ok(cfg.theorem.sigma_xi_rel * mean_norm)
}

pub fn cmd_verify_theorem(cfg: &ExperimentConfig) -> Result<TheoremOutcome, CommandError> {
    if cfg.env.kind() != EnvKind::Orthogonal {
        return Err(CommandError::Rejected(format!(
            "verify-theorem needs an orthogonal env, got `{}`",
            cfg.env.kind().name()
        )));
    }
    let th = &cfg.theorem;
    let out = open_output(th.report.as_ref())?;
    let sigma_xi = theorem_noise(cfg)?;
    let reports = th
        .betas
        .par_iter()
        .map(|&beta| verify_theorem(&cfg.env, th.c, sigma_xi, beta, th.eta, th.trials, th.seed))
        .collect::<Result<Vec<_>, _>>()?;

    let mut failures = Vec::new();
    let rows: Vec<TheoremRow> = reports
        .into_iter()
        .map(|report| {
            let claimed = report.beta <= THEOREM_MAX_CLAIMED_BETA;
            let check = report.check(THEOREM_REL_TOL);
            if claimed && !matches!(check, TheoremCheck::Pass | TheoremCheck::NotApplicable) {
                failures.push(format!(
                    "beta = {}: {} (measured {:e}, predicted {:e})",
                    report.beta,
                    output::check_label(check),
                    report.measured_gap,
                    report.predicted_gap
                ));
            }
            TheoremRow {
                report,
                claimed,
                check,
            }
        })
        .collect();
    output::write_theorem(out, &rows, cfg.output.format)?;
    Ok(TheoremOutcome { rows, failures })
}

/// Mean scalarized reward over all steps of a run.
pub fn auc(run: &[StepRecord]) -> f64 {
    run.iter().map(|r| r.scalarized).sum::<f64>() / run.len() as f64
}

pub fn final_reward(run: &[StepRecord]) -> f64 {
    run.last().map_or(f64::NAN, |r| r.scalarized)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub final_mean: f64,
    pub final_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
    /// Per-seed AUC, in seed order.
    pub aucs: Vec<f64>,
    /// Fraction of seeds with AUC strictly above the uniform baseline.
    /// `None` for the baseline itself.
    pub win_rate: Option<f64>,
}

/// Summarizes runs produced by [`run_all`] for `strategies` over `seeds`.
pub fn summarize(
    strategies: &[Strategy],
    num_seeds: usize,
    runs: &[Vec<StepRecord>],
) -> Vec<StrategySummary> {
    let k = strategies.len();
    let column =
        |j: usize| -> Vec<&Vec<StepRecord>> { (0..num_seeds).map(|i| &runs[i * k + j]).collect() };
    let baseline: Option<Vec<f64>> = strategies
        .iter()
        .position(|s| *s == Strategy::UniformGrpo)
        .map(|j| column(j).iter().map(|r| auc(r)).collect());

    strategies
        .iter()
        .enumerate()
        .map(|(j, &strategy)| {
            let col = column(j);
            let aucs: Vec<f64> = col.iter().map(|r| auc(r)).collect();
            let finals: Vec<f64> = col.iter().map(|r| final_reward(r)).collect();
            let (final_mean, final_std) = mean_std(&finals);
            let (auc_mean, auc_std) = mean_std(&aucs);
            let win_rate = match &baseline {
                Some(base) if strategy.is_moa_variant() => {
                    let wins = aucs.iter().zip(base).filter(|(a, b)| a > b).count();
                    Some(wins as f64 / num_seeds as f64)
                }
                _ => None,
            };
            StrategySummary {
                strategy,
                final_mean,
                final_std,
                auc_mean,
                auc_std,
                aucs,
                win_rate,
            }
        })
        .collect()
}

pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<Vec<StrategySummary>, CommandError> {
    if cfg.strategies.len() < 2 {
        return Err(CommandError::Rejected(
            "compare needs at least two strategies".into(),
        ));
    }
    if cfg.seeds.len() < 2 {
        return Err(CommandError::Rejected(
            "compare needs at least two seeds".into(),
        ));
    }
    let mut cfg = cfg.clone();
    if !cfg.strategies.contains(&Strategy::UniformGrpo) {
        log::info!("adding uniform_grpo as the win-rate baseline");
        cfg.strategies.push(Strategy::UniformGrpo);
    }
    let runs = run_all(&cfg)?;
    let summary = summarize(&cfg.strategies, cfg.seeds.len(), &runs);
    write_summary(&mut std::io::stdout().lock(), &summary).map_err(OutputError::from)?;
    Ok(summary)
}

pub fn write_summary<W: Write>(out: &mut W, rows: &[StrategySummary]) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<14} {:>12} {:>12} {:>12} {:>12} {:>9}",
        "strategy", "final_mean", "final_std", "auc_mean", "auc_std", "win_rate"
    )?;
    for r in rows {
        let win = r
            .win_rate
            .map_or_else(|| "-".to_string(), |w| format!("{w:.3}"));
        writeln!(
            out,
            "{:<14} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>9}",
            r.strategy.name(),
            r.final_mean,
            r.final_std,
            r.auc_mean,
            r.auc_std,
            win
        )?;
    }
    out.flush()
}
