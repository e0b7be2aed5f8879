//! Experiment runner: config parsing, training sweeps, theorem checks and
//! result files.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_compare, cmd_run, cmd_verify_theorem, CommandError, Overrides};
pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, OutputFormat};
