use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use moa_cli::{
    cmd_compare, cmd_run, cmd_verify_theorem, load_config, CommandError, OutputFormat, Overrides,
};

#[derive(Parser)]
#[command(
    name = "moa",
    version,
    about = "Multi-objective advantage experiments on tabular bandits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured strategy and seed and write per-step records.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Results file (overrides `output.path`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<OutputFormat>,
        /// Replaces the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Apply a 0.9 moving average to the reward columns.
        #[arg(long)]
        smooth: bool,
    },
    /// Check the small-temperature improvement bound on an orthogonal env.
    VerifyTheorem {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize final reward and AUC per strategy across seeds.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn init_logging() {
    let filter = match std::env::var("MOA_LOG").as_deref() {
        Ok("debug") => "debug",
        Ok("info") => "info",
        Ok("off") => "off",
        _ => "warn",
    };
    env_logger::Builder::new().parse_filters(filter).init();
}

fn execute(command: Command) -> Result<Vec<String>, CommandError> {
    match command {
        Command::Run {
            config,
            out,
            format,
            seed,
            smooth,
        } => {
            let mut cfg = load_config(&config)?;
            Overrides {
                out,
                format,
                seed,
                smooth,
            }
            .apply(&mut cfg)?;
            cmd_run(&cfg)?;
            Ok(Vec::new())
        }
        Command::VerifyTheorem { config } => {
            let cfg = load_config(&config)?;
            Ok(cmd_verify_theorem(&cfg)?.failures)
        }
        Command::Compare { config, seed } => {
            let mut cfg = load_config(&config)?;
            Overrides {
                seed,
                ..Overrides::default()
            }
            .apply(&mut cfg)?;
            cmd_compare(&cfg)?;
            Ok(Vec::new())
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in failures {
                eprintln!("check failed: improvement bound at {f}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
