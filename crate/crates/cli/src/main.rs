//! `demorec`: run the demonstration-weighted imitation pipeline phase by phase.

mod commands;
mod report;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use demorec::evalbench::{SweepParam, Variant};
use demorec::{Error, Result};

use crate::rundir::{bind_config, Recorder};

#[derive(Debug, Parser)]
#[command(name = "demorec", version, about = "Demonstration-weighted imitation learning for session recommendation")]
struct Cli {
    /// TOML configuration; every key is optional.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set weighting.beta=10`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Run directory; defaults to `output_dir` from the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the synthetic catalog and record the offline interaction log.
    Simulate,
    /// Fit the reward model of the world model on the offline log.
    FitWorldModel,
    /// Roll out the scripted expert in the world model.
    CollectDemos,
    /// Weight the demonstrations and train the policy.
    Train {
        #[arg(long, default_value = "full")]
        variant: String,
    },
    /// Evaluate a trained policy, or the expert baseline, on the simulator.
    Evaluate {
        #[arg(long, default_value = "full")]
        variant: String,
    },
    /// Train and evaluate each variant on every seed in `eval.seeds`.
    Ablate {
        /// Comma-separated variants; all of them by default.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
    },
    /// Train and evaluate the full method along a one-parameter grid.
    Sweep {
        /// One of beta, alpha, alpha_ent, lambda_imit.
        #[arg(long)]
        param: String,
        /// Comma-separated values; a built-in grid by default.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
    },
    /// Merge evaluation tables of several run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Report { runs } = &cli.command {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("report"));
        let mut rec = Recorder::new(out)?;
        report::report(&mut rec, runs)?;
        rec.finish("report", "report", None)?;
        return Ok(());
    }

    let mut config = commands::load_config(cli.config.as_deref(), &cli.overrides)?;
    if let Some(out) = &cli.out {
        config.output_dir = out.to_string_lossy().into_owned();
    }
    let root = PathBuf::from(&config.output_dir);
    bind_config(&root, &config)?;
    let mut rec = Recorder::new(&root)?;
    let (name, stem) = match &cli.command {
        Command::Simulate => {
            commands::simulate(&mut rec, &config)?;
            ("simulate", "simulate".to_string())
        }
        Command::FitWorldModel => {
            commands::fit_world_model(&mut rec, &config)?;
            ("fit-world-model", "fit-world-model".to_string())
        }
        Command::CollectDemos => {
            commands::collect(&mut rec, &config)?;
            ("collect-demos", "collect-demos".to_string())
        }
        Command::Train { variant } => {
            let v = Variant::parse(variant)?;
            commands::train(&mut rec, &config, v)?;
            ("train", format!("train-{}", v.name()))
        }
        Command::Evaluate { variant } => {
            let v = Variant::parse(variant)?;
            commands::evaluate_variant(&mut rec, &config, v)?;
            ("evaluate", format!("evaluate-{}", v.name()))
        }
        Command::Ablate { variants } => {
            let vs = if variants.is_empty() {
                Variant::ALL.to_vec()
            } else {
                variants.iter().map(|v| Variant::parse(v)).collect::<Result<_>>()?
            };
            commands::ablate(&mut rec, &config, &vs)?;
            ("ablate", "ablate".to_string())
        }
        Command::Sweep { param, grid } => {
            let p = SweepParam::parse(param)?;
            let grid = if grid.is_empty() { p.default_grid() } else { grid.clone() };
            commands::sweep_param(&mut rec, &config, p, &grid)?;
            ("sweep", format!("sweep-{}", p.name()))
        }
        Command::Report { .. } => unreachable!("handled above"),
    };
    rec.finish(name, &stem, Some(&config))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version go to stdout and succeed; malformed usage is a configuration error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::PartialCollection { completed, .. } = &e {
                eprintln!("completed users before the failure: {}", completed.len());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
