//! One function per subcommand. Each reads its prerequisites from the run
//! directory, writes its artifacts there and finishes with a manifest.

use std::path::Path;

use demorec::config::RunConfig;
use demorec::env::io::{load_catalog, load_log, load_world_model, save_catalog, save_log, save_world_model};
use demorec::evalbench::{
    evaluate, evaluate_actor, protocol, run_ablation, sweep, write_series, write_table, EvalProtocol, Metrics,
    SweepParam, TableRow, Variant,
};
use demorec::expert::{load_demos, save_demos};
use demorec::neural::load_checkpoint;
use demorec::pipeline::{build_expert, build_world, collect_demos, fit_model, offline_log, train_policy, Prepared, World};
use demorec::policy::save_metrics;
use demorec::{Error, Result};
use serde::Serialize;

use crate::rundir::Recorder;

const CATALOG: &str = "catalog.jsonl";
const LOG: &str = "log.jsonl";
const WORLD_MODEL: &str = "world_model";
const DEMOS: &str = "demos.jsonl";

fn with_ext(stem: &str, ext: &str) -> String {
    format!("{stem}.{ext}")
}

/// Rebuild the world from the configuration and check it against the persisted catalog.
fn world(rec: &mut Recorder, config: &RunConfig) -> Result<World> {
    let path = rec.require(CATALOG, "demorec simulate")?;
    let (catalog, users) = load_catalog(&path)?;
    let world = build_world(config, config.seed)?;
    if catalog != world.catalog || users != world.train_users {
        return Err(Error::data(format!(
            "{} does not match the configuration; rerun `demorec simulate` in a fresh directory",
            path.display()
        )));
    }
    Ok(world)
}

fn world_model(rec: &mut Recorder) -> Result<demorec::env::WorldModel> {
    rec.require(&with_ext(WORLD_MODEL, "bin"), "demorec fit-world-model")?;
    rec.require(&with_ext(WORLD_MODEL, "json"), "demorec fit-world-model")?;
    rec.require(&with_ext(WORLD_MODEL, "meta.json"), "demorec fit-world-model")?;
    load_world_model(&rec.path(WORLD_MODEL))
}

pub fn simulate(rec: &mut Recorder, config: &RunConfig) -> Result<()> {
    let world = build_world(config, config.seed)?;
    let log = offline_log(&world, config, config.seed)?;
    save_catalog(&rec.path(CATALOG), &world.catalog, &world.train_users)?;
    rec.output(CATALOG)?;
    save_log(&rec.path(LOG), &log)?;
    rec.output(LOG)?;
    log::info!("offline log: {} transitions", log.len());
    Ok(())
}

pub fn fit_world_model(rec: &mut Recorder, config: &RunConfig) -> Result<()> {
    let world = world(rec, config)?;
    let log = load_log(&rec.require(LOG, "demorec simulate")?)?;
    let model = fit_model(&world, &log, config, config.seed)?;
    save_world_model(&rec.path(WORLD_MODEL), &model)?;
    for ext in ["bin", "json", "meta.json"] {
        rec.output(&with_ext(WORLD_MODEL, ext))?;
    }
    log::info!(
        "world model: train mse {:.4}, holdout mse {:?}",
        model.training_stats.final_mse,
        model.training_stats.holdout_mse
    );
    Ok(())
}

pub fn collect(rec: &mut Recorder, config: &RunConfig) -> Result<()> {
    let world = world(rec, config)?;
    let model = world_model(rec)?;
    let demos = collect_demos(&world, &model, config, config.seed)?;
    save_demos(&rec.path(DEMOS), &demos)?;
    rec.output(DEMOS)?;
    log::info!(
        "demonstrations: {} trajectories, {} transitions, mean return {:.3}",
        demos.trajectories.len(),
        demos.len(),
        demos.mean_trajectory_reward()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainInfo<'a> {
    variant: &'a str,
    seed: u64,
    rounds: usize,
    episodes_per_round: usize,
    value_demo_mse: f64,
    final_mean_weight: f64,
}

pub fn train(rec: &mut Recorder, config: &RunConfig, variant: Variant) -> Result<()> {
    if variant == Variant::NoIrlBaseline {
        return Err(Error::usage(
            "no_irl_baseline is the scripted expert and has nothing to train; run `demorec evaluate --variant no_irl_baseline`",
        ));
    }
    let world = world(rec, config)?;
    let model = world_model(rec)?;
    let demos = load_demos(&rec.require(DEMOS, "demorec collect-demos")?)?;
    let prepared = Prepared { world, model, demos };
    let settings = variant.settings(&config.train_settings());
    variant.check(&settings)?;
    let outcome = train_policy(&prepared, config, &settings, config.seed)?;

    let name = variant.name();
    let policy = format!("policy-{name}");
    outcome.bundle.save(&rec.path(&policy))?;
    rec.output(&with_ext(&policy, "bin"))?;
    rec.output(&with_ext(&policy, "json"))?;
    let metrics = format!("metrics-{name}.jsonl");
    save_metrics(&rec.path(&metrics), &outcome.metrics)?;
    rec.output(&metrics)?;
    let weights = format!("weights-{name}.csv");
    outcome.weighted.write_csv(&rec.path(&weights))?;
    rec.output(&weights)?;
    let w = outcome.weighted.weights();
    rec.write_json(
        &format!("train-{name}.json"),
        &TrainInfo {
            variant: name,
            seed: config.seed,
            rounds: config.policy.rounds,
            episodes_per_round: config.policy.episodes_per_round,
            value_demo_mse: outcome.value_demo_mse,
            final_mean_weight: w.iter().sum::<f64>() / w.len() as f64,
        },
    )
}

#[derive(Serialize)]
struct EvalReport<'a> {
    variant: &'a str,
    protocol: EvalProtocol,
    metrics: &'a Metrics,
}

pub fn evaluate_variant(rec: &mut Recorder, config: &RunConfig, variant: Variant) -> Result<()> {
    let name = variant.name();
    let protocol = protocol(config, config.seed);
    let metrics = if variant == Variant::NoIrlBaseline {
        let world = world(rec, config)?;
        let mut expert = build_expert(&world, config, config.seed)?;
        evaluate(&mut expert, &world.simulator, &world.eval_users, &protocol)?
    } else {
        let policy = format!("policy-{name}");
        let hint = format!("demorec train --variant {name}");
        rec.require(&with_ext(&policy, "bin"), &hint)?;
        rec.require(&with_ext(&policy, "json"), &hint)?;
        let world = world(rec, config)?;
        let checkpoint = load_checkpoint(&rec.path(&policy))?;
        evaluate_actor(checkpoint.get("actor")?, &world.simulator, &world.eval_users, &protocol)?
    };
    rec.write_json(
        &format!("eval-{name}.json"),
        &EvalReport {
            variant: name,
            protocol,
            metrics: &metrics,
        },
    )?;
    let row = TableRow::new(
        name,
        config.seed,
        config.policy.rounds,
        config.policy.episodes_per_round,
        &metrics,
    );
    let table = format!("table-{name}");
    write_table(&rec.path(&table), &[row])?;
    rec.output(&with_ext(&table, "csv"))?;
    rec.output(&with_ext(&table, "jsonl"))?;
    log::info!(
        "{name}: R_traj {:.3} Len {:.2} R_each {:.4}",
        metrics.r_traj.mean,
        metrics.len.mean,
        metrics.r_each.mean
    );
    Ok(())
}

pub fn ablate(rec: &mut Recorder, config: &RunConfig, variants: &[Variant]) -> Result<()> {
    let results = run_ablation(config, variants, &config.eval.seeds)?;
    let rows: Vec<TableRow> = results.iter().map(TableRow::from_run).collect();
    write_table(&rec.path("ablation"), &rows)?;
    rec.output("ablation.csv")?;
    rec.output("ablation.jsonl")?;
    Ok(())
}

pub fn sweep_param(rec: &mut Recorder, config: &RunConfig, param: SweepParam, grid: &[f64]) -> Result<()> {
    let result = sweep(config, param, grid, &config.eval.seeds)?;
    let name = param.name();
    let rows: Vec<TableRow> = result
        .rows
        .iter()
        .map(|r| {
            TableRow::new(
                &format!("{name}={}", r.value),
                r.seed,
                config.policy.rounds,
                config.policy.episodes_per_round,
                &r.metrics,
            )
        })
        .collect();
    let table = format!("sweep-{name}");
    write_table(&rec.path(&table), &rows)?;
    rec.output(&with_ext(&table, "csv"))?;
    rec.output(&with_ext(&table, "jsonl"))?;
    let series = format!("series-{name}.csv");
    write_series(&rec.path(&series), &result.series)?;
    rec.output(&series)
}

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    RunConfig::parse(&text, overrides)
}
