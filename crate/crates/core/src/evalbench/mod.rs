//! Evaluation on the ground-truth simulator, the ablation suite and
//! hyperparameter sweeps.

pub mod metrics;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::env::{run_episode, Environment, Recommender, UserProfile};
use crate::error::{Error, Result};
use crate::jsonl::{self, Header};
use crate::neural::Net;
use crate::pipeline::{build_expert, prepare, train_policy, Prepared};
use crate::policy::{ActorPolicy, TrainSettings};
use crate::seed::{self, stream};

pub use metrics::{EpisodeRow, Metrics, Stat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub n_episodes: usize,
    pub greedy: bool,
    pub seed: u64,
}

/// `n_episodes` sessions; session `k` serves `users[k % users.len()]`.
/// Recommenders observe each finished episode, so stateful ones keep learning.
pub fn evaluate<E, R>(recommender: &mut R, env: &E, users: &[UserProfile], protocol: &EvalProtocol) -> Result<Metrics>
where
    E: Environment + ?Sized,
    R: Recommender + ?Sized,
{
    if protocol.n_episodes == 0 {
        return Err(Error::config("eval.n_episodes", "must be at least 1"));
    }
    if users.is_empty() {
        return Err(Error::usage("evaluation needs at least one user"));
    }
    let mut rows = Vec::with_capacity(protocol.n_episodes);
    for k in 0..protocol.n_episodes {
        let user = &users[k % users.len()];
        let t = run_episode(env, recommender, user, seed::derive(protocol.seed, stream::EVAL, k as u64))?;
        rows.push(EpisodeRow::from_trajectory(k, &t)?);
    }
    Metrics::from_rows(rows)
}

/// Evaluate a frozen actor; parameters are only read.
pub fn evaluate_actor<E: Environment + ?Sized>(
    actor: &Net,
    env: &E,
    users: &[UserProfile],
    protocol: &EvalProtocol,
) -> Result<Metrics> {
    let mut rec = ActorPolicy {
        actor,
        greedy: protocol.greedy,
    };
    evaluate(&mut rec, env, users, protocol)
}

pub fn protocol(config: &RunConfig, seed: u64) -> EvalProtocol {
    EvalProtocol {
        n_episodes: config.eval.n_episodes,
        greedy: config.eval.greedy,
        seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// `w̃ ≡ 1`.
    NoW,
    /// `α = 0`: discriminator weight only.
    NoWEnv,
    /// `α = 1`: environment weight only.
    NoWIrl,
    /// No adversarial training at all: the scripted expert itself.
    NoIrlBaseline,
}

impl Variant {
    /// Comparison-table order.
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoW,
        Variant::NoWEnv,
        Variant::NoWIrl,
        Variant::NoIrlBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoW => "no_w",
            Variant::NoWEnv => "no_w_env",
            Variant::NoWIrl => "no_w_irl",
            Variant::NoIrlBaseline => "no_irl_baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config("variant", format!("unknown variant `{s}`")))
    }

    pub fn rank(self) -> usize {
        Variant::ALL.iter().position(|v| *v == self).expect("listed")
    }

    fn alpha_endpoint(self) -> Option<f64> {
        match self {
            Variant::NoWEnv => Some(0.0),
            Variant::NoWIrl => Some(1.0),
            _ => None,
        }
    }

    /// The variant's training settings derived from `base`.
    pub fn settings(self, base: &TrainSettings) -> TrainSettings {
        let mut s = base.clone();
        if let Some(alpha) = self.alpha_endpoint() {
            s.weighting.alpha = alpha;
        }
        s.uniform_weights = base.uniform_weights || self == Variant::NoW;
        s
    }

    /// The variant owns `α`; settings that disagree are a configuration error.
    pub fn check(self, settings: &TrainSettings) -> Result<()> {
        if let Some(alpha) = self.alpha_endpoint() {
            if settings.weighting.alpha != alpha {
                return Err(Error::config(
                    "weighting.alpha",
                    format!("variant {} requires alpha = {alpha}, got {}", self.name(), settings.weighting.alpha),
                ));
            }
        }
        if self == Variant::NoW && !settings.uniform_weights {
            return Err(Error::config("variant", "no_w requires uniform weights"));
        }
        Ok(())
    }
}

/// One `(variant, seed)` cell of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: Variant,
    pub seed: u64,
    pub rounds: usize,
    pub episodes_per_round: usize,
    pub metrics: Metrics,
}

/// Train (unless the variant is the expert baseline) and evaluate on the simulator.
pub fn run_variant(prepared: &Prepared, config: &RunConfig, variant: Variant, seed: u64) -> Result<RunResult> {
    let protocol = protocol(config, seed);
    let world = &prepared.world;
    let metrics = match variant {
        Variant::NoIrlBaseline => {
            let mut expert = build_expert(world, config, seed)?;
            evaluate(&mut expert, &world.simulator, &world.eval_users, &protocol)?
        }
        _ => {
            let settings = variant.settings(&config.train_settings());
            variant.check(&settings)?;
            let outcome = train_policy(prepared, config, &settings, seed)?;
            evaluate_actor(&outcome.bundle.actor, &world.simulator, &world.eval_users, &protocol)?
        }
    };
    Ok(RunResult {
        variant,
        seed,
        rounds: config.policy.rounds,
        episodes_per_round: config.policy.episodes_per_round,
        metrics,
    })
}

/// Every variant for every seed with shared preparation per seed, so runs are budget-matched.
pub fn run_ablation(config: &RunConfig, variants: &[Variant], seeds: &[u64]) -> Result<Vec<RunResult>> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(Error::usage("ablation needs at least one variant and one seed"));
    }
    let prepared: Vec<Prepared> = seeds.par_iter().map(|&s| prepare(config, s)).collect::<Result<_>>()?;
    let cells: Vec<(usize, Variant)> = (0..seeds.len())
        .flat_map(|i| variants.iter().map(move |v| (i, *v)))
        .collect();
    let mut results: Vec<RunResult> = cells
        .par_iter()
        .map(|&(i, v)| run_variant(&prepared[i], config, v, seeds[i]))
        .collect::<Result<_>>()?;
    results.sort_by_key(|r| (r.variant.rank(), seeds.iter().position(|s| *s == r.seed)));
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Beta,
    Alpha,
    AlphaEnt,
    LambdaImit,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::Alpha => "alpha",
            SweepParam::AlphaEnt => "alpha_ent",
            SweepParam::LambdaImit => "lambda_imit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [SweepParam::Beta, SweepParam::Alpha, SweepParam::AlphaEnt, SweepParam::LambdaImit]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("param", format!("unknown sweep parameter `{s}`")))
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParam::Beta => vec![0.1, 1.0, 10.0],
            SweepParam::Alpha => vec![0.25, 0.5, 0.75],
            SweepParam::AlphaEnt => vec![0.01, 0.1, 0.2],
            SweepParam::LambdaImit => vec![0.1, 0.25, 0.5, 2.0],
        }
    }

    pub fn apply(self, config: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut c = config.clone();
        match self {
            SweepParam::Beta => c.weighting.beta = value,
            SweepParam::Alpha => c.weighting.alpha = value,
            SweepParam::AlphaEnt => c.policy.alpha_ent = value,
            SweepParam::LambdaImit => c.policy.lambda_imit = value,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub seed: u64,
    pub metrics: Metrics,
}

/// Plot-ready point: R_traj mean and std across seeds at one grid value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub x: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    pub series: Vec<SeriesPoint>,
}

/// One full run per `(grid value, seed)`; seeds are paired across grid values.
pub fn sweep(config: &RunConfig, param: SweepParam, grid: &[f64], seeds: &[u64]) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::config("grid", "must contain at least one value"));
    }
    if seeds.is_empty() {
        return Err(Error::usage("sweep needs at least one seed"));
    }
    let configs: Vec<RunConfig> = grid.iter().map(|v| param.apply(config, *v)).collect::<Result<_>>()?;
    // Only the training settings vary along the grid, so preparation is shared.
    let prepared: Vec<Prepared> = seeds.par_iter().map(|&s| prepare(config, s)).collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..seeds.len()).map(move |s| (g, s))).collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(g, s)| {
            let r = run_variant(&prepared[s], &configs[g], Variant::Full, seeds[s])?;
            Ok(SweepRow {
                param,
                value: grid[g],
                seed: seeds[s],
                metrics: r.metrics,
            })
        })
        .collect::<Result<_>>()?;
    let series = grid
        .iter()
        .enumerate()
        .map(|(g, x)| {
            let vals: Vec<f64> = rows[g * seeds.len()..(g + 1) * seeds.len()]
                .iter()
                .map(|r| r.metrics.r_traj.mean)
                .collect();
            let st = Stat::of(&vals);
            SeriesPoint {
                x: *x,
                mean: st.mean,
                std: st.std,
            }
        })
        .collect();
    Ok(SweepResult { param, rows, series })
}

/// Flat comparison-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub seed: u64,
    pub rounds: usize,
    pub episodes_per_round: usize,
    pub episodes: usize,
    pub len_mean: f64,
    pub len_std: f64,
    pub r_each_mean: f64,
    pub r_each_std: f64,
    pub r_traj_mean: f64,
    pub r_traj_std: f64,
}

impl TableRow {
    pub fn new(label: &str, seed: u64, rounds: usize, episodes_per_round: usize, m: &Metrics) -> Self {
        TableRow {
            label: label.to_string(),
            seed,
            rounds,
            episodes_per_round,
            episodes: m.episodes.len(),
            len_mean: m.len.mean,
            len_std: m.len.std,
            r_each_mean: m.r_each.mean,
            r_each_std: m.r_each.std,
            r_traj_mean: m.r_traj.mean,
            r_traj_std: m.r_traj.std,
        }
    }

    pub fn from_run(r: &RunResult) -> Self {
        Self::new(r.variant.name(), r.seed, r.rounds, r.episodes_per_round, &r.metrics)
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn table_header() -> Header {
    Header::new("demorec.table", 1)
}

pub fn write_table(stem: &Path, rows: &[TableRow]) -> Result<()> {
    write_csv(&stem.with_extension("csv"), rows)?;
    jsonl::write(&stem.with_extension("jsonl"), &table_header(), rows)
}

pub fn write_series(path: &Path, series: &[SeriesPoint]) -> Result<()> {
    write_csv(path, series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_catalog, CatalogSpec, FixedSequence, RewardModel, Simulator, StateTracker, TerminationRule};

    #[test]
    fn variant_semantics() {
        let base = RunConfig::default().train_settings();
        assert_eq!(Variant::Full.settings(&base), base);
        assert_eq!(Variant::NoWEnv.settings(&base).weighting.alpha, 0.0);
        assert_eq!(Variant::NoWIrl.settings(&base).weighting.alpha, 1.0);
        assert!(Variant::NoW.settings(&base).uniform_weights);
        for v in Variant::ALL {
            v.check(&v.settings(&base)).unwrap();
        }
        let mut bad = Variant::NoWEnv.settings(&base);
        bad.weighting.alpha = 0.5;
        assert!(matches!(Variant::NoWEnv.check(&bad), Err(Error::Config { .. })));
        bad.weighting.alpha = 0.0;
        assert!(matches!(Variant::NoWIrl.check(&bad), Err(Error::Config { .. })));
        assert_eq!(Variant::parse("no_w_env").unwrap(), Variant::NoWEnv);
    }

    #[test]
    fn sweep_grids() {
        assert_eq!(SweepParam::Beta.default_grid(), vec![0.1, 1.0, 10.0]);
        let c = SweepParam::LambdaImit.apply(&RunConfig::default(), 2.0).unwrap();
        assert_eq!(c.policy.lambda_imit, 2.0);
        assert!(SweepParam::Beta.apply(&RunConfig::default(), -1.0).is_err());
        assert!(sweep(&RunConfig::default(), SweepParam::Beta, &[], &[0]).is_err());
    }

    #[test]
    fn evaluation_is_deterministic_and_respects_the_rule() {
        let (catalog, pop) = build_catalog(3, &CatalogSpec::default()).unwrap();
        let rule = TerminationRule::new(5, 2, 100).unwrap();
        let tracker = StateTracker::new(10, 0.9, rule, &catalog, pop.side_dim()).unwrap();
        let sim = Simulator::new(catalog, tracker, RewardModel::default(), 0.02).unwrap();
        let users = pop.sample_users(1, 3, 0);
        let p = EvalProtocol {
            n_episodes: 6,
            greedy: true,
            seed: 9,
        };
        // Repeating one item ends every session on its second step.
        let m = evaluate(&mut FixedSequence(vec![4]), &sim, &users, &p).unwrap();
        assert_eq!(m.len.mean, 2.0);
        assert_eq!(m.len.std, 0.0);
        assert_eq!(m, evaluate(&mut FixedSequence(vec![4]), &sim, &users, &p).unwrap());
    }
}
