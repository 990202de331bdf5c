//! In-memory orchestration of the three phases for one seed.

use std::sync::Arc;

use crate::config::RunConfig;
use crate::env::catalog::Population;
use crate::env::simulator::generate_offline_log_until;
use crate::env::{
    build_catalog, fit_world_model, Catalog, EpsilonGreedy, Simulator, StateTracker, Transition, UserProfile,
    WorldModel,
};
use crate::error::Result;
use crate::expert::{collect_demonstrations, DemoSet, ExpertAgent};
use crate::policy::{train, TrainInputs, TrainOutcome, TrainSettings};
use crate::seed::{self, stream};

/// User ids are offset per population so per-user seeds never collide.
pub const DEMO_USER_OFFSET: usize = 1_000_000;
pub const EVAL_USER_OFFSET: usize = 2_000_000;

/// Catalog, simulator and the three user populations for one seed.
#[derive(Debug, Clone)]
pub struct World {
    pub catalog: Catalog,
    pub population: Population,
    pub tracker: StateTracker,
    pub simulator: Simulator,
    pub train_users: Vec<UserProfile>,
    pub demo_users: Vec<UserProfile>,
    pub eval_users: Vec<UserProfile>,
}

pub fn build_world(config: &RunConfig, seed: u64) -> Result<World> {
    let env = &config.env;
    let (catalog, population) = build_catalog(seed, &env.catalog_spec())?;
    let tracker = StateTracker::new(env.history_len, env.decay, env.rule(), &catalog, population.side_dim())?;
    let simulator = Simulator::new(catalog.clone(), tracker.clone(), env.reward_model(), env.drift)?;
    let train_users = population.sample_users(seed::derive(seed, stream::TRAIN_USERS, 0), env.n_train_users, 0);
    let demo_users = population.sample_users(
        seed::derive(seed, stream::DEMO_USERS, 0),
        config.expert.n_demo_users,
        DEMO_USER_OFFSET,
    );
    let eval_users = population.sample_users(
        seed::derive(seed, stream::EVAL_USERS, 0),
        config.eval.n_episodes,
        EVAL_USER_OFFSET,
    );
    Ok(World {
        catalog,
        population,
        tracker,
        simulator,
        train_users,
        demo_users,
        eval_users,
    })
}

/// Epsilon-greedy interactions with the ground-truth simulator.
pub fn offline_log(world: &World, config: &RunConfig, seed: u64) -> Result<Vec<Transition>> {
    let mut behavior = EpsilonGreedy {
        epsilon: config.env.behavior_epsilon,
    };
    generate_offline_log_until(
        &world.simulator,
        &world.train_users,
        &mut behavior,
        config.env.offline_transitions,
        seed,
    )
}

pub fn fit_model(world: &World, log: &[Transition], config: &RunConfig, seed: u64) -> Result<WorldModel> {
    fit_world_model(log, &world.catalog, &world.tracker, &config.env.world_model, seed)
}

/// A fresh expert with empty memories.
pub fn build_expert(world: &World, config: &RunConfig, seed: u64) -> Result<ExpertAgent> {
    let provider = config.expert.build_provider(
        Arc::new(world.catalog.clone()),
        world.tracker.rule,
        config.weighting.gamma_discount,
        seed,
    )?;
    ExpertAgent::new(provider, &config.expert, config.weighting.gamma_discount)
}

pub fn collect_demos(world: &World, model: &WorldModel, config: &RunConfig, seed: u64) -> Result<DemoSet> {
    let mut agent = build_expert(world, config, seed)?;
    collect_demonstrations(
        model,
        &world.catalog,
        &mut agent,
        &world.demo_users,
        seed,
        config.env.diversity_in_training,
    )
}

/// Everything phase (iii) starts from.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub world: World,
    pub model: WorldModel,
    pub demos: DemoSet,
}

pub fn prepare(config: &RunConfig, seed: u64) -> Result<Prepared> {
    let world = build_world(config, seed)?;
    let log = offline_log(&world, config, seed)?;
    let model = fit_model(&world, &log, config, seed)?;
    let demos = collect_demos(&world, &model, config, seed)?;
    Ok(Prepared { world, model, demos })
}

pub fn train_policy(prepared: &Prepared, config: &RunConfig, settings: &TrainSettings, seed: u64) -> Result<TrainOutcome> {
    let inputs = TrainInputs {
        model: &prepared.model,
        catalog: &prepared.world.catalog,
        demos: &prepared.demos,
        users: &prepared.world.train_users,
        diversity_rule: config.env.diversity_in_training,
    };
    train(&inputs, settings, seed)
}
