use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::catalog::{dot, Catalog, UserProfile};
use super::reward::RewardModel;
use super::tracker::StateTracker;
use super::{run_episode, Context, Environment, Recommender, Session, Transition};
use crate::error::{Error, Result};
use crate::seed::{self, stream};

/// Ground-truth user simulator. After each interaction the user's preference
/// moves a step `drift` toward the recommended item's embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulator {
    pub catalog: Catalog,
    pub tracker: StateTracker,
    pub reward: RewardModel,
    pub drift: f64,
}

impl Simulator {
    pub const DEFAULT_DRIFT: f64 = 0.02;

    pub fn new(catalog: Catalog, tracker: StateTracker, reward: RewardModel, drift: f64) -> Result<Self> {
        reward.validate()?;
        if !(0.0..=1.0).contains(&drift) {
            return Err(Error::config("env.drift", "must be in [0, 1]"));
        }
        Ok(Simulator {
            catalog,
            tracker,
            reward,
            drift,
        })
    }
}

impl Environment for Simulator {
    fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    fn tracker(&self) -> &StateTracker {
        &self.tracker
    }

    fn reveals_preference(&self) -> bool {
        true
    }

    fn respond(&self, session: &mut Session, action: usize) -> Result<f64> {
        let item = self.catalog.item(action)?;
        let noise_seed = seed::derive(session.episode_seed, stream::REWARD_NOISE, session.state.step_index as u64);
        let rating = self.reward.sample(&session.preference, &item.embedding, noise_seed);
        for (p, e) in session.preference.iter_mut().zip(&item.embedding) {
            *p += self.drift * (e - *p);
        }
        Ok(rating)
    }
}

/// Index of the item with the largest preference dot product; ties go to the lowest id.
pub fn best_item(preference: &[f64], catalog: &Catalog) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for item in &catalog.items {
        let s = dot(preference, &item.embedding);
        if s > best_score {
            best = item.id;
            best_score = s;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandom;

impl Recommender for UniformRandom {
    fn recommend(&mut self, ctx: &Context<'_>, rng: &mut seed::Rng) -> Result<usize> {
        Ok(rng.gen_range(0..ctx.catalog.len()))
    }
}

/// With probability `epsilon` a uniformly random item, otherwise the item with
/// the highest expected true rating. Needs the simulator's live preference.
#[derive(Debug, Clone, Copy)]
pub struct EpsilonGreedy {
    pub epsilon: f64,
}

impl Default for EpsilonGreedy {
    fn default() -> Self {
        EpsilonGreedy { epsilon: 0.5 }
    }
}

impl Recommender for EpsilonGreedy {
    fn recommend(&mut self, ctx: &Context<'_>, rng: &mut seed::Rng) -> Result<usize> {
        let preference = ctx
            .true_preference
            .ok_or_else(|| Error::usage("epsilon-greedy behavior needs the ground-truth simulator"))?;
        if rng.gen::<f64>() < self.epsilon {
            Ok(rng.gen_range(0..ctx.catalog.len()))
        } else {
            Ok(best_item(preference, ctx.catalog))
        }
    }
}

/// Logged interactions of `behavior` with the simulator. Episode `e` serves
/// `users[e % users.len()]` with a seed derived from `(seed, e)`.
pub fn generate_offline_log<R: Recommender + ?Sized>(
    simulator: &Simulator,
    users: &[UserProfile],
    behavior: &mut R,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<Transition>> {
    if n_episodes == 0 {
        return Ok(Vec::new());
    }
    if simulator.catalog.is_empty() {
        return Err(Error::config("env.n_items", "catalog is empty"));
    }
    if users.is_empty() {
        return Err(Error::config("env.n_train_users", "no users to simulate"));
    }
    let mut log = Vec::new();
    for e in 0..n_episodes {
        let user = &users[e % users.len()];
        let trajectory = run_episode(simulator, behavior, user, seed::derive(seed, stream::OFFLINE_LOG, e as u64))?;
        log.extend(trajectory.transitions);
    }
    Ok(log)
}

/// Episodes are generated until the log holds at least `min_transitions`.
pub fn generate_offline_log_until<R: Recommender + ?Sized>(
    simulator: &Simulator,
    users: &[UserProfile],
    behavior: &mut R,
    min_transitions: usize,
    seed: u64,
) -> Result<Vec<Transition>> {
    if users.is_empty() {
        return Err(Error::config("env.n_train_users", "no users to simulate"));
    }
    let mut log = Vec::new();
    let mut e = 0usize;
    while log.len() < min_transitions {
        let user = &users[e % users.len()];
        let trajectory = run_episode(simulator, behavior, user, seed::derive(seed, stream::OFFLINE_LOG, e as u64))?;
        log.extend(trajectory.transitions);
        e += 1;
    }
    Ok(log)
}
