//! Recommendation environment: synthetic catalog and users, the ground-truth
//! simulator, the learned world model, and session stepping under the
//! category-diversity termination rule.

pub mod catalog;
pub mod ingest;
pub mod io;
pub mod reward;
pub mod simulator;
pub mod termination;
pub mod tracker;
pub mod world_model;

use serde::{Deserialize, Serialize};

pub use catalog::{build_catalog, build_synthetic_catalog, Catalog, CatalogSpec, Item, Population, UserProfile};
pub use reward::{true_reward, RewardModel};
pub use simulator::{generate_offline_log, EpsilonGreedy, Simulator, UniformRandom};
pub use termination::{TerminatedBy, TerminationRule};
pub use tracker::{StateTracker, StateVector};
pub use world_model::{fit_world_model, step, WorldModel, WorldModelConfig, WorldModelEnv};

use crate::error::{Error, Result};
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: StateVector,
    pub action: usize,
    pub reward: f64,
    pub next_state: StateVector,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user: UserProfile,
    pub transitions: Vec<Transition>,
    pub terminated_by: TerminatedBy,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    /// Checks the structural contract: 1..=length_cap transitions, `done` on the last only.
    pub fn validate(&self, rule: &TerminationRule) -> Result<()> {
        let n = self.transitions.len();
        if n == 0 || n > rule.length_cap {
            return Err(Error::data(format!("trajectory length {n} outside 1..={}", rule.length_cap)));
        }
        for (i, t) in self.transitions.iter().enumerate() {
            if t.done != (i + 1 == n) {
                return Err(Error::data(format!("transition {i} has done={}", t.done)));
            }
            if !(reward::REWARD_MIN..=reward::REWARD_MAX).contains(&t.reward) {
                return Err(Error::data(format!("transition {i} reward {} outside [1, 5]", t.reward)));
            }
        }
        Ok(())
    }
}

/// A live session: the observed user, their hidden preference and the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub user: UserProfile,
    /// Hidden preference; drifts in the simulator, ignored by the world model.
    pub preference: Vec<f64>,
    pub state: StateVector,
    pub episode_seed: u64,
    pub terminated_by: Option<TerminatedBy>,
}

/// Anything sessions can be played against: the ground-truth simulator or a
/// learned world model.
pub trait Environment: Sync {
    fn catalog(&self) -> &Catalog;

    fn tracker(&self) -> &StateTracker;

    /// Whether the diversity rule ends sessions (the length cap always does).
    fn diversity_rule(&self) -> bool {
        true
    }

    /// Whether [`Context::true_preference`] is exposed to recommenders.
    fn reveals_preference(&self) -> bool {
        false
    }

    /// Rating for recommending `action` in the session's current state.
    /// Implementations may update hidden user state.
    fn respond(&self, session: &mut Session, action: usize) -> Result<f64>;

    fn start(&self, user: &UserProfile, episode_seed: u64) -> Result<Session> {
        Ok(Session {
            user: user.clone(),
            preference: user.preference.clone(),
            state: self.tracker().initial_state(user, self.catalog())?,
            episode_seed,
            terminated_by: None,
        })
    }

    /// One interaction: reward, deterministic state transition, termination check.
    fn step_session(&self, session: &mut Session, action: usize) -> Result<Transition> {
        if session.state.terminal {
            return Err(Error::usage("cannot step a terminal state"));
        }
        let catalog = self.catalog();
        let tracker = self.tracker();
        catalog.item(action)?;
        let reward = self.respond(session, action)?;
        let mut next_state = tracker.advance(&session.state, action, &session.user, catalog)?;
        let recent = tracker.recent_categories(&next_state, catalog)?;
        let terminated_by = if self.diversity_rule() {
            tracker.rule.check(&recent, next_state.step_index)
        } else {
            (next_state.step_index >= tracker.rule.length_cap).then_some(TerminatedBy::LengthCap)
        };
        next_state.terminal = terminated_by.is_some();
        let transition = Transition {
            state: std::mem::replace(&mut session.state, next_state.clone()),
            action,
            reward,
            next_state,
            done: terminated_by.is_some(),
        };
        session.terminated_by = terminated_by;
        Ok(transition)
    }
}

/// What a recommender sees when choosing the next item.
pub struct Context<'a> {
    pub state: &'a StateVector,
    pub user: &'a UserProfile,
    pub catalog: &'a Catalog,
    pub rule: &'a TerminationRule,
    /// Live preference; only the ground-truth simulator exposes it.
    pub true_preference: Option<&'a [f64]>,
}

pub trait Recommender {
    fn recommend(&mut self, ctx: &Context<'_>, rng: &mut seed::Rng) -> Result<usize>;

    /// Called once per finished episode, before the next one starts.
    fn observe_episode(&mut self, _trajectory: &Trajectory) -> Result<()> {
        Ok(())
    }
}

/// Play one full session. Recommender randomness comes from `episode_seed`.
pub fn run_episode<E, R>(env: &E, recommender: &mut R, user: &UserProfile, episode_seed: u64) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    R: Recommender + ?Sized,
{
    let mut session = env.start(user, episode_seed)?;
    let mut rng = seed::derived_rng(episode_seed, stream::ROLLOUT, 0);
    let mut transitions = Vec::new();
    loop {
        let action = {
            let ctx = Context {
                state: &session.state,
                user: &session.user,
                catalog: env.catalog(),
                rule: &env.tracker().rule,
                true_preference: env.reveals_preference().then_some(session.preference.as_slice()),
            };
            recommender.recommend(&ctx, &mut rng)?
        };
        let t = env.step_session(&mut session, action)?;
        let done = t.done;
        transitions.push(t);
        if done {
            break;
        }
    }
    let trajectory = Trajectory {
        user: user.clone(),
        transitions,
        terminated_by: session.terminated_by.expect("loop exits on termination"),
    };
    recommender.observe_episode(&trajectory)?;
    Ok(trajectory)
}

/// Recommends a fixed sequence of items, then repeats the last one.
#[derive(Debug, Clone)]
pub struct FixedSequence(pub Vec<usize>);

impl Recommender for FixedSequence {
    fn recommend(&mut self, ctx: &Context<'_>, _rng: &mut seed::Rng) -> Result<usize> {
        let i = ctx.state.step_index.min(self.0.len().saturating_sub(1));
        self.0
            .get(i)
            .copied()
            .ok_or_else(|| Error::usage("empty fixed sequence"))
    }
}
