//! Demonstration expert: reflector, planner, actor and critic roles backed by
//! a pluggable [`Provider`], each reading a similarity-gated memory.

pub mod external;
pub mod memory;
pub mod provider;

use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use external::{ExternalConfig, ExternalProvider};
pub use memory::{MemoryEntry, MemoryStore};
pub use provider::{
    ActRequest, CriticRequest, Guidance, Instructions, PlanRequest, Provider, ProviderKind, ReflectRequest,
    Reflection, ScriptedConfig, ScriptedProvider,
};

use crate::env::catalog::{cosine, l2_norm, Catalog};
use crate::env::termination::TerminationRule;
use crate::env::world_model::{reward_features, WorldModel, WorldModelEnv};
use crate::env::{run_episode, Context, Recommender, TerminatedBy, Trajectory, Transition, UserProfile};
use crate::error::{Error, Result};
use crate::jsonl::{self, Header};
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertConfig {
    pub provider: ProviderKind,
    pub temperature: f64,
    pub tau_planner: f64,
    pub tau_actor: f64,
    pub tau_critic: f64,
    pub memory_capacity: usize,
    pub n_demo_users: usize,
    pub scripted: ScriptedConfig,
    pub external: ExternalConfig,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            provider: ProviderKind::Scripted,
            temperature: 0.5,
            tau_planner: MemoryStore::<()>::DEFAULT_THRESHOLD,
            tau_actor: MemoryStore::<()>::DEFAULT_THRESHOLD,
            tau_critic: MemoryStore::<()>::DEFAULT_THRESHOLD,
            memory_capacity: MemoryStore::<()>::DEFAULT_CAPACITY,
            n_demo_users: 100,
            scripted: ScriptedConfig::default(),
            external: ExternalConfig::default(),
        }
    }
}

impl ExpertConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("expert.temperature", "must be non-negative"));
        }
        for (key, tau) in [
            ("expert.tau_planner", self.tau_planner),
            ("expert.tau_actor", self.tau_actor),
            ("expert.tau_critic", self.tau_critic),
        ] {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::config(key, "must be in [0, 1]"));
            }
        }
        if self.memory_capacity == 0 {
            return Err(Error::config("expert.memory_capacity", "must be positive"));
        }
        self.scripted.validate()
    }

    /// Provider of the configured kind.
    pub fn build_provider(
        &self,
        catalog: Arc<Catalog>,
        rule: TerminationRule,
        gamma: f64,
        seed: u64,
    ) -> Result<Box<dyn Provider>> {
        Ok(match self.provider {
            ProviderKind::Scripted => Box::new(ScriptedProvider::new(
                catalog,
                rule,
                self.temperature,
                gamma,
                seed,
                self.scripted.clone(),
            )?),
            ProviderKind::External => Box::new(ExternalProvider::new(
                &self.external.clone().with_env_overrides(),
                self.temperature,
                catalog,
            )?),
        })
    }
}

/// Item whose embedding has the highest cosine with `indicator`; ties go to the lowest id.
pub fn select_item(indicator: &[f64], catalog: &Catalog) -> Result<usize> {
    if indicator.iter().any(|v| !v.is_finite()) {
        return Err(Error::usage("indicator is not finite"));
    }
    if l2_norm(indicator) == 0.0 {
        return Err(Error::usage("indicator is the zero vector"));
    }
    if indicator.len() != catalog.d_item {
        return Err(Error::usage(format!(
            "indicator has dimension {}, items have {}",
            indicator.len(),
            catalog.d_item
        )));
    }
    let mut best = None;
    let mut best_score = f64::NEG_INFINITY;
    for item in &catalog.items {
        let s = cosine(indicator, &item.embedding);
        if s > best_score {
            best_score = s;
            best = Some(item.id);
        }
    }
    best.ok_or_else(|| Error::config("env.n_items", "catalog is empty"))
}

/// `r + γ·V(s') − V(s)`.
pub fn expert_advantage(transition: &Transition, value: f64, next_value: f64, gamma: f64) -> Result<f64> {
    if !value.is_finite() || !next_value.is_finite() {
        return Err(Error::numeric("expert values must be finite"));
    }
    Ok(transition.reward + gamma * next_value - value)
}

/// The four-role expert playing as a [`Recommender`].
pub struct ExpertAgent {
    provider: Box<dyn Provider>,
    pub instructions: Instructions,
    pub planner_memory: MemoryStore<Reflection>,
    pub action_memory: MemoryStore<Vec<f64>>,
    pub critic_memory: MemoryStore<()>,
    gamma: f64,
    episodes: usize,
    step_values: Vec<f64>,
    step_indicators: Vec<Vec<f64>>,
    last_values: Vec<f64>,
}

impl ExpertAgent {
    pub fn new(provider: Box<dyn Provider>, config: &ExpertConfig, gamma: f64) -> Result<Self> {
        config.validate()?;
        Ok(ExpertAgent {
            provider,
            instructions: Instructions::default(),
            planner_memory: MemoryStore::new(config.tau_planner, config.memory_capacity)?,
            action_memory: MemoryStore::new(config.tau_actor, config.memory_capacity)?,
            critic_memory: MemoryStore::new(config.tau_critic, config.memory_capacity)?,
            gamma,
            episodes: 0,
            step_values: Vec::new(),
            step_indicators: Vec::new(),
            last_values: Vec::new(),
        })
    }

    pub fn provider_kind(&self) -> ProviderKind {
        self.provider.kind()
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    /// Critic estimates `V(s_t)` for every step of the most recently finished episode.
    pub fn last_episode_values(&self) -> &[f64] {
        &self.last_values
    }

    /// Reflect on a finished episode and store the reflection in planner memory.
    pub fn reflect(&mut self, trajectory: &Trajectory) -> Result<Reflection> {
        let reflection = self.provider.reflect(&ReflectRequest {
            episode: self.episodes,
            trajectory,
            instructions: &self.instructions.reflect,
        })?;
        let key = trajectory
            .transitions
            .last()
            .map(|t| t.next_state.encoding.clone())
            .ok_or_else(|| Error::usage("cannot reflect on an empty episode"))?;
        self.planner_memory.insert(key, reflection.clone(), None)?;
        Ok(reflection)
    }
}

impl Recommender for ExpertAgent {
    fn recommend(&mut self, ctx: &Context<'_>, rng: &mut seed::Rng) -> Result<usize> {
        let step_seed: u64 = rng.gen();
        let query = &ctx.state.encoding;

        let reflections: Vec<&Reflection> = self.planner_memory.retrieve(query)?.into_iter().map(|e| &e.payload).collect();
        let guidance = self.provider.plan(&PlanRequest {
            state: ctx.state,
            user: ctx.user,
            reflections: &reflections,
            instructions: &self.instructions.plan,
        })?;

        let recalled = self.action_memory.retrieve(query)?;
        let indicator = self.provider.act(&ActRequest {
            state: ctx.state,
            user: ctx.user,
            guidance: &guidance,
            recalled: &recalled,
            instructions: &self.instructions.act,
            step_seed,
        })?;

        let values: Vec<f64> = self.critic_memory.retrieve(query)?.iter().filter_map(|e| e.value).collect();
        let value = self.provider.critic(&CriticRequest {
            state: ctx.state,
            user: ctx.user,
            recalled_values: &values,
            instructions: &self.instructions.critic,
        })?;

        let item = select_item(&indicator, ctx.catalog)?;
        self.step_values.push(value);
        self.step_indicators.push(indicator);
        Ok(item)
    }

    fn observe_episode(&mut self, trajectory: &Trajectory) -> Result<()> {
        self.reflect(trajectory)?;
        let indicators = std::mem::take(&mut self.step_indicators);
        let mut ret = 0.0;
        let mut returns = vec![0.0; trajectory.len()];
        for (i, t) in trajectory.transitions.iter().enumerate().rev() {
            ret = t.reward + self.gamma * ret;
            returns[i] = ret;
        }
        for ((t, indicator), g) in trajectory.transitions.iter().zip(indicators).zip(returns) {
            self.action_memory.insert(t.state.encoding.clone(), indicator, Some(t.reward))?;
            self.critic_memory.insert(t.state.encoding.clone(), (), Some(g))?;
        }
        self.last_values = std::mem::take(&mut self.step_values);
        self.episodes += 1;
        Ok(())
    }
}

/// Expert trajectories with one joint `(state ⊕ item)` embedding and one
/// critic estimate per transition, both in trajectory order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DemoSet {
    pub trajectories: Vec<Trajectory>,
    pub embeddings: Vec<Vec<f64>>,
    pub expert_values: Vec<f64>,
}

impl DemoSet {
    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.trajectories.iter().flat_map(|t| t.transitions.iter())
    }

    /// Expert advantage `r + γV(s') − V(s)` per transition, with `V(s') = 0` at episode ends.
    pub fn expert_advantages(&self, gamma: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        let mut k = 0;
        for traj in &self.trajectories {
            for (i, t) in traj.transitions.iter().enumerate() {
                let next = if t.done { 0.0 } else { self.expert_values[k + 1] };
                out.push(expert_advantage(t, self.expert_values[k], next, gamma)?);
                debug_assert!(i + 1 < traj.len() || t.done);
                k += 1;
            }
        }
        Ok(out)
    }

    pub fn mean_trajectory_reward(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        self.trajectories.iter().map(|t| t.rewards().iter().sum::<f64>()).sum::<f64>() / self.trajectories.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let n: usize = self.trajectories.iter().map(Trajectory::len).sum();
        if n != self.embeddings.len() || n != self.expert_values.len() {
            return Err(Error::data(format!(
                "demo set has {n} transitions, {} embeddings and {} values",
                self.embeddings.len(),
                self.expert_values.len()
            )));
        }
        if self.trajectories.iter().any(Trajectory::is_empty) {
            return Err(Error::data("demo set contains an empty trajectory"));
        }
        Ok(())
    }
}

/// Run the expert in the world model, one episode per user, in order.
///
/// The expert's memories persist across users. A provider failure stops the
/// collection with [`Error::PartialCollection`] naming the users already done.
pub fn collect_demonstrations(
    model: &WorldModel,
    catalog: &Catalog,
    agent: &mut ExpertAgent,
    users: &[UserProfile],
    seed: u64,
    diversity_rule: bool,
) -> Result<DemoSet> {
    let env = WorldModelEnv {
        model,
        catalog,
        diversity_rule,
    };
    let mut demos = DemoSet::default();
    let mut completed = Vec::new();
    for user in users {
        let episode_seed = seed::derive(seed, stream::DEMOS, user.id as u64);
        let trajectory = match run_episode(&env, agent, user, episode_seed) {
            Ok(t) => t,
            Err(e) => {
                return Err(Error::PartialCollection {
                    completed,
                    source: Box::new(e),
                })
            }
        };
        for t in &trajectory.transitions {
            demos
                .embeddings
                .push(reward_features(&t.state.encoding, &catalog.item(t.action)?.embedding));
        }
        demos.expert_values.extend_from_slice(agent.last_episode_values());
        demos.trajectories.push(trajectory);
        completed.push(user.id);
    }
    demos.validate()?;
    Ok(demos)
}

pub fn demo_header() -> Header {
    Header::new("demorec.demos", 1)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DemoRecord {
    Trajectory {
        user: UserProfile,
        terminated_by: TerminatedBy,
        length: usize,
    },
    Step {
        transition: Transition,
        embedding: Vec<f64>,
        expert_value: f64,
    },
}

pub fn save_demos(path: &Path, demos: &DemoSet) -> Result<()> {
    demos.validate()?;
    let mut records = Vec::with_capacity(demos.len() + demos.trajectories.len());
    let mut k = 0;
    for traj in &demos.trajectories {
        records.push(DemoRecord::Trajectory {
            user: traj.user.clone(),
            terminated_by: traj.terminated_by,
            length: traj.len(),
        });
        for t in &traj.transitions {
            records.push(DemoRecord::Step {
                transition: t.clone(),
                embedding: demos.embeddings[k].clone(),
                expert_value: demos.expert_values[k],
            });
            k += 1;
        }
    }
    jsonl::write(path, &demo_header(), records)
}

pub fn load_demos(path: &Path) -> Result<DemoSet> {
    let records: Vec<DemoRecord> = jsonl::read(path, &demo_header())?;
    let mut demos = DemoSet::default();
    let mut expected = 0;
    for r in records {
        match r {
            DemoRecord::Trajectory {
                user,
                terminated_by,
                length,
            } => {
                if expected != 0 {
                    return Err(Error::data("trajectory record before previous trajectory finished"));
                }
                expected = length;
                demos.trajectories.push(Trajectory {
                    user,
                    transitions: Vec::with_capacity(length),
                    terminated_by,
                });
            }
            DemoRecord::Step {
                transition,
                embedding,
                expert_value,
            } => {
                let traj = demos
                    .trajectories
                    .last_mut()
                    .filter(|_| expected > 0)
                    .ok_or_else(|| Error::data("step record outside a trajectory"))?;
                traj.transitions.push(transition);
                demos.embeddings.push(embedding);
                demos.expert_values.push(expert_value);
                expected -= 1;
            }
        }
    }
    if expected != 0 {
        return Err(Error::data("demo file ends inside a trajectory"));
    }
    demos.validate()?;
    Ok(demos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::catalog::{build_synthetic_catalog, Item};
    use crate::env::tracker::StateVector;
    use rand::Rng;

    fn transition(reward: f64) -> Transition {
        let s = StateVector {
            encoding: vec![],
            history: vec![],
            step_index: 0,
            terminal: false,
        };
        Transition {
            state: s.clone(),
            action: 0,
            reward,
            next_state: s,
            done: false,
        }
    }

    #[test]
    fn advantage_arithmetic() {
        assert_eq!(expert_advantage(&transition(0.0), 0.0, 0.0, 0.9).unwrap(), 0.0);
        assert!((expert_advantage(&transition(4.0), 12.0, 10.0, 0.9).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(expert_advantage(&transition(4.0), 1.5, 99.0, 0.0).unwrap(), 2.5);
        assert!(expert_advantage(&transition(4.0), f64::NAN, 0.0, 0.9).is_err());
    }

    #[test]
    fn select_item_basics() {
        let (items, _) = build_synthetic_catalog(1, 40, 4, 6).unwrap();
        let catalog = Catalog::new(items, 4).unwrap();
        assert_eq!(select_item(&catalog.items[7].embedding, &catalog).unwrap(), 7);
        assert!(matches!(select_item(&[0.0; 6], &catalog), Err(Error::Usage(_))));
    }

    #[test]
    fn select_item_matches_brute_force_with_ties() {
        let items = vec![
            Item { id: 0, embedding: vec![0.0, 1.0], category: 0 },
            Item { id: 1, embedding: vec![1.0, 0.0], category: 0 },
            Item { id: 2, embedding: vec![1.0, 0.0], category: 1 },
            Item { id: 3, embedding: vec![-1.0, 0.0], category: 1 },
        ];
        let catalog = Catalog::new(items, 2).unwrap();
        assert_eq!(select_item(&[2.0, 0.0], &catalog).unwrap(), 1);
        assert_eq!(select_item(&[0.0, 1.0], &catalog).unwrap(), 0);

        let (items, _) = build_synthetic_catalog(2, 60, 6, 5).unwrap();
        let catalog = Catalog::new(items, 6).unwrap();
        let mut rng = seed::rng(4);
        for _ in 0..100 {
            let v: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let scores: Vec<f64> = catalog.items.iter().map(|i| cosine(&v, &i.embedding)).collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let oracle = scores.iter().position(|s| *s == max).unwrap();
            assert_eq!(select_item(&v, &catalog).unwrap(), oracle);
        }
    }
}
