//! Actor-critic policy trained on a mixture of world-model rollouts and
//! weighted demonstrations, with periodic discriminator refreshes.

pub mod losses;
pub mod replay;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::catalog::{Catalog, UserProfile};
use crate::env::world_model::{reward_features, WorldModel, WorldModelEnv};
use crate::env::{run_episode, Context, Recommender, Trajectory};
use crate::error::{Error, Result};
use crate::expert::DemoSet;
use crate::irl::{Discriminator, IrlConfig, RewardSource};
use crate::jsonl::{self, Header};
use crate::neural::{adam_step, save_checkpoint, Activation, Gradients, Head, Net, OptState};
use crate::seed::{self, stream};
use crate::weighting::{fit_value_demo, WeightConfig, WeightedDemoSet};

pub use losses::{entropy, imitation_loss, rl_loss, total_loss};
pub use replay::{Entry, ReplayBuffers, Sample, Source};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub gamma_discount: f64,
    pub lambda_imit: f64,
    pub alpha_ent: f64,
    /// Expected fraction of demonstration samples per batch.
    pub mix_ratio: f64,
    pub batch_size: usize,
    /// Critic updates between hard copies of `V` into `V_target`.
    pub target_sync_interval: u64,
    pub rounds: usize,
    pub episodes_per_round: usize,
    pub critic_updates_per_round: usize,
    pub policy_updates_per_round: usize,
    pub buffer_capacity: usize,
    /// Scale the imitation and critic losses of demonstration samples by `w̃`.
    pub weighted_imitation: bool,
    /// Sample demonstrations with priority `w̃` instead of uniformly.
    pub weighted_replay: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: vec![64, 64],
            actor_learning_rate: 1e-3,
            critic_learning_rate: 1e-3,
            gamma_discount: 0.9,
            lambda_imit: 0.5,
            alpha_ent: 0.1,
            mix_ratio: 0.5,
            batch_size: 64,
            target_sync_interval: 100,
            rounds: 200,
            episodes_per_round: 2,
            critic_updates_per_round: 32,
            policy_updates_per_round: 32,
            buffer_capacity: 10_000,
            weighted_imitation: true,
            weighted_replay: true,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("policy.{key}"), "must be positive"))
            }
        };
        let non_negative = |key: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("policy.{key}"), "must be non-negative"))
            }
        };
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("policy.hidden", "layer sizes must be positive"));
        }
        positive("actor_learning_rate", self.actor_learning_rate)?;
        positive("critic_learning_rate", self.critic_learning_rate)?;
        non_negative("lambda_imit", self.lambda_imit)?;
        non_negative("alpha_ent", self.alpha_ent)?;
        if !(0.0..1.0).contains(&self.gamma_discount) {
            return Err(Error::config("policy.gamma_discount", "must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.mix_ratio) {
            return Err(Error::config("policy.mix_ratio", "must be in [0, 1]"));
        }
        for (key, v) in [
            ("batch_size", self.batch_size),
            ("episodes_per_round", self.episodes_per_round),
            ("buffer_capacity", self.buffer_capacity),
        ] {
            if v == 0 {
                return Err(Error::config(format!("policy.{key}"), "must be positive"));
            }
        }
        if self.target_sync_interval == 0 {
            return Err(Error::config("policy.target_sync_interval", "must be positive"));
        }
        Ok(())
    }
}

/// Every trainable network with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle {
    pub actor: Net,
    pub q: Net,
    pub v: Net,
    /// Hard copy of `v`, refreshed every `target_sync_interval` critic updates.
    pub v_target: Net,
    pub discriminator: Discriminator,
    pub actor_opt: OptState,
    pub q_opt: OptState,
    pub v_opt: OptState,
    pub critic_updates: u64,
}

impl PolicyBundle {
    pub fn new(
        state_dim: usize,
        n_items: usize,
        joint_dim: usize,
        policy: &PolicyConfig,
        irl: &IrlConfig,
        seed: u64,
    ) -> Result<Self> {
        let dims = |out: usize| {
            let mut d = vec![state_dim];
            d.extend(&policy.hidden);
            d.push(out);
            d
        };
        let actor = Net::new(&dims(n_items), Activation::Tanh, Head::Softmax, seed::derive(seed, stream::ACTOR, 0))?;
        let q = Net::new(&dims(n_items), Activation::Tanh, Head::Linear, seed::derive(seed, stream::CRITIC, 0))?;
        let v = Net::new(&dims(1), Activation::Tanh, Head::Linear, seed::derive(seed, stream::CRITIC, 1))?;
        let discriminator = Discriminator::new(joint_dim, irl, seed::derive(seed, stream::DISCRIMINATOR, 0))?;
        Ok(PolicyBundle {
            actor_opt: OptState::new(&actor, policy.actor_learning_rate),
            q_opt: OptState::new(&q, policy.critic_learning_rate),
            v_opt: OptState::new(&v, policy.critic_learning_rate),
            v_target: v.clone(),
            actor,
            q,
            v,
            discriminator,
            critic_updates: 0,
        })
    }

    pub fn save(&self, prefix: &Path) -> Result<()> {
        save_checkpoint(
            prefix,
            &[
                ("actor", &self.actor),
                ("q", &self.q),
                ("v", &self.v),
                ("v_target", &self.v_target),
                ("discriminator", &self.discriminator.net),
            ],
        )
    }
}

fn argmax(values: &[f64]) -> usize {
    // Ties resolve to the lowest index.
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Recommends from the actor: argmax when greedy, otherwise a sample from `π`.
pub struct ActorPolicy<'a> {
    pub actor: &'a Net,
    pub greedy: bool,
}

impl Recommender for ActorPolicy<'_> {
    fn recommend(&mut self, ctx: &Context<'_>, rng: &mut seed::Rng) -> Result<usize> {
        let probs = self.actor.forward(&ctx.state.encoding)?;
        if self.greedy {
            return Ok(argmax(&probs));
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok(i);
            }
        }
        Ok(probs.len() - 1)
    }
}

/// Reward fed to the critic target for one sample.
pub fn critic_reward(sample: &Sample<'_>, source: RewardSource, disc: &Discriminator) -> Result<f64> {
    let r_hat = sample.entry.transition.reward;
    Ok(match source {
        RewardSource::WorldModel => r_hat,
        RewardSource::Irl => disc.reward(&sample.entry.embedding)?,
        RewardSource::Mix => r_hat + disc.reward(&sample.entry.embedding)?,
    })
}

/// TD target `y = r + γ·V_target(s')`, without bootstrap at terminal transitions.
pub fn td_target(reward: f64, next_value: f64, gamma: f64, done: bool) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * next_value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticLosses {
    pub q: f64,
    pub v: f64,
}

/// Weighted squared TD error of `q` against `r + γ V_target(s')`, with its gradient.
pub fn q_loss_and_grads(
    q: &Net,
    v_target: &Net,
    disc: &Discriminator,
    batch: &[Sample<'_>],
    gamma: f64,
    reward_source: RewardSource,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::usage("critic update needs a non-empty batch"));
    }
    let n = batch.len() as f64;
    let mut grads = q.zero_grads();
    let mut loss = 0.0;
    for s in batch {
        let t = &s.entry.transition;
        let r = critic_reward(s, reward_source, disc)?;
        let next = if t.done { 0.0 } else { v_target.forward(&t.next_state.encoding)?[0] };
        let y = td_target(r, next, gamma, t.done);
        let trace = q.trace(&t.state.encoding)?;
        let err = trace.output[t.action] - y;
        loss += s.weight * err * err / n;
        let mut d = vec![0.0; q.output_dim()];
        d[t.action] = 2.0 * s.weight * err / n;
        q.accumulate_from_logits(&trace, &d, &mut grads);
    }
    Ok((loss, grads))
}

/// Squared error of `v` against `E_{a~π} Q(s, a)`, with its gradient. `actor` and `q` are held fixed.
pub fn v_loss_and_grads(v: &Net, actor: &Net, q: &Net, batch: &[Sample<'_>]) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::usage("critic update needs a non-empty batch"));
    }
    let n = batch.len() as f64;
    let mut grads = v.zero_grads();
    let mut loss = 0.0;
    for s in batch {
        let x = &s.entry.transition.state.encoding;
        let pi = actor.forward(x)?;
        let target: f64 = pi.iter().zip(q.forward(x)?).map(|(p, qa)| p * qa).sum();
        let trace = v.trace(x)?;
        let err = trace.output[0] - target;
        loss += err * err / n;
        v.accumulate_from_logits(&trace, &[2.0 * err / n], &mut grads);
    }
    Ok((loss, grads))
}

/// One step on `Q` toward the TD target (demonstrations scaled by their
/// weight) and on `V` toward `E_π Q`, then a scheduled hard target sync.
pub fn critic_update(
    bundle: &mut PolicyBundle,
    batch: &[Sample<'_>],
    gamma: f64,
    reward_source: RewardSource,
    sync_interval: u64,
) -> Result<CriticLosses> {
    let (q_loss, q_grads) = q_loss_and_grads(
        &bundle.q,
        &bundle.v_target,
        &bundle.discriminator,
        batch,
        gamma,
        reward_source,
    )?;
    // V chases the pre-step Q.
    let (v_loss, v_grads) = v_loss_and_grads(&bundle.v, &bundle.actor, &bundle.q, batch)?;
    if !(q_loss.is_finite() && v_loss.is_finite()) {
        return Err(Error::numeric(format!("critic loss is not finite (q {q_loss}, v {v_loss})")));
    }
    adam_step(&mut bundle.q, &q_grads, &mut bundle.q_opt)?;
    adam_step(&mut bundle.v, &v_grads, &mut bundle.v_opt)?;
    bundle.critic_updates += 1;
    if bundle.critic_updates % sync_interval == 0 {
        bundle.v_target = bundle.v.clone();
    }
    Ok(CriticLosses { q: q_loss, v: v_loss })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyLosses {
    pub imitation: f64,
    pub rl: f64,
    pub total: f64,
    /// Mean policy entropy over the batch states.
    pub entropy: f64,
}

/// One actor step on `λ_imit·L_imit + L_RL`. The imitation term covers the
/// demonstration part of the batch and the RL term every state.
pub fn policy_update(bundle: &mut PolicyBundle, batch: &[Sample<'_>], config: &PolicyConfig) -> Result<PolicyLosses> {
    if batch.is_empty() {
        return Err(Error::usage("policy update needs a non-empty batch"));
    }
    let states: Vec<&[f64]> = batch.iter().map(|s| s.entry.transition.state.encoding.as_slice()).collect();
    let pairs: Vec<losses::WeightedPair<'_>> = batch
        .iter()
        .filter(|s| s.source == Source::Demo)
        .map(|s| (s.entry.transition.state.encoding.as_slice(), s.entry.transition.action, s.weight))
        .collect();
    let q_values = losses::q_rows(&bundle.q, &states)?;
    let (imitation, rl, total, grads) =
        total_loss(&bundle.actor, &pairs, &states, &q_values, config.lambda_imit, config.alpha_ent)?;
    if !total.is_finite() {
        return Err(Error::numeric(format!("policy loss is not finite (imitation {imitation}, rl {rl})")));
    }
    let mut h = 0.0;
    for s in &states {
        h += entropy(&bundle.actor.forward(s)?);
    }
    adam_step(&mut bundle.actor, &grads, &mut bundle.actor_opt)?;
    Ok(PolicyLosses {
        imitation,
        rl,
        total,
        entropy: h / states.len() as f64,
    })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub q_loss: f64,
    pub v_loss: f64,
    pub imitation_loss: f64,
    pub rl_loss: f64,
    pub total_loss: f64,
    pub entropy: f64,
    pub mean_d_demo: f64,
    pub mean_d_policy: f64,
    pub discriminator_loss: Option<f64>,
    pub mean_weight: f64,
    pub env_buffer: usize,
    /// Mean length and cumulative reward of this round's world-model rollouts.
    pub rollout_len: f64,
    pub rollout_return: f64,
}

pub fn metrics_header() -> Header {
    Header::new("demorec.metrics", 1)
}

pub fn save_metrics(path: &Path, metrics: &[RoundMetrics]) -> Result<()> {
    jsonl::write(path, &metrics_header(), metrics)
}

pub fn load_metrics(path: &Path) -> Result<Vec<RoundMetrics>> {
    jsonl::read(path, &metrics_header())
}

/// Everything the training loop needs besides configuration.
pub struct TrainInputs<'a> {
    pub model: &'a WorldModel,
    pub catalog: &'a Catalog,
    pub demos: &'a DemoSet,
    /// Users rollouts are played for, in round-robin order.
    pub users: &'a [UserProfile],
    /// Whether the diversity rule ends rollouts in the world model.
    pub diversity_rule: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainSettings {
    pub policy: PolicyConfig,
    pub weighting: WeightConfig,
    pub irl: IrlConfig,
    /// Force `w̃ ≡ 1`.
    pub uniform_weights: bool,
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.weighting.validate()?;
        self.irl.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: PolicyBundle,
    pub weighted: WeightedDemoSet,
    pub value_demo: Net,
    pub value_demo_mse: f64,
    pub metrics: Vec<RoundMetrics>,
}

fn demo_entries(demos: &DemoSet) -> Vec<Entry> {
    demos
        .transitions()
        .zip(&demos.embeddings)
        .map(|(t, e)| Entry {
            transition: t.clone(),
            embedding: e.clone(),
        })
        .collect()
}

fn loss_and_priority(weighted: &WeightedDemoSet, policy: &PolicyConfig) -> (Vec<f64>, Vec<f64>) {
    let w = weighted.weights();
    let ones = vec![1.0; w.len()];
    let loss = if policy.weighted_imitation { w.clone() } else { ones.clone() };
    let priority = if policy.weighted_replay { w } else { ones };
    (loss, priority)
}

fn pick_embeddings<'a, I>(pool: I, len: usize, count: usize, rng: &mut seed::Rng) -> Vec<&'a [f64]>
where
    I: Fn(usize) -> &'a [f64],
{
    (0..count).map(|_| pool(rng.gen_range(0..len))).collect()
}

/// Refresh the discriminator on uniform demo and rollout batches. Returns the last loss.
fn refresh_discriminator(
    bundle: &mut PolicyBundle,
    demos: &DemoSet,
    buffers: &ReplayBuffers,
    irl: &IrlConfig,
    rng: &mut seed::Rng,
) -> Result<Option<f64>> {
    if buffers.env_len() == 0 || demos.is_empty() {
        return Ok(None);
    }
    let env: Vec<&[f64]> = buffers.env_entries().map(|e| e.embedding.as_slice()).collect();
    let mut last = None;
    for _ in 0..irl.refresh_steps {
        let demo_batch = pick_embeddings(|i| demos.embeddings[i].as_slice(), demos.len(), irl.batch_size, rng);
        let policy_batch = pick_embeddings(|i| env[i], env.len(), irl.batch_size, rng);
        last = Some(bundle.discriminator.train_step(&demo_batch, &policy_batch)?);
    }
    Ok(last)
}

fn mean_prob<'a>(disc: &Discriminator, xs: impl Iterator<Item = &'a [f64]>, limit: usize) -> Result<f64> {
    let batch: Vec<&[f64]> = xs.take(limit).collect();
    disc.mean_prob(&batch)
}

/// Phase (ii) weighting followed by `rounds` of rollout, critic updates,
/// actor updates and periodic discriminator refresh with re-weighting.
pub fn train(inputs: &TrainInputs<'_>, settings: &TrainSettings, seed: u64) -> Result<TrainOutcome> {
    settings.validate()?;
    let TrainInputs {
        model,
        catalog,
        demos,
        users,
        diversity_rule,
    } = *inputs;
    let policy = &settings.policy;
    if demos.is_empty() {
        return Err(Error::usage("training needs at least one demonstration"));
    }
    if users.is_empty() {
        return Err(Error::usage("training needs at least one rollout user"));
    }
    let state_dim = model.tracker.state_dim();
    let joint_dim = demos.embeddings[0].len();
    let mut bundle = PolicyBundle::new(state_dim, catalog.len(), joint_dim, policy, &settings.irl, seed)?;

    let (value_demo, value_demo_mse) =
        fit_value_demo(demos, settings.weighting.gamma_discount, &settings.weighting.value_fit, seed)?;
    let mut weighted = WeightedDemoSet::new(
        demos.clone(),
        model,
        catalog,
        &value_demo,
        &settings.weighting,
        settings.uniform_weights,
    )?;
    let mut buffers = ReplayBuffers::new(policy.buffer_capacity)?;
    let (loss_w, priority) = loss_and_priority(&weighted, policy);
    buffers.set_demos(demo_entries(demos), loss_w, &priority)?;

    let env = WorldModelEnv {
        model,
        catalog,
        diversity_rule,
    };
    let mut metrics = Vec::with_capacity(policy.rounds);
    let mut episode = 0u64;
    let mut disc_loss = None;
    for round in 0..policy.rounds {
        let mut rollouts: Vec<Trajectory> = Vec::with_capacity(policy.episodes_per_round);
        for _ in 0..policy.episodes_per_round {
            let user = &users[episode as usize % users.len()];
            let mut rec = ActorPolicy {
                actor: &bundle.actor,
                greedy: false,
            };
            rollouts.push(run_episode(&env, &mut rec, user, seed::derive(seed, stream::ROLLOUT, episode))?);
            episode += 1;
        }
        for traj in &rollouts {
            for t in &traj.transitions {
                let embedding = reward_features(&t.state.encoding, &catalog.item(t.action)?.embedding);
                buffers.push_env(Entry {
                    transition: t.clone(),
                    embedding,
                });
            }
        }

        if round % settings.irl.refresh_interval == 0 {
            let mut rng = seed::derived_rng(seed, stream::DISCRIMINATOR, round as u64 + 1);
            disc_loss = refresh_discriminator(&mut bundle, demos, &buffers, &settings.irl, &mut rng)?.or(disc_loss);
            weighted.reweigh(&bundle.discriminator, &settings.weighting)?;
            let (loss_w, priority) = loss_and_priority(&weighted, policy);
            buffers.set_weights(loss_w, &priority)?;
        }

        let mut rng = seed::derived_rng(seed, stream::REPLAY, round as u64);
        let (mut q_loss, mut v_loss) = (0.0, 0.0);
        for _ in 0..policy.critic_updates_per_round {
            let batch = buffers.sample(policy.batch_size, policy.mix_ratio, &mut rng)?;
            let l = critic_update(
                &mut bundle,
                &batch,
                policy.gamma_discount,
                settings.irl.reward_source,
                policy.target_sync_interval,
            )
            .map_err(|e| diagnose(e, round))?;
            q_loss += l.q;
            v_loss += l.v;
        }
        let mut pl = PolicyLosses {
            imitation: 0.0,
            rl: 0.0,
            total: 0.0,
            entropy: 0.0,
        };
        for _ in 0..policy.policy_updates_per_round {
            let batch = buffers.sample(policy.batch_size, policy.mix_ratio, &mut rng)?;
            let l = policy_update(&mut bundle, &batch, policy).map_err(|e| diagnose(e, round))?;
            pl.imitation += l.imitation;
            pl.rl += l.rl;
            pl.total += l.total;
            pl.entropy += l.entropy;
        }
        let cu = policy.critic_updates_per_round.max(1) as f64;
        let pu = policy.policy_updates_per_round.max(1) as f64;
        let n_roll = rollouts.len() as f64;
        metrics.push(RoundMetrics {
            round,
            q_loss: q_loss / cu,
            v_loss: v_loss / cu,
            imitation_loss: pl.imitation / pu,
            rl_loss: pl.rl / pu,
            total_loss: pl.total / pu,
            entropy: pl.entropy / pu,
            mean_d_demo: mean_prob(&bundle.discriminator, demos.embeddings.iter().map(|e| e.as_slice()), 256)?,
            mean_d_policy: mean_prob(
                &bundle.discriminator,
                buffers.env_entries().rev().map(|e| e.embedding.as_slice()),
                256,
            )?,
            discriminator_loss: disc_loss,
            mean_weight: weighted.weights().iter().sum::<f64>() / weighted.rows.len() as f64,
            env_buffer: buffers.env_len(),
            rollout_len: rollouts.iter().map(|t| t.len() as f64).sum::<f64>() / n_roll,
            rollout_return: rollouts.iter().map(|t| t.rewards().iter().sum::<f64>()).sum::<f64>() / n_roll,
        });
    }
    Ok(TrainOutcome {
        bundle,
        weighted,
        value_demo,
        value_demo_mse,
        metrics,
    })
}

fn diagnose(e: Error, round: usize) -> Error {
    match e {
        Error::Numeric(m) => Error::numeric(format!("round {round}: {m}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tracker::StateVector;
    use crate::env::Transition;

    fn state(encoding: Vec<f64>, terminal: bool) -> StateVector {
        StateVector {
            encoding,
            history: vec![],
            step_index: 0,
            terminal,
        }
    }

    fn small_bundle(state_dim: usize, n_items: usize) -> PolicyBundle {
        let cfg = PolicyConfig {
            hidden: vec![8],
            ..PolicyConfig::default()
        };
        let irl = IrlConfig {
            hidden: vec![4],
            ..IrlConfig::default()
        };
        PolicyBundle::new(state_dim, n_items, 3, &cfg, &irl, 1).unwrap()
    }

    #[test]
    fn td_target_examples() {
        assert_eq!(td_target(5.0, 100.0, 0.9, true), 5.0);
        assert_eq!(td_target(2.5, 7.0, 0.0, false), 2.5);
        assert_eq!(td_target(1.0, 10.0, 0.5, false), 6.0);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }

    #[test]
    fn target_syncs_on_schedule_only() {
        let mut b = small_bundle(2, 3);
        let e = Entry {
            transition: Transition {
                state: state(vec![0.1, 0.2], false),
                action: 1,
                reward: 3.0,
                next_state: state(vec![0.3, 0.1], false),
                done: false,
            },
            embedding: vec![0.0; 3],
        };
        let batch = vec![Sample {
            entry: &e,
            source: Source::Env,
            weight: 1.0,
        }];
        let initial = b.v_target.clone();
        for i in 1..=5 {
            critic_update(&mut b, &batch, 0.9, RewardSource::WorldModel, 3).unwrap();
            if i < 3 {
                assert_eq!(b.v_target, initial);
            }
            if i == 3 {
                assert_eq!(b.v_target, b.v);
            }
            if i > 3 {
                assert_ne!(b.v_target, b.v);
            }
        }
    }

    #[test]
    fn lambda_zero_matches_pure_rl_step() {
        let e = Entry {
            transition: Transition {
                state: state(vec![0.4, -0.2], false),
                action: 2,
                reward: 3.0,
                next_state: state(vec![0.0, 0.0], false),
                done: false,
            },
            embedding: vec![0.0; 3],
        };
        let batch = vec![
            Sample {
                entry: &e,
                source: Source::Demo,
                weight: 2.0,
            },
            Sample {
                entry: &e,
                source: Source::Env,
                weight: 1.0,
            },
        ];
        let cfg = PolicyConfig {
            lambda_imit: 0.0,
            ..PolicyConfig::default()
        };
        let mut a = small_bundle(2, 4);
        let mut b = a.clone();
        policy_update(&mut a, &batch, &cfg).unwrap();
        let states = vec![e.transition.state.encoding.as_slice(); 2];
        let q = losses::q_rows(&b.q, &states).unwrap();
        let (_, g) = rl_loss(&b.actor, &states, &q, cfg.alpha_ent).unwrap();
        adam_step(&mut b.actor, &g, &mut b.actor_opt).unwrap();
        assert_eq!(a.actor, b.actor);
    }
}
