//! Adversarial discriminator over joint `(state ⊕ item)` embeddings and the
//! reward derived from it.
//!
//! Label convention: the discriminator is pushed toward `D → 1` on policy
//! pairs and `D → 0` on expert pairs, minimizing
//! `L_D = −E_demo[log(1 − D)] − E_policy[log D]`. Expert-like pairs therefore
//! get a small `D` and a large reward `−log D`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{adam_step, sigmoid, softplus, Activation, Head, Net, OptState};

/// Probabilities are clamped to `[EPS_D, 1 − EPS_D]`.
pub const EPS_D: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSource {
    /// Critic targets use the world model's `r̂` only.
    WorldModel,
    /// Critic targets use `r_IRL = −log D` only.
    Irl,
    /// Critic targets use `r̂ + r_IRL`.
    Mix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IrlConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Policy-update rounds between discriminator refreshes.
    pub refresh_interval: usize,
    /// Gradient steps per refresh.
    pub refresh_steps: usize,
    pub reward_source: RewardSource,
}

impl Default for IrlConfig {
    fn default() -> Self {
        IrlConfig {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            batch_size: 64,
            refresh_interval: 10,
            refresh_steps: 50,
            reward_source: RewardSource::WorldModel,
        }
    }
}

impl IrlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("irl.hidden", "layer sizes must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("irl.learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("irl.batch_size", "must be positive"));
        }
        if self.refresh_interval == 0 {
            return Err(Error::config("irl.refresh_interval", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiscriminatorStats {
    pub last_loss: Option<f64>,
    pub updates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub net: Net,
    pub opt: OptState,
    pub stats: DiscriminatorStats,
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(EPS_D, 1.0 - EPS_D)
}

/// `−log D` for an already clamped-or-not probability.
pub fn irl_reward_from_prob(d: f64) -> f64 {
    -clamp_prob(d).ln()
}

fn joint(state_embedding: &[f64], action_embedding: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(state_embedding.len() + action_embedding.len());
    x.extend_from_slice(state_embedding);
    x.extend_from_slice(action_embedding);
    x
}

impl Discriminator {
    pub fn new(input_dim: usize, config: &IrlConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut dims = vec![input_dim];
        dims.extend(&config.hidden);
        dims.push(1);
        Ok(Self::from_net(Net::new(&dims, Activation::Tanh, Head::Linear, seed)?, config.learning_rate))
    }

    pub fn from_net(net: Net, learning_rate: f64) -> Self {
        let opt = OptState::new(&net, learning_rate);
        Discriminator {
            net,
            opt,
            stats: DiscriminatorStats::default(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn logit(&self, embedding: &[f64]) -> Result<f64> {
        Ok(self.net.forward(embedding)?[0])
    }

    /// Clamped `D(x)` for a joint embedding.
    pub fn prob(&self, embedding: &[f64]) -> Result<f64> {
        Ok(clamp_prob(sigmoid(self.logit(embedding)?)))
    }

    pub fn reward(&self, embedding: &[f64]) -> Result<f64> {
        Ok(irl_reward_from_prob(self.prob(embedding)?))
    }

    pub fn mean_prob(&self, batch: &[&[f64]]) -> Result<f64> {
        if batch.is_empty() {
            return Ok(f64::NAN);
        }
        let mut total = 0.0;
        for x in batch {
            total += self.prob(x)?;
        }
        Ok(total / batch.len() as f64)
    }

    pub fn loss(&self, demo: &[&[f64]], policy: &[&[f64]]) -> Result<f64> {
        Ok(self.loss_and_grads(demo, policy)?.0)
    }

    /// `L_D` and its parameter gradients.
    pub fn loss_and_grads(&self, demo: &[&[f64]], policy: &[&[f64]]) -> Result<(f64, crate::neural::Gradients)> {
        if demo.is_empty() || policy.is_empty() {
            return Err(Error::usage("discriminator batches must be non-empty"));
        }
        let mut grads = self.net.zero_grads();
        let mut loss = 0.0;
        let nd = demo.len() as f64;
        for x in demo {
            let trace = self.net.trace(x)?;
            let z = trace.logits[0];
            loss += softplus(z) / nd;
            self.net.accumulate_from_logits(&trace, &[sigmoid(z) / nd], &mut grads);
        }
        let np = policy.len() as f64;
        for x in policy {
            let trace = self.net.trace(x)?;
            let z = trace.logits[0];
            loss += softplus(-z) / np;
            self.net.accumulate_from_logits(&trace, &[-sigmoid(-z) / np], &mut grads);
        }
        Ok((loss, grads))
    }

    /// One Adam step on `L_D`; returns the loss after the step.
    pub fn train_step(&mut self, demo: &[&[f64]], policy: &[&[f64]]) -> Result<f64> {
        let (loss, grads) = self.loss_and_grads(demo, policy)?;
        if !loss.is_finite() {
            return Err(Error::numeric("discriminator loss is not finite"));
        }
        adam_step(&mut self.net, &grads, &mut self.opt)?;
        let after = self.loss(demo, policy)?;
        self.stats.last_loss = Some(after);
        self.stats.updates += 1;
        Ok(after)
    }
}

pub fn discriminator_prob(disc: &Discriminator, state_embedding: &[f64], action_embedding: &[f64]) -> Result<f64> {
    disc.prob(&joint(state_embedding, action_embedding))
}

pub fn irl_reward(disc: &Discriminator, state_embedding: &[f64], action_embedding: &[f64]) -> Result<f64> {
    disc.reward(&joint(state_embedding, action_embedding))
}

pub fn train_discriminator(disc: &mut Discriminator, demo_batch: &[&[f64]], policy_batch: &[&[f64]]) -> Result<f64> {
    disc.train_step(demo_batch, policy_batch)
}
