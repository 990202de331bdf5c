use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::catalog::{Catalog, UserProfile};
use super::reward::clamp_reward;
use super::termination::{TerminatedBy, TerminationRule};
use super::tracker::{StateTracker, StateVector};
use super::{Environment, Session, Transition};
use crate::error::{Error, Result};
use crate::neural::{adam_step, mse_loss_and_grads, Activation, Head, Net, OptState};
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldModelConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub holdout_fraction: f64,
}

impl Default for WorldModelConfig {
    fn default() -> Self {
        WorldModelConfig {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 40,
            holdout_fraction: 0.2,
        }
    }
}

impl WorldModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("env.world_model.hidden", "layer sizes must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("env.world_model.learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("env.world_model.batch_size", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::config("env.world_model.holdout_fraction", "must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    /// MSE over the training split after the last epoch.
    pub final_mse: f64,
    /// MSE over the held-out split; `None` when nothing was held out.
    pub holdout_mse: Option<f64>,
    pub epochs: usize,
    pub train_size: usize,
    pub holdout_size: usize,
}

/// Learned environment: reward regressor `r̂(s, a)` over
/// `[state encoding ⊕ item embedding]` and the fixed state tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub reward_net: Net,
    pub tracker: StateTracker,
    pub training_stats: TrainingStats,
}

pub fn reward_features(state: &[f64], item_embedding: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(state.len() + item_embedding.len());
    x.extend_from_slice(state);
    x.extend_from_slice(item_embedding);
    x
}

impl WorldModel {
    /// `r̂(s, a)`, clamped to `[1, 5]`.
    pub fn predict(&self, state: &StateVector, action: usize, catalog: &Catalog) -> Result<f64> {
        let item = catalog.item(action)?;
        let out = self.reward_net.forward(&reward_features(&state.encoding, &item.embedding))?;
        Ok(clamp_reward(out[0]))
    }
}

/// Fit `r̂` by minibatch Adam on squared error against logged rewards.
///
/// A seeded `holdout_fraction` of the log is held out for evaluation only.
pub fn fit_world_model(
    log: &[Transition],
    catalog: &Catalog,
    tracker: &StateTracker,
    config: &WorldModelConfig,
    seed: u64,
) -> Result<WorldModel> {
    config.validate()?;
    if log.is_empty() {
        return Err(Error::data("offline log is empty"));
    }
    let mut features = Vec::with_capacity(log.len());
    let mut targets = Vec::with_capacity(log.len());
    for (i, t) in log.iter().enumerate() {
        let item = catalog.item(t.action)?;
        let x = reward_features(&t.state.encoding, &item.embedding);
        if x.len() != tracker.state_dim() + catalog.d_item {
            return Err(Error::data(format!("transition {i} has state dim {}", t.state.encoding.len())));
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite feature {j} in transition {i}")));
        }
        if !t.reward.is_finite() {
            return Err(Error::data(format!("non-finite reward in transition {i}")));
        }
        features.push(x);
        targets.push(t.reward);
    }

    let mut rng = seed::derived_rng(seed, stream::WORLD_MODEL, 0);
    let mut order: Vec<usize> = (0..log.len()).collect();
    order.shuffle(&mut rng);
    let n_holdout = ((log.len() as f64) * config.holdout_fraction).floor() as usize;
    let n_holdout = n_holdout.min(log.len() - 1);
    let (holdout, train) = order.split_at(n_holdout);
    let mut train = train.to_vec();

    let mut dims = vec![features[0].len()];
    dims.extend(&config.hidden);
    dims.push(1);
    let mut net = Net::new(&dims, Activation::Tanh, Head::Linear, seed::derive(seed, stream::WORLD_MODEL, 1))?;
    let mean_target = train.iter().map(|&i| targets[i]).sum::<f64>() / train.len() as f64;
    let bias = net.output_bias_offset();
    net.params_mut()[bias] = mean_target;
    let mut opt = OptState::new(&net, config.learning_rate);

    for _ in 0..config.epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(config.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| features[i].as_slice()).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            let (_, grads) = mse_loss_and_grads(&net, &xs, &ys)?;
            adam_step(&mut net, &grads, &mut opt)?;
        }
    }

    let mse = |idx: &[usize]| -> Result<f64> {
        let mut total = 0.0;
        for &i in idx {
            let p = clamp_reward(net.forward(&features[i])?[0]);
            total += (p - targets[i]).powi(2);
        }
        Ok(total / idx.len() as f64)
    };
    let final_mse = mse(&train)?;
    let holdout_mse = if holdout.is_empty() { None } else { Some(mse(holdout)?) };
    if !final_mse.is_finite() {
        return Err(Error::numeric("world model training diverged"));
    }
    log::info!(
        "world model: train mse {final_mse:.4}, holdout mse {:?} after {} epochs",
        holdout_mse,
        config.epochs
    );
    Ok(WorldModel {
        reward_net: net,
        tracker: tracker.clone(),
        training_stats: TrainingStats {
            final_mse,
            holdout_mse,
            epochs: config.epochs,
            train_size: train.len(),
            holdout_size: holdout.len(),
        },
    })
}

/// One world-model interaction: `r̂(s, a)`, `s' = T̂(s, a)` and the termination decision under `rule`.
pub fn step(
    state: &StateVector,
    action: usize,
    model: &WorldModel,
    rule: &TerminationRule,
    user: &UserProfile,
    catalog: &Catalog,
) -> Result<(StateVector, f64, bool, Option<TerminatedBy>)> {
    if state.terminal {
        return Err(Error::usage("cannot step a terminal state"));
    }
    if rule.window > model.tracker.capacity() {
        return Err(Error::usage(format!(
            "termination window {} exceeds tracked history {}",
            rule.window,
            model.tracker.capacity()
        )));
    }
    let reward = model.predict(state, action, catalog)?;
    let mut next = model.tracker.advance(state, action, user, catalog)?;
    let recent = model.tracker.recent_categories(&next, catalog)?;
    let terminated_by = rule.check(&recent, next.step_index);
    next.terminal = terminated_by.is_some();
    Ok((next, reward, terminated_by.is_some(), terminated_by))
}

/// A [`WorldModel`] played as an environment.
#[derive(Debug, Clone)]
pub struct WorldModelEnv<'a> {
    pub model: &'a WorldModel,
    pub catalog: &'a Catalog,
    pub diversity_rule: bool,
}

impl<'a> WorldModelEnv<'a> {
    pub fn new(model: &'a WorldModel, catalog: &'a Catalog) -> Self {
        WorldModelEnv {
            model,
            catalog,
            diversity_rule: true,
        }
    }
}

impl Environment for WorldModelEnv<'_> {
    fn catalog(&self) -> &Catalog {
        self.catalog
    }

    fn tracker(&self) -> &StateTracker {
        &self.model.tracker
    }

    fn diversity_rule(&self) -> bool {
        self.diversity_rule
    }

    fn respond(&self, session: &mut Session, action: usize) -> Result<f64> {
        self.model.predict(&session.state, action, self.catalog)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::catalog::{build_catalog, CatalogSpec};
    use crate::env::reward::RewardModel;
    use crate::env::simulator::{generate_offline_log_until, EpsilonGreedy, Simulator};

    fn setup() -> (Simulator, Vec<UserProfile>) {
        let (catalog, population) = build_catalog(11, &CatalogSpec::default()).unwrap();
        let tracker = StateTracker::new(10, 0.9, TerminationRule::short_window(), &catalog, population.side_dim()).unwrap();
        let users = population.sample_users(12, 200, 0);
        (
            Simulator::new(catalog, tracker, RewardModel::default(), Simulator::DEFAULT_DRIFT).unwrap(),
            users,
        )
    }

    #[test]
    fn constant_rewards_are_learned() {
        let (sim, users) = setup();
        let mut log = generate_offline_log_until(&sim, &users, &mut EpsilonGreedy::default(), 400, 1).unwrap();
        log.iter_mut().for_each(|t| t.reward = 3.0);
        let config = WorldModelConfig {
            epochs: 5,
            ..WorldModelConfig::default()
        };
        let model = fit_world_model(&log, &sim.catalog, &sim.tracker, &config, 3).unwrap();
        for t in &log {
            assert!((model.predict(&t.state, t.action, &sim.catalog).unwrap() - 3.0).abs() < 0.05);
        }
    }

    #[test]
    fn fit_beats_constant_predictor() {
        let (sim, users) = setup();
        let log = generate_offline_log_until(&sim, &users, &mut EpsilonGreedy::default(), 2000, 2).unwrap();
        let config = WorldModelConfig {
            epochs: 15,
            holdout_fraction: 0.0,
            ..WorldModelConfig::default()
        };
        let model = fit_world_model(&log, &sim.catalog, &sim.tracker, &config, 3).unwrap();
        let mean = log.iter().map(|t| t.reward).sum::<f64>() / log.len() as f64;
        let variance = log.iter().map(|t| (t.reward - mean).powi(2)).sum::<f64>() / log.len() as f64;
        assert!(model.training_stats.final_mse <= variance);
    }

    #[test]
    fn non_finite_features_are_data_errors() {
        let (sim, users) = setup();
        let mut log = generate_offline_log_until(&sim, &users, &mut EpsilonGreedy::default(), 50, 2).unwrap();
        log[7].state.encoding[0] = f64::NAN;
        let err = fit_world_model(&log, &sim.catalog, &sim.tracker, &WorldModelConfig::default(), 1).unwrap_err();
        assert!(matches!(&err, Error::Data(m) if m.contains("transition 7")));
        assert!(matches!(
            fit_world_model(&[], &sim.catalog, &sim.tracker, &WorldModelConfig::default(), 1),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn step_is_deterministic_and_clamped() {
        let (sim, users) = setup();
        let log = generate_offline_log_until(&sim, &users, &mut EpsilonGreedy::default(), 200, 2).unwrap();
        let config = WorldModelConfig {
            epochs: 2,
            ..WorldModelConfig::default()
        };
        let model = fit_world_model(&log, &sim.catalog, &sim.tracker, &config, 3).unwrap();
        let s0 = sim.tracker.initial_state(&users[0], &sim.catalog).unwrap();
        let rule = TerminationRule::short_window();
        let a = step(&s0, 4, &model, &rule, &users[0], &sim.catalog).unwrap();
        let b = step(&s0, 4, &model, &rule, &users[0], &sim.catalog).unwrap();
        assert_eq!(a, b);
        assert!((1.0..=5.0).contains(&a.1));
        let mut s = s0;
        for _ in 0..4 {
            s = step(&s, 4, &model, &rule, &users[0], &sim.catalog).unwrap().0;
        }
        assert!(s.terminal);
        assert!(matches!(step(&s, 1, &model, &rule, &users[0], &sim.catalog), Err(Error::Usage(_))));
    }
}
