//! Per-transition demonstration weights.
//!
//! `w_env = exp(A/β)` from the demonstration advantage
//! `A = r̂(s,a) + γ·V_demo(s') − V_demo(s)`, `w_irl = (1/D − 1)^γ_irl` from the
//! discriminator, fused as `w = w_env^α · w_irl^(1−α)`, then divided by the
//! mean over the demonstration set and clipped. Fusion and normalization run
//! in the log domain so large advantages cannot overflow.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::env::catalog::Catalog;
use crate::env::world_model::WorldModel;
use crate::error::{Error, Result};
use crate::expert::DemoSet;
use crate::irl::{clamp_prob, Discriminator};
use crate::neural::{adam_step, mse_loss_and_grads, Activation, Head, Net, OptState};
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValueFitConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for ValueFitConfig {
    fn default() -> Self {
        ValueFitConfig {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    /// Temperature of the environment weight.
    pub beta: f64,
    /// Confidence exponent of the discriminator weight.
    pub gamma_irl: f64,
    /// Fusion trade-off: 1 keeps only `w_env`, 0 only `w_irl`.
    pub alpha: f64,
    pub gamma_discount: f64,
    pub clip_range: (f64, f64),
    pub value_fit: ValueFitConfig,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            beta: 1.0,
            gamma_irl: 1.0,
            alpha: 0.5,
            gamma_discount: 0.9,
            clip_range: (0.1, 10.0),
            value_fit: ValueFitConfig::default(),
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("weighting.beta", "must be positive"));
        }
        if !(self.gamma_irl >= 0.0 && self.gamma_irl.is_finite()) {
            return Err(Error::config("weighting.gamma_irl", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("weighting.alpha", "must be in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.gamma_discount) {
            return Err(Error::config("weighting.gamma_discount", "must be in [0, 1)"));
        }
        let (lo, hi) = self.clip_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::config("weighting.clip_range", "must satisfy 0 < low < high"));
        }
        let v = &self.value_fit;
        if v.hidden.iter().any(|&h| h == 0) || v.batch_size == 0 || !(v.learning_rate > 0.0) {
            return Err(Error::config("weighting.value_fit", "hidden sizes, batch size and learning rate must be positive"));
        }
        Ok(())
    }
}

/// Discounted returns `G_t = r_t + γ·G_{t+1}`, computed backward from `G_T = r_T`.
pub fn returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::usage("returns of an empty trajectory"));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        g = r + gamma * g;
        *o = g;
    }
    Ok(out)
}

/// `r̂ + γ·V(s') − V(s)`; terminal transitions drop the bootstrap term.
pub fn advantage_demo(reward_hat: f64, value: f64, next_value: f64, gamma: f64, done: bool) -> Result<f64> {
    if !(reward_hat.is_finite() && value.is_finite() && (done || next_value.is_finite())) {
        return Err(Error::numeric("advantage inputs must be finite"));
    }
    let bootstrap = if done { 0.0 } else { gamma * next_value };
    Ok(reward_hat + bootstrap - value)
}

pub fn env_weight(advantage: f64, beta: f64) -> f64 {
    (advantage / beta).exp()
}

pub fn log_irl_weight(disc_prob: f64, gamma_irl: f64) -> f64 {
    if gamma_irl == 0.0 {
        return 0.0;
    }
    let d = clamp_prob(disc_prob);
    gamma_irl * ((1.0 - d) / d).ln()
}

/// `(1/D − 1)^γ_irl` with `D` clamped.
pub fn irl_weight(disc_prob: f64, gamma_irl: f64) -> f64 {
    if gamma_irl == 0.0 {
        return 1.0;
    }
    let d = clamp_prob(disc_prob);
    ((1.0 - d) / d).powf(gamma_irl)
}

/// `w_env^α · w_irl^(1−α)`; the endpoints return the corresponding input exactly.
pub fn fuse_weights(w_env: f64, w_irl: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        w_env
    } else if alpha == 0.0 {
        w_irl
    } else {
        w_env.powf(alpha) * w_irl.powf(1.0 - alpha)
    }
}

/// Divide by the mean, then clamp into `clip_range`. Order is preserved.
pub fn normalize_clip(weights: &[f64], clip_range: (f64, f64)) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::usage("cannot normalize an empty weight set"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::numeric("weights must be finite and non-negative"));
    }
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    if mean <= 0.0 {
        return Err(Error::numeric("weights have zero mean"));
    }
    Ok(weights.iter().map(|w| (w / mean).clamp(clip_range.0, clip_range.1)).collect())
}

/// [`normalize_clip`] for weights given by their logarithms.
pub fn normalize_clip_log(log_weights: &[f64], clip_range: (f64, f64)) -> Result<Vec<f64>> {
    if log_weights.is_empty() {
        return Err(Error::usage("cannot normalize an empty weight set"));
    }
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::numeric("log-weights must not be NaN or +inf"));
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::numeric("weights have zero mean"));
    }
    let log_mean = max + (log_weights.iter().map(|w| (w - max).exp()).sum::<f64>() / log_weights.len() as f64).ln();
    Ok(log_weights
        .iter()
        .map(|w| (w - log_mean).exp().clamp(clip_range.0, clip_range.1))
        .collect())
}

/// Regress `V_demo(s) ≈ G_t` over every demonstration state. Returns the net and its final training MSE.
pub fn fit_value_demo(demos: &DemoSet, gamma: f64, config: &ValueFitConfig, seed: u64) -> Result<(Net, f64)> {
    if demos.is_empty() {
        return Err(Error::usage("cannot fit a value function on an empty demo set"));
    }
    let mut inputs: Vec<&[f64]> = Vec::with_capacity(demos.len());
    let mut targets = Vec::with_capacity(demos.len());
    for traj in &demos.trajectories {
        let g = returns(&traj.rewards(), gamma)?;
        for (t, gt) in traj.transitions.iter().zip(g) {
            inputs.push(&t.state.encoding);
            targets.push(gt);
        }
    }
    let mut dims = vec![inputs[0].len()];
    dims.extend(&config.hidden);
    dims.push(1);
    let mut net = Net::new(&dims, Activation::Tanh, Head::Linear, seed::derive(seed, stream::VALUE_DEMO, 0))?;
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let bias = net.output_bias_offset();
    net.params_mut()[bias] = mean;
    let mut opt = OptState::new(&net, config.learning_rate);
    let mut rng = seed::derived_rng(seed, stream::VALUE_DEMO, 1);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| inputs[i]).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            let (_, grads) = mse_loss_and_grads(&net, &xs, &ys)?;
            adam_step(&mut net, &grads, &mut opt)?;
        }
    }
    let mut mse = 0.0;
    for (x, y) in inputs.iter().zip(&targets) {
        mse += (net.forward(x)?[0] - y).powi(2);
    }
    mse /= inputs.len() as f64;
    if !mse.is_finite() {
        return Err(Error::numeric("demonstration value fit diverged"));
    }
    Ok((net, mse))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub reward_hat: f64,
    pub advantage: f64,
    pub w_env: f64,
    pub w_irl: f64,
    pub fused: f64,
    pub normalized: f64,
}

/// A demonstration set with one [`WeightRow`] per transition, in transition order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDemoSet {
    pub base: DemoSet,
    pub rows: Vec<WeightRow>,
    /// When set, every normalized weight is 1 regardless of the computed columns.
    pub uniform: bool,
}

impl WeightedDemoSet {
    /// Advantages from the world model and `V_demo`; weights start from a
    /// discriminator-free `w_irl = 1` until [`WeightedDemoSet::reweigh`] is called.
    pub fn new(
        base: DemoSet,
        model: &WorldModel,
        catalog: &Catalog,
        value_net: &Net,
        config: &WeightConfig,
        uniform: bool,
    ) -> Result<Self> {
        config.validate()?;
        base.validate()?;
        if base.is_empty() {
            return Err(Error::usage("cannot weigh an empty demo set"));
        }
        let mut rows = Vec::with_capacity(base.len());
        for traj in &base.trajectories {
            for t in &traj.transitions {
                let reward_hat = model.predict(&t.state, t.action, catalog)?;
                let value = value_net.forward(&t.state.encoding)?[0];
                let next_value = if t.done { 0.0 } else { value_net.forward(&t.next_state.encoding)?[0] };
                let advantage = advantage_demo(reward_hat, value, next_value, config.gamma_discount, t.done)?;
                rows.push(WeightRow {
                    reward_hat,
                    advantage,
                    w_env: env_weight(advantage, config.beta),
                    w_irl: 1.0,
                    fused: 1.0,
                    normalized: 1.0,
                });
            }
        }
        let mut set = WeightedDemoSet { base, rows, uniform };
        set.apply(config, &vec![0.0; set.rows.len()])?;
        Ok(set)
    }

    /// Recompute `w_irl`, fused and normalized weights from the current discriminator.
    pub fn reweigh(&mut self, disc: &Discriminator, config: &WeightConfig) -> Result<()> {
        let mut log_irl = Vec::with_capacity(self.rows.len());
        for x in &self.base.embeddings {
            log_irl.push(log_irl_weight(disc.prob(x)?, config.gamma_irl));
        }
        self.apply(config, &log_irl)
    }

    fn apply(&mut self, config: &WeightConfig, log_irl: &[f64]) -> Result<()> {
        let alpha = config.alpha;
        let log_fused: Vec<f64> = self
            .rows
            .iter()
            .zip(log_irl)
            .map(|(row, li)| {
                let le = row.advantage / config.beta;
                if alpha == 1.0 {
                    le
                } else if alpha == 0.0 {
                    *li
                } else {
                    alpha * le + (1.0 - alpha) * li
                }
            })
            .collect();
        let normalized = if self.uniform {
            vec![1.0; self.rows.len()]
        } else {
            normalize_clip_log(&log_fused, config.clip_range)?
        };
        for ((row, li), (lf, n)) in self.rows.iter_mut().zip(log_irl).zip(log_fused.iter().zip(normalized)) {
            row.w_irl = li.exp();
            row.fused = lf.exp();
            row.normalized = n;
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.normalized).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "trajectory,step,action,reward,reward_hat,advantage,w_env,w_irl,fused,normalized")?;
        let mut k = 0;
        for (ti, traj) in self.base.trajectories.iter().enumerate() {
            for (si, t) in traj.transitions.iter().enumerate() {
                let r = &self.rows[k];
                writeln!(
                    out,
                    "{ti},{si},{},{},{},{},{},{},{},{}",
                    t.action, t.reward, r.reward_hat, r.advantage, r.w_env, r.w_irl, r.fused, r.normalized
                )?;
                k += 1;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn returns_examples() {
        assert_eq!(returns(&[5.0], 0.7).unwrap(), vec![5.0]);
        let g = returns(&[1.0, 1.0, 1.0], 0.9).unwrap();
        for (a, b) in g.iter().zip([2.71, 1.9, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(returns(&[2.0, 4.0, 3.0], 0.0).unwrap(), vec![2.0, 4.0, 3.0]);
        assert!(returns(&[], 0.9).is_err());
    }

    #[test]
    fn advantage_examples() {
        assert!((advantage_demo(3.0, 12.0, 10.0, 0.9, false).unwrap()).abs() < 1e-12);
        assert_eq!(advantage_demo(5.0, 5.0, f64::NAN, 0.9, true).unwrap(), 0.0);
        assert_eq!(advantage_demo(4.2, 0.0, 0.0, 0.9, false).unwrap(), 4.2);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(env_weight(0.0, 1.0), 1.0);
        assert!((env_weight(2f64.ln(), 1.0) - 2.0).abs() < 1e-12);
        assert!((env_weight(2.0, 10.0) - 0.2f64.exp()).abs() < 1e-12);
        assert_eq!(irl_weight(0.5, 1.0), 1.0);
        assert_eq!(irl_weight(0.9, 0.0), 1.0);
        assert!((irl_weight(0.25, 2.0) - 9.0).abs() < 1e-9);
        assert_eq!(fuse_weights(2.0, 8.0, 1.0), 2.0);
        assert_eq!(fuse_weights(2.0, 8.0, 0.0), 8.0);
        assert!((fuse_weights(2.0, 8.0, 0.25) - 2f64.powf(0.25) * 8f64.powf(0.75)).abs() < 1e-12);
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_clip(&[3.0; 5], (0.1, 10.0)).unwrap(), vec![1.0; 5]);
        assert_eq!(normalize_clip(&[1.0, 3.0], (0.1, 10.0)).unwrap(), vec![0.5, 1.5]);
        let mut w = vec![1.0; 99];
        w.push(1e6);
        let n = normalize_clip(&w, (0.1, 10.0)).unwrap();
        assert_eq!(n[99], 10.0);
        assert!(n[..99].iter().all(|x| *x == 0.1));
        assert!(normalize_clip(&[], (0.1, 10.0)).is_err());
        assert!(normalize_clip(&[0.0, 0.0], (0.1, 10.0)).is_err());
    }

    #[test]
    fn log_domain_survives_huge_advantages() {
        let n = normalize_clip_log(&[1000.0, 0.0, -1000.0], (0.1, 10.0)).unwrap();
        assert!((n[0] - 3.0).abs() < 1e-12);
        assert_eq!(&n[1..], &[0.1, 0.1]);
    }

    #[test]
    fn config_validation_names_keys() {
        let bad = WeightConfig {
            beta: -1.0,
            ..WeightConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { key, .. }) if key == "weighting.beta"));
        let bad = WeightConfig {
            clip_range: (2.0, 1.0),
            ..WeightConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn log_and_linear_normalization_agree(ws in prop::collection::vec(1e-3f64..1e3, 1..50)) {
            let a = normalize_clip(&ws, (0.1, 10.0)).unwrap();
            let logs: Vec<f64> = ws.iter().map(|w| w.ln()).collect();
            let b = normalize_clip_log(&logs, (0.1, 10.0)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9 * x.max(1.0));
            }
        }

        #[test]
        fn scale_invariance(ws in prop::collection::vec(1e-3f64..1e3, 1..50), c in 1e-3f64..1e3) {
            let a = normalize_clip(&ws, (0.1, 10.0)).unwrap();
            let scaled: Vec<f64> = ws.iter().map(|w| w * c).collect();
            let b = normalize_clip(&scaled, (0.1, 10.0)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9 * x.max(1.0));
            }
        }

        #[test]
        fn order_preserved(ws in prop::collection::vec(0.0f64..1e3, 2..50)) {
            prop_assume!(ws.iter().sum::<f64>() > 0.0);
            let n = normalize_clip(&ws, (0.1, 10.0)).unwrap();
            for i in 0..ws.len() {
                for j in 0..ws.len() {
                    if ws[i] <= ws[j] {
                        prop_assert!(n[i] <= n[j]);
                    }
                }
            }
        }
    }
}
