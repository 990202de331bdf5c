use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::catalog::{dot, Item, UserProfile};
use crate::error::{Error, Result};
use crate::neural::sigmoid;
use crate::seed::{self, stream};

pub const REWARD_MIN: f64 = 1.0;
pub const REWARD_MAX: f64 = 5.0;

/// Ground-truth rating model: `1 + 4·sigmoid(<preference, embedding> / temperature)`
/// plus uniform noise in `[-noise, noise]`, clamped to `[1, 5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardModel {
    pub temperature: f64,
    pub noise: f64,
}

impl Default for RewardModel {
    fn default() -> Self {
        RewardModel {
            temperature: 0.25,
            noise: 0.1,
        }
    }
}

impl RewardModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("env.reward_temperature", "must be positive"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("env.reward_noise", "must be non-negative"));
        }
        Ok(())
    }

    /// Noise-free expected rating.
    pub fn mean(&self, preference: &[f64], embedding: &[f64]) -> f64 {
        let z = dot(preference, embedding) / self.temperature;
        clamp_reward(REWARD_MIN + (REWARD_MAX - REWARD_MIN) * sigmoid(z))
    }

    pub fn sample(&self, preference: &[f64], embedding: &[f64], noise_seed: u64) -> f64 {
        let mut rating = self.mean(preference, embedding);
        if self.noise > 0.0 {
            let mut rng = seed::derived_rng(noise_seed, stream::REWARD_NOISE, 0);
            rating += self.noise * rng.gen_range(-1.0..=1.0);
        }
        clamp_reward(rating)
    }
}

pub fn clamp_reward(r: f64) -> f64 {
    if r.is_nan() {
        REWARD_MIN
    } else {
        r.clamp(REWARD_MIN, REWARD_MAX)
    }
}

/// Rating of `item` by `user` under the default [`RewardModel`].
pub fn true_reward(user: &UserProfile, item: &Item, noise_seed: u64) -> f64 {
    RewardModel::default().sample(&user.preference, &item.embedding, noise_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(embedding: Vec<f64>) -> Item {
        Item {
            id: 0,
            embedding,
            category: 0,
        }
    }

    #[test]
    fn orthogonal_preference_without_noise_is_midpoint() {
        let model = RewardModel {
            noise: 0.0,
            ..RewardModel::default()
        };
        assert_eq!(model.sample(&[0.0, 1.0], &[1.0, 0.0], 3), 3.0);
    }

    #[test]
    fn aligned_large_preference_saturates() {
        let model = RewardModel {
            noise: 0.0,
            ..RewardModel::default()
        };
        let r = model.sample(&[1e3, 0.0], &[1.0, 0.0], 3);
        assert!((5.0 - r) < 1e-9);
        let r = model.sample(&[-1e3, 0.0], &[1.0, 0.0], 3);
        assert!((r - 1.0) < 1e-9);
    }

    #[test]
    fn repeated_calls_are_identical_and_in_range() {
        let user = UserProfile {
            id: 0,
            preference: vec![0.6, 0.8],
            side_features: vec![],
        };
        let it = item(vec![0.6, 0.8]);
        for s in 0..200 {
            let a = true_reward(&user, &it, s);
            assert_eq!(a.to_bits(), true_reward(&user, &it, s).to_bits());
            assert!((1.0..=5.0).contains(&a));
        }
    }
}
