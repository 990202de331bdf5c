use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::error::{Error, Result};

/// Rewards are summed exactly as integer multiples of `2^-52`.
const UNIT: f64 = (1u64 << 52) as f64;

pub fn reward_units(r: f64) -> Result<i128> {
    let scaled = r * UNIT;
    if !scaled.is_finite() || scaled.fract() != 0.0 || scaled.abs() >= 2f64.powi(100) {
        return Err(Error::data(format!("reward {r} is not a finite multiple of 2^-52")));
    }
    Ok(scaled as i128)
}

/// One evaluated session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    pub user: usize,
    pub length: usize,
    /// Exact reward sum in units of `2^-52`.
    pub sum_units: i128,
    pub rewards: Vec<f64>,
}

impl EpisodeRow {
    pub fn new(episode: usize, user: usize, rewards: Vec<f64>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::data(format!("episode {episode} has no interactions")));
        }
        let mut sum_units = 0i128;
        for r in &rewards {
            sum_units += reward_units(*r)?;
        }
        Ok(EpisodeRow {
            episode,
            user,
            length: rewards.len(),
            sum_units,
            rewards,
        })
    }

    pub fn from_trajectory(episode: usize, trajectory: &Trajectory) -> Result<Self> {
        Self::new(episode, trajectory.user.id, trajectory.rewards())
    }

    pub fn exact_sum(&self) -> Ratio<i128> {
        Ratio::new(self.sum_units, 1i128 << 52)
    }

    /// Exact per-step mean, so `exact_mean() * length == exact_sum()` holds with equality.
    pub fn exact_mean(&self) -> Ratio<i128> {
        Ratio::new(self.sum_units, (1i128 << 52) * self.length as i128)
    }

    pub fn sum(&self) -> f64 {
        ratio_to_f64(self.exact_sum())
    }

    pub fn mean(&self) -> f64 {
        ratio_to_f64(self.exact_mean())
    }
}

fn ratio_to_f64(r: Ratio<i128>) -> f64 {
    // Numerators stay below 2^100, so both halves convert with one rounding each.
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }
}

/// Len, R_each and R_traj over a set of sessions, with the raw table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Session length.
    pub len: Stat,
    /// Per-session mean single-step reward.
    pub r_each: Stat,
    /// Per-session cumulative reward.
    pub r_traj: Stat,
    pub episodes: Vec<EpisodeRow>,
}

impl Metrics {
    pub fn from_rows(episodes: Vec<EpisodeRow>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::usage("metrics need at least one episode"));
        }
        let lens: Vec<f64> = episodes.iter().map(|e| e.length as f64).collect();
        let each: Vec<f64> = episodes.iter().map(EpisodeRow::mean).collect();
        let traj: Vec<f64> = episodes.iter().map(EpisodeRow::sum).collect();
        Ok(Metrics {
            len: Stat::of(&lens),
            r_each: Stat::of(&each),
            r_traj: Stat::of(&traj),
            episodes,
        })
    }

    pub fn from_trajectories(trajectories: &[Trajectory]) -> Result<Self> {
        let rows = trajectories
            .iter()
            .enumerate()
            .map(|(i, t)| EpisodeRow::from_trajectory(i, t))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }
}
