use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Transition;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Env,
    Demo,
}

/// A stored transition with its joint `(state ⊕ item)` embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub transition: Transition,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub entry: &'a Entry,
    pub source: Source,
    /// `w̃` for demonstration samples, 1 for rollout samples.
    pub weight: f64,
}

/// Ring buffer of policy rollouts plus the weighted demonstration pool.
#[derive(Debug, Clone)]
pub struct ReplayBuffers {
    env: VecDeque<Entry>,
    env_capacity: usize,
    demo: Vec<Entry>,
    demo_weights: Vec<f64>,
    /// Cumulative sampling priorities; empty when every priority is zero.
    demo_cdf: Vec<f64>,
    warned_empty: bool,
}

impl ReplayBuffers {
    pub fn new(env_capacity: usize) -> Result<Self> {
        if env_capacity == 0 {
            return Err(Error::config("policy.buffer_capacity", "must be positive"));
        }
        Ok(ReplayBuffers {
            env: VecDeque::with_capacity(env_capacity.min(1 << 16)),
            env_capacity,
            demo: Vec::new(),
            demo_weights: Vec::new(),
            demo_cdf: Vec::new(),
            warned_empty: false,
        })
    }

    pub fn env_len(&self) -> usize {
        self.env.len()
    }

    pub fn demo_len(&self) -> usize {
        self.demo.len()
    }

    pub fn env_entries(&self) -> impl DoubleEndedIterator<Item = &Entry> + ExactSizeIterator {
        self.env.iter()
    }

    pub fn demo_entries(&self) -> &[Entry] {
        &self.demo
    }

    /// Oldest rollouts are evicted once the capacity is reached.
    pub fn push_env(&mut self, entry: Entry) {
        if self.env.len() == self.env_capacity {
            self.env.pop_front();
        }
        self.env.push_back(entry);
    }

    /// Replace the demonstration pool. `priorities` drive sampling, `weights` scale the losses.
    pub fn set_demos(&mut self, entries: Vec<Entry>, weights: Vec<f64>, priorities: &[f64]) -> Result<()> {
        if entries.len() != weights.len() {
            return Err(Error::usage("one weight per demonstration transition is required"));
        }
        self.demo = entries;
        self.demo_weights = weights;
        self.set_priorities(priorities)
    }

    pub fn set_weights(&mut self, weights: Vec<f64>, priorities: &[f64]) -> Result<()> {
        if weights.len() != self.demo.len() {
            return Err(Error::usage("one weight per demonstration transition is required"));
        }
        self.demo_weights = weights;
        self.set_priorities(priorities)
    }

    fn set_priorities(&mut self, priorities: &[f64]) -> Result<()> {
        if priorities.len() != self.demo.len() {
            return Err(Error::usage("one priority per demonstration transition is required"));
        }
        if priorities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::numeric("sampling priorities must be finite and non-negative"));
        }
        let mut total = 0.0;
        self.demo_cdf = priorities
            .iter()
            .map(|p| {
                total += p;
                total
            })
            .collect();
        if total == 0.0 {
            self.demo_cdf.clear();
        }
        Ok(())
    }

    fn demo_available(&self) -> bool {
        !self.demo_cdf.is_empty()
    }

    fn pick_demo(&self, rng: &mut seed::Rng) -> usize {
        let total = *self.demo_cdf.last().expect("checked by demo_available");
        let u = rng.gen::<f64>() * total;
        // First index whose cumulative priority exceeds u; zero-priority entries are never picked.
        self.demo_cdf.partition_point(|&c| c <= u).min(self.demo_cdf.len() - 1)
    }

    /// Each slot is a demonstration with probability `mix_ratio`, otherwise a
    /// uniform rollout. If one side is empty every slot comes from the other.
    pub fn sample(&mut self, batch_size: usize, mix_ratio: f64, rng: &mut seed::Rng) -> Result<Vec<Sample<'_>>> {
        if !(0.0..=1.0).contains(&mix_ratio) {
            return Err(Error::config("policy.mix_ratio", "must be in [0, 1]"));
        }
        let (has_env, has_demo) = (!self.env.is_empty(), self.demo_available());
        if !has_env && !has_demo {
            return Err(Error::usage("cannot sample from empty replay buffers"));
        }
        if (!has_env && mix_ratio < 1.0) || (!has_demo && mix_ratio > 0.0) {
            if !self.warned_empty {
                log::warn!(
                    "replay buffer {} is empty; sampling only from the other",
                    if has_env { "demo" } else { "env" }
                );
                self.warned_empty = true;
            }
        }
        let mut picks = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let demo = if !has_env {
                true
            } else if !has_demo {
                false
            } else {
                rng.gen::<f64>() < mix_ratio
            };
            if demo {
                picks.push((Source::Demo, self.pick_demo(rng)));
            } else {
                picks.push((Source::Env, rng.gen_range(0..self.env.len())));
            }
        }
        Ok(picks
            .into_iter()
            .map(|(source, i)| match source {
                Source::Demo => Sample {
                    entry: &self.demo[i],
                    source,
                    weight: self.demo_weights[i],
                },
                Source::Env => Sample {
                    entry: &self.env[i],
                    source,
                    weight: 1.0,
                },
            })
            .collect())
    }
}
