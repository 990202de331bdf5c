use serde::{Deserialize, Serialize};

use super::catalog::{Catalog, UserProfile};
use super::termination::TerminationRule;
use crate::error::{Error, Result};

/// Agent-visible session state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub encoding: Vec<f64>,
    /// Most recent item ids, oldest first; at most [`StateTracker::capacity`] long.
    pub history: Vec<usize>,
    /// Number of interactions so far.
    pub step_index: usize,
    /// Set once the session has ended; stepping a terminal state is an error.
    pub terminal: bool,
}

/// Fixed (non-trainable) sequential state encoder.
///
/// Encoding layout:
/// `[ decayed mean of the last history_len item embeddings (d_item)
///  | per-category counts over the termination window / max_same_category (n_categories)
///  | per-category flag: one more item of the category ends the session (n_categories)
///  | side features ]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTracker {
    pub history_len: usize,
    pub decay: f64,
    pub rule: TerminationRule,
    pub n_categories: usize,
    pub d_item: usize,
    pub side_dim: usize,
}

impl StateTracker {
    pub fn new(
        history_len: usize,
        decay: f64,
        rule: TerminationRule,
        catalog: &Catalog,
        side_dim: usize,
    ) -> Result<Self> {
        if history_len == 0 {
            return Err(Error::config("env.history_len", "must be positive"));
        }
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::config("env.decay", "must be in (0, 1]"));
        }
        rule.validate()?;
        Ok(StateTracker {
            history_len,
            decay,
            rule,
            n_categories: catalog.n_categories,
            d_item: catalog.d_item,
            side_dim,
        })
    }

    /// Ids retained in [`StateVector::history`]: enough for both the embedding
    /// average and the termination window.
    pub fn capacity(&self) -> usize {
        self.history_len.max(self.rule.window)
    }

    pub fn state_dim(&self) -> usize {
        self.d_item + 2 * self.n_categories + self.side_dim
    }

    pub fn encode(&self, history: &[usize], user: &UserProfile, catalog: &Catalog) -> Result<Vec<f64>> {
        if history.len() > self.capacity() {
            return Err(Error::usage(format!(
                "history of {} items exceeds tracker capacity {}",
                history.len(),
                self.capacity()
            )));
        }
        if user.side_features.len() != self.side_dim {
            return Err(Error::data(format!(
                "user {} has {} side features, tracker expects {}",
                user.id,
                user.side_features.len(),
                self.side_dim
            )));
        }
        let mut out = Vec::with_capacity(self.state_dim());

        let mut avg = vec![0.0; self.d_item];
        let mut total_weight = 0.0;
        let mut weight = 1.0;
        for &id in history.iter().rev().take(self.history_len) {
            let item = catalog.item(id)?;
            for (a, e) in avg.iter_mut().zip(&item.embedding) {
                *a += weight * e;
            }
            total_weight += weight;
            weight *= self.decay;
        }
        if total_weight > 0.0 {
            avg.iter_mut().for_each(|a| *a /= total_weight);
        }
        out.extend(avg);

        let start = history.len().saturating_sub(self.rule.window);
        let mut counts = vec![0.0; self.n_categories];
        for &id in &history[start..] {
            counts[catalog.category_of(id)?] += 1.0;
        }
        let m = self.rule.max_same_category as f64;
        out.extend(counts.iter().map(|c| c / m));
        out.extend(counts.iter().map(|c| if c + 1.0 >= m { 1.0 } else { 0.0 }));

        out.extend_from_slice(&user.side_features);
        Ok(out)
    }

    /// s_0: depends on the user's side features only.
    pub fn initial_state(&self, user: &UserProfile, catalog: &Catalog) -> Result<StateVector> {
        Ok(StateVector {
            encoding: self.encode(&[], user, catalog)?,
            history: Vec::new(),
            step_index: 0,
            terminal: false,
        })
    }

    /// Deterministic transition `s' = T(s, a)`.
    pub fn advance(
        &self,
        state: &StateVector,
        action: usize,
        user: &UserProfile,
        catalog: &Catalog,
    ) -> Result<StateVector> {
        catalog.item(action)?;
        let mut history = state.history.clone();
        history.push(action);
        if history.len() > self.capacity() {
            history.remove(0);
        }
        Ok(StateVector {
            encoding: self.encode(&history, user, catalog)?,
            history,
            step_index: state.step_index + 1,
            terminal: false,
        })
    }

    /// Categories of the retained history, oldest first.
    pub fn recent_categories(&self, state: &StateVector, catalog: &Catalog) -> Result<Vec<usize>> {
        state.history.iter().map(|&id| catalog.category_of(id)).collect()
    }
}
