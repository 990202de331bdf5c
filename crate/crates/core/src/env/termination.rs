use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    DiversityRule,
    LengthCap,
}

/// A session ends once `max_same_category` items of one category appear among
/// the most recent `window` interactions (the current one included), or when
/// it reaches `length_cap` interactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminationRule {
    pub window: usize,
    pub max_same_category: usize,
    pub length_cap: usize,
}

impl TerminationRule {
    pub const LENGTH_CAP: usize = 100;

    pub fn new(window: usize, max_same_category: usize, length_cap: usize) -> Result<Self> {
        let rule = TerminationRule {
            window,
            max_same_category,
            length_cap,
        };
        rule.validate()?;
        Ok(rule)
    }

    /// N = 15, M = 4.
    pub fn short_window() -> Self {
        TerminationRule {
            window: 15,
            max_same_category: 4,
            length_cap: Self::LENGTH_CAP,
        }
    }

    /// N = 50, M = 4.
    pub fn long_window() -> Self {
        TerminationRule {
            window: 50,
            max_same_category: 4,
            length_cap: Self::LENGTH_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::config("env.window", "must be positive"));
        }
        if self.max_same_category == 0 || self.max_same_category > self.window {
            return Err(Error::config(
                "env.max_same_category",
                "must be in 1..=window",
            ));
        }
        if self.length_cap == 0 {
            return Err(Error::config("env.length_cap", "must be positive"));
        }
        Ok(())
    }

    /// Decide termination after an interaction.
    ///
    /// `recent_categories` lists categories of past interactions, oldest first,
    /// ending with the interaction just made; `interactions` counts all
    /// interactions in the session so far. The diversity rule takes precedence
    /// when both conditions hold.
    pub fn check(&self, recent_categories: &[usize], interactions: usize) -> Option<TerminatedBy> {
        let start = recent_categories.len().saturating_sub(self.window);
        let window = &recent_categories[start..];
        if let Some(&last) = window.last() {
            // Earlier interactions never reached the limit, so only the newest
            // category can have crossed it.
            let count = window.iter().filter(|&&c| c == last).count();
            if count >= self.max_same_category {
                return Some(TerminatedBy::DiversityRule);
            }
        }
        if interactions >= self.length_cap {
            return Some(TerminatedBy::LengthCap);
        }
        None
    }

    /// Occurrences of each category within the window ending at the latest interaction.
    pub fn window_counts(&self, recent_categories: &[usize], n_categories: usize) -> Vec<usize> {
        let start = recent_categories.len().saturating_sub(self.window);
        let mut counts = vec![0; n_categories];
        for &c in &recent_categories[start..] {
            counts[c] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_same_category_within_window_terminates() {
        let rule = TerminationRule::short_window();
        let seq = [1, 2, 1, 3, 1, 4, 5];
        assert_eq!(rule.check(&seq, seq.len()), None);
        let seq = [1, 2, 1, 3, 1, 4, 5, 1];
        assert_eq!(rule.check(&seq, seq.len()), Some(TerminatedBy::DiversityRule));
    }

    #[test]
    fn occurrences_outside_window_do_not_count() {
        let rule = TerminationRule::short_window();
        let mut seq = vec![7];
        seq.extend((0..14).map(|i| i % 3));
        seq.extend([7, 7, 7]);
        // The first 7 sits 17 positions back, outside the 15-wide window.
        assert_eq!(rule.check(&seq, seq.len()), None);
    }

    #[test]
    fn length_cap_always_terminates() {
        let rule = TerminationRule::long_window();
        let seq: Vec<usize> = (0..100).map(|i| i % 20).collect();
        assert_eq!(rule.check(&seq[..99], 99), None);
        assert_eq!(rule.check(&seq, 100), Some(TerminatedBy::LengthCap));
    }

    #[test]
    fn invalid_rules_rejected() {
        assert!(TerminationRule::new(3, 4, 100).is_err());
        assert!(TerminationRule::new(5, 2, 0).is_err());
        assert!(TerminationRule::new(5, 5, 1).is_ok());
    }
}
