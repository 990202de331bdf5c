use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::env::catalog::cosine;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry<P> {
    pub key: Vec<f64>,
    pub payload: P,
    pub value: Option<f64>,
}

/// Similarity-gated memory with FIFO eviction.
///
/// Retrieval min-max normalizes the raw cosine similarities of all stored keys
/// to the query and returns entries whose normalized score exceeds the
/// threshold. When every raw score is equal (including a single entry) all
/// normalized scores are 1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryStore<P> {
    entries: VecDeque<MemoryEntry<P>>,
    threshold: f64,
    capacity: usize,
}

impl<P> MemoryStore<P> {
    pub const DEFAULT_CAPACITY: usize = 512;
    pub const DEFAULT_THRESHOLD: f64 = 0.7;

    pub fn new(threshold: f64, capacity: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::config("expert.threshold", "must be in [0, 1]"));
        }
        if capacity == 0 {
            return Err(Error::config("expert.memory_capacity", "must be positive"));
        }
        Ok(MemoryStore {
            entries: VecDeque::new(),
            threshold,
            capacity,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry<P>> {
        self.entries.iter()
    }

    pub fn key_dim(&self) -> Option<usize> {
        self.entries.front().map(|e| e.key.len())
    }

    pub fn insert(&mut self, key: Vec<f64>, payload: P, value: Option<f64>) -> Result<()> {
        if let Some(d) = self.key_dim() {
            if key.len() != d {
                return Err(Error::usage(format!("memory key has dimension {}, store uses {d}", key.len())));
            }
        }
        if key.iter().any(|k| !k.is_finite()) {
            return Err(Error::data("non-finite memory key"));
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(MemoryEntry { key, payload, value });
        Ok(())
    }

    /// Min-max normalized cosine similarity of every entry to `query`, in storage order.
    pub fn normalized_scores(&self, query: &[f64]) -> Result<Vec<f64>> {
        if let Some(d) = self.key_dim() {
            if query.len() != d {
                return Err(Error::usage(format!("query has dimension {}, store uses {d}", query.len())));
            }
        }
        let raw: Vec<f64> = self.entries.iter().map(|e| cosine(&e.key, query)).collect();
        let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        Ok(raw
            .into_iter()
            .map(|c| if span > 0.0 { (c - min) / span } else { 1.0 })
            .collect())
    }

    pub fn retrieve(&self, query: &[f64]) -> Result<Vec<&MemoryEntry<P>>> {
        let scores = self.normalized_scores(query)?;
        Ok(self
            .entries
            .iter()
            .zip(scores)
            .filter(|(_, s)| *s > self.threshold)
            .map(|(e, _)| e)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_store_retrieves_nothing() {
        let store: MemoryStore<()> = MemoryStore::new(0.5, 4).unwrap();
        assert!(store.retrieve(&[1.0, 0.0]).unwrap().is_empty());
    }

    #[test]
    fn singleton_normalizes_to_one() {
        let mut store = MemoryStore::new(0.99, 4).unwrap();
        store.insert(vec![0.0, 1.0], "a", None).unwrap();
        assert_eq!(store.normalized_scores(&[1.0, 0.0]).unwrap(), vec![1.0]);
        assert_eq!(store.retrieve(&[1.0, 0.0]).unwrap().len(), 1);
        let strict = MemoryStore {
            threshold: 1.0,
            ..store
        };
        assert!(strict.retrieve(&[1.0, 0.0]).unwrap().is_empty());
    }

    #[test]
    fn min_max_endpoints() {
        let mut store = MemoryStore::new(0.5, 4).unwrap();
        let q = [1.0, 0.0];
        store.insert(vec![0.2, (1.0f64 - 0.04).sqrt()], 1, None).unwrap();
        store.insert(vec![0.9, (1.0f64 - 0.81).sqrt()], 2, None).unwrap();
        let scores = store.normalized_scores(&q).unwrap();
        assert!(scores[0].abs() < 1e-12 && (scores[1] - 1.0).abs() < 1e-12);
        let hits = store.retrieve(&q).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].payload, 2);
    }

    #[test]
    fn fifo_eviction_and_dimension_check() {
        let mut store = MemoryStore::new(0.0, 2).unwrap();
        for i in 0..3 {
            store.insert(vec![1.0, i as f64], i, Some(i as f64)).unwrap();
        }
        assert_eq!(store.len(), 2);
        assert_eq!(store.entries().next().unwrap().payload, 1);
        assert!(matches!(store.insert(vec![1.0], 9, None), Err(Error::Usage(_))));
        assert!(matches!(store.retrieve(&[1.0]), Err(Error::Usage(_))));
        assert!(MemoryStore::<()>::new(1.5, 2).is_err());
    }

    proptest! {
        #[test]
        fn raising_threshold_never_enlarges_result(
            keys in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..20),
            query in prop::collection::vec(-1.0f64..1.0, 3),
            lo in 0.0f64..1.0,
            hi in 0.0f64..1.0,
        ) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let mut a = MemoryStore::new(lo, 64).unwrap();
            let mut b = MemoryStore::new(hi, 64).unwrap();
            for (i, k) in keys.iter().enumerate() {
                a.insert(k.clone(), i, None).unwrap();
                b.insert(k.clone(), i, None).unwrap();
            }
            let wide: Vec<usize> = a.retrieve(&query).unwrap().iter().map(|e| e.payload).collect();
            let narrow: Vec<usize> = b.retrieve(&query).unwrap().iter().map(|e| e.payload).collect();
            prop_assert!(narrow.iter().all(|p| wide.contains(p)));
        }
    }
}
