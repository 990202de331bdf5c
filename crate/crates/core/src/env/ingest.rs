//! Ingestion of real interaction logs.
//!
//! Input is delimited text with a header row naming the columns
//! `user_id, item_id, rating, timestamp, category, title` (any order, comma or
//! tab separated, extra columns ignored). Raw ids and category labels are
//! remapped to dense indices in order of first appearance. Item embeddings are
//! signed feature hashes of the lowercased title tokens plus the category label,
//! normalized to unit length. Each user's interactions, ordered by timestamp,
//! form one session, split into chunks of at most `length_cap`.

use std::collections::HashMap;
use std::io::Read;

use serde::Deserialize;

use super::catalog::{l2_norm, normalize, Catalog, Item, UserProfile};
use super::reward::{REWARD_MAX, REWARD_MIN};
use super::tracker::StateTracker;
use super::Transition;
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct Row {
    user_id: String,
    item_id: String,
    rating: f64,
    timestamp: i64,
    category: String,
    #[serde(default)]
    title: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedSession {
    pub user: usize,
    /// `(item id, rating)` in timestamp order.
    pub interactions: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub catalog: Catalog,
    /// Preferences are rating-weighted means of consumed item embeddings; no side features.
    pub users: Vec<UserProfile>,
    pub sessions: Vec<IngestedSession>,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn hashed_embedding(title: &str, category: &str, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    let tokens = title
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .chain(std::iter::once(format!("category={category}")));
    for token in tokens {
        let h = fnv1a(token.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % d as u64) as usize] += sign;
    }
    if l2_norm(&v) == 0.0 {
        v[0] = 1.0;
    }
    normalize(&mut v);
    v
}

pub fn ingest<R: Read>(input: R, d_item: usize) -> Result<Ingested> {
    if d_item < 2 {
        return Err(Error::config("env.d_item", "must be at least 2"));
    }
    let mut buffered = Vec::new();
    let mut input = input;
    input.read_to_end(&mut buffered)?;
    let first_line = buffered.split(|b| *b == b'\n').next().unwrap_or(&[]);
    let delimiter = if first_line.contains(&b'\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(buffered.as_slice());

    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut category_index: HashMap<String, usize> = HashMap::new();
    let mut items = Vec::new();
    let mut item_ids = Vec::new();
    let mut user_ids = Vec::new();
    let mut events: Vec<Vec<(i64, usize, usize, f64)>> = Vec::new();

    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::data(format!("ingest row {}: {e}", line + 2)))?;
        if !row.rating.is_finite() {
            return Err(Error::data(format!("ingest row {}: non-finite rating", line + 2)));
        }
        let n_cat = category_index.len();
        let category = *category_index.entry(row.category.clone()).or_insert(n_cat);
        let item = match item_index.get(&row.item_id) {
            Some(&i) => i,
            None => {
                let id = items.len();
                items.push(Item {
                    id,
                    embedding: hashed_embedding(&row.title, &row.category, d_item),
                    category,
                });
                item_ids.push(row.item_id.clone());
                item_index.insert(row.item_id.clone(), id);
                id
            }
        };
        let user = match user_index.get(&row.user_id) {
            Some(&u) => u,
            None => {
                let id = user_ids.len();
                user_ids.push(row.user_id.clone());
                user_index.insert(row.user_id.clone(), id);
                events.push(Vec::new());
                id
            }
        };
        let rating = row.rating.clamp(REWARD_MIN, REWARD_MAX);
        events[user].push((row.timestamp, line, item, rating));
    }
    if items.is_empty() {
        return Err(Error::data("ingest input has no interactions"));
    }
    let catalog = Catalog::new(items, category_index.len())?;

    let mut users = Vec::with_capacity(events.len());
    let mut sessions = Vec::with_capacity(events.len());
    for (u, mut ev) in events.into_iter().enumerate() {
        ev.sort_by_key(|&(ts, line, _, _)| (ts, line));
        let mut preference = vec![0.0; d_item];
        for &(_, _, item, rating) in &ev {
            let w = rating - (REWARD_MIN + REWARD_MAX) / 2.0;
            for (p, e) in preference.iter_mut().zip(&catalog.items[item].embedding) {
                *p += w * e;
            }
        }
        normalize(&mut preference);
        users.push(UserProfile {
            id: u,
            preference,
            side_features: Vec::new(),
        });
        sessions.push(IngestedSession {
            user: u,
            interactions: ev.into_iter().map(|(_, _, item, rating)| (item, rating)).collect(),
        });
    }
    Ok(Ingested {
        catalog,
        users,
        sessions,
        user_ids,
        item_ids,
    })
}

impl Ingested {
    /// Replay sessions through `tracker` into logged transitions. Sessions are
    /// cut at `tracker.rule.length_cap`; the last transition of each chunk is `done`.
    pub fn to_log(&self, tracker: &StateTracker) -> Result<Vec<Transition>> {
        let mut log = Vec::new();
        for session in &self.sessions {
            let user = &self.users[session.user];
            for chunk in session.interactions.chunks(tracker.rule.length_cap) {
                let mut state = tracker.initial_state(user, &self.catalog)?;
                for (k, &(item, rating)) in chunk.iter().enumerate() {
                    let mut next = tracker.advance(&state, item, user, &self.catalog)?;
                    let done = k + 1 == chunk.len();
                    next.terminal = done;
                    log.push(Transition {
                        state: std::mem::replace(&mut state, next.clone()),
                        action: item,
                        reward: rating,
                        next_state: next,
                        done,
                    });
                }
            }
        }
        Ok(log)
    }
}
