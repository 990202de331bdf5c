//! Catalog and interaction-log files.
//!
//! Catalog file: header, one `meta` record, then `item` and `user` records.
//! Log file: header, then one [`Transition`] per line.
//! World model: a `reward` checkpoint plus `<prefix>.meta.json` with the tracker and fit statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::catalog::{Catalog, Item, UserProfile};
use super::tracker::StateTracker;
use super::world_model::{TrainingStats, WorldModel};
use super::Transition;
use crate::error::{Error, Result};
use crate::jsonl::{self, Header};
use crate::neural::{load_checkpoint, save_checkpoint};

pub fn catalog_header() -> Header {
    Header::new("demorec.catalog", 1)
}

pub fn log_header() -> Header {
    Header::new("demorec.log", 1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CatalogRecord {
    Meta { n_categories: usize, d_item: usize },
    Item(Item),
    User(UserProfile),
}

pub fn save_catalog(path: &Path, catalog: &Catalog, users: &[UserProfile]) -> Result<()> {
    let meta = std::iter::once(CatalogRecord::Meta {
        n_categories: catalog.n_categories,
        d_item: catalog.d_item,
    });
    let items = catalog.items.iter().cloned().map(CatalogRecord::Item);
    let users = users.iter().cloned().map(CatalogRecord::User);
    jsonl::write(path, &catalog_header(), meta.chain(items).chain(users))
}

pub fn load_catalog(path: &Path) -> Result<(Catalog, Vec<UserProfile>)> {
    let records: Vec<CatalogRecord> = jsonl::read(path, &catalog_header())?;
    let mut n_categories = None;
    let mut items = Vec::new();
    let mut users = Vec::new();
    for r in records {
        match r {
            CatalogRecord::Meta { n_categories: c, .. } => n_categories = Some(c),
            CatalogRecord::Item(item) => items.push(item),
            CatalogRecord::User(user) => users.push(user),
        }
    }
    let n_categories = n_categories.ok_or_else(|| Error::data(format!("{}: missing meta record", path.display())))?;
    let catalog = Catalog::new(items, n_categories)?;
    if let Some(first) = users.first() {
        let side = first.side_features.len();
        if let Some(u) = users.iter().find(|u| u.side_features.len() != side) {
            return Err(Error::data(format!("user {} has {} side features, expected {side}", u.id, u.side_features.len())));
        }
    }
    Ok((catalog, users))
}

pub fn save_log(path: &Path, log: &[Transition]) -> Result<()> {
    jsonl::write(path, &log_header(), log)
}

pub fn load_log(path: &Path) -> Result<Vec<Transition>> {
    jsonl::read(path, &log_header())
}

#[derive(Serialize, Deserialize)]
struct WorldModelMeta {
    tracker: StateTracker,
    training_stats: TrainingStats,
}

fn meta_path(prefix: &Path) -> std::path::PathBuf {
    let mut p = prefix.as_os_str().to_owned();
    p.push(".meta.json");
    p.into()
}

pub fn save_world_model(prefix: &Path, model: &WorldModel) -> Result<()> {
    save_checkpoint(prefix, &[("reward", &model.reward_net)])?;
    let meta = WorldModelMeta {
        tracker: model.tracker.clone(),
        training_stats: model.training_stats.clone(),
    };
    std::fs::write(meta_path(prefix), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_world_model(prefix: &Path) -> Result<WorldModel> {
    let reward_net = load_checkpoint(prefix)?.get("reward")?.clone();
    let meta: WorldModelMeta = serde_json::from_str(&std::fs::read_to_string(meta_path(prefix))?)?;
    Ok(WorldModel {
        reward_net,
        tracker: meta.tracker,
        training_stats: meta.training_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::catalog::build_synthetic_catalog;

    #[test]
    fn catalog_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (items, users) = build_synthetic_catalog(1, 30, 3, 4).unwrap();
        let catalog = Catalog::new(items, 3).unwrap();
        let path = dir.path().join("catalog.jsonl");
        save_catalog(&path, &catalog, &users).unwrap();
        let (c2, u2) = load_catalog(&path).unwrap();
        assert_eq!(c2, catalog);
        assert_eq!(u2, users);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        save_log(&path, &[]).unwrap();
        assert!(load_log(&path).unwrap().is_empty());
        assert!(matches!(load_catalog(&path), Err(Error::Data(_))));
    }
}
