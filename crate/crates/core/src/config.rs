//! Run configuration: one TOML document with a section per pipeline stage.
//!
//! Every field has a default, so an empty document is a valid configuration.
//! Unknown keys, type mismatches and range violations are reported as
//! [`Error::Config`] naming the dotted key.

use serde::{Deserialize, Serialize};

use crate::env::world_model::WorldModelConfig;
use crate::env::{CatalogSpec, RewardModel, Simulator, TerminationRule};
use crate::error::{Error, Result};
use crate::expert::ExpertConfig;
use crate::irl::IrlConfig;
use crate::policy::{PolicyConfig, TrainSettings};
use crate::weighting::WeightConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub n_items: usize,
    pub n_categories: usize,
    pub d_item: usize,
    pub n_segments: usize,
    pub category_spread: f64,
    pub preference_spread: f64,
    pub reward_temperature: f64,
    pub reward_noise: f64,
    /// Per-step pull of the user's preference toward the recommended item.
    pub drift: f64,
    /// Diversity window `N`.
    pub window: usize,
    /// Same-category count `M` that ends a session.
    pub max_same_category: usize,
    pub length_cap: usize,
    /// Items averaged into the history part of the state encoding.
    pub history_len: usize,
    pub decay: f64,
    /// Apply the diversity rule inside the world model as well as in evaluation.
    pub diversity_in_training: bool,
    pub n_train_users: usize,
    /// The offline log grows episode by episode until it holds this many transitions.
    pub offline_transitions: usize,
    /// Exploration rate of the behavior policy that generates the offline log.
    pub behavior_epsilon: f64,
    pub world_model: WorldModelConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        let spec = CatalogSpec::default();
        let rule = TerminationRule::short_window();
        let reward = RewardModel::default();
        EnvConfig {
            n_items: spec.n_items,
            n_categories: spec.n_categories,
            d_item: spec.d_item,
            n_segments: spec.n_segments,
            category_spread: spec.category_spread,
            preference_spread: spec.preference_spread,
            reward_temperature: reward.temperature,
            reward_noise: reward.noise,
            drift: Simulator::DEFAULT_DRIFT,
            window: rule.window,
            max_same_category: rule.max_same_category,
            length_cap: rule.length_cap,
            history_len: 10,
            decay: 0.9,
            diversity_in_training: true,
            n_train_users: 500,
            offline_transitions: 5000,
            behavior_epsilon: 0.5,
            world_model: WorldModelConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn catalog_spec(&self) -> CatalogSpec {
        CatalogSpec {
            n_items: self.n_items,
            n_categories: self.n_categories,
            d_item: self.d_item,
            n_segments: self.n_segments,
            category_spread: self.category_spread,
            preference_spread: self.preference_spread,
        }
    }

    pub fn reward_model(&self) -> RewardModel {
        RewardModel {
            temperature: self.reward_temperature,
            noise: self.reward_noise,
        }
    }

    pub fn rule(&self) -> TerminationRule {
        TerminationRule {
            window: self.window,
            max_same_category: self.max_same_category,
            length_cap: self.length_cap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.catalog_spec().validate()?;
        self.reward_model().validate()?;
        self.rule().validate()?;
        if !(0.0..=1.0).contains(&self.drift) {
            return Err(Error::config("env.drift", "must be in [0, 1]"));
        }
        if self.history_len == 0 {
            return Err(Error::config("env.history_len", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.decay) || self.decay == 0.0 {
            return Err(Error::config("env.decay", "must be in (0, 1]"));
        }
        if self.n_train_users == 0 {
            return Err(Error::config("env.n_train_users", "must be positive"));
        }
        if self.offline_transitions == 0 {
            return Err(Error::config("env.offline_transitions", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.behavior_epsilon) {
            return Err(Error::config("env.behavior_epsilon", "must be in [0, 1]"));
        }
        self.world_model.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Sessions per evaluation, each with a fresh held-out user.
    pub n_episodes: usize,
    /// Argmax action selection.
    pub greedy: bool,
    /// Seeds for multi-seed commands (`ablate`, `sweep`).
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_episodes: 100,
            greedy: true,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_episodes == 0 {
            return Err(Error::config("eval.n_episodes", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("eval.seeds", "must list at least one seed"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,
    pub env: EnvConfig,
    pub expert: ExpertConfig,
    pub irl: IrlConfig,
    pub weighting: WeightConfig,
    pub policy: PolicyConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: "runs/default".to_string(),
            env: EnvConfig::default(),
            expert: ExpertConfig::default(),
            irl: IrlConfig::default(),
            weighting: WeightConfig::default(),
            policy: PolicyConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn deserialize_value(value: toml::Value) -> Result<RunConfig> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let key = e.path().to_string();
        Error::config(if key == "." { String::new() } else { key }, e.inner().to_string())
    })
}

/// Parse an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "malformed override key"));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{part}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parse a document and apply `key=value` overrides on top of it.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("", e.to_string()))?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o.as_str(), "override must look like key=value"))?;
            set_dotted(&mut table, key.trim(), parse_value(raw.trim()))?;
        }
        let config = deserialize_value(toml::Value::Table(table))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.expert.validate()?;
        self.irl.validate()?;
        self.weighting.validate()?;
        self.policy.validate()?;
        self.eval.validate()
    }

    /// The effective configuration with every default spelled out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("", e.to_string()))
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            policy: self.policy.clone(),
            weighting: self.weighting.clone(),
            irl: self.irl.clone(),
            uniform_weights: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(RunConfig::parse("", &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::parse("", &["weighting.beta=10.0".into(), "seed=7".into()]).unwrap();
        assert_eq!(c.weighting.beta, 10.0);
        assert_eq!(c.seed, 7);
        let c = RunConfig::parse("[irl]\nreward_source = \"mix\"\n", &["output_dir=out/x".into()]).unwrap();
        assert_eq!(c.irl.reward_source, crate::irl::RewardSource::Mix);
        assert_eq!(c.output_dir, "out/x");
    }

    #[test]
    fn range_violation_names_key() {
        let e = RunConfig::parse("[weighting]\nbeta = -1\n", &[]).unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "weighting.beta"), "{e}");
    }

    #[test]
    fn unknown_and_mistyped_keys_name_the_key() {
        let e = RunConfig::parse("[policy]\nlambda = 1.0\n", &[]).unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key.starts_with("policy")), "{e}");
        let e = RunConfig::parse("[env]\nwindow = \"wide\"\n", &[]).unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "env.window"), "{e}");
    }

    #[test]
    fn effective_config_round_trips() {
        let c = RunConfig::parse("", &["policy.rounds=3".into()]).unwrap();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&text, &[]).unwrap(), c);
    }
}
