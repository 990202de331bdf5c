use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::memory::MemoryEntry;
use crate::env::catalog::{dot, normalize, Catalog, UserProfile};
use crate::env::termination::{TerminatedBy, TerminationRule};
use crate::env::tracker::StateVector;
use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Scripted,
    External,
}

/// Lesson drawn from one finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub episode: usize,
    pub text: String,
    /// Categories with the highest mean reward in the episode, best first.
    pub top_categories: Vec<usize>,
    /// Category whose repetition ended the episode, if the diversity rule did.
    pub over_recommended: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Guidance {
    pub text: String,
    /// Preferred categories, best first; never empty.
    pub categories: Vec<usize>,
}

/// Role prompts handed to the provider with every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Instructions {
    pub reflect: String,
    pub plan: String,
    pub act: String,
    pub critic: String,
}

impl Default for Instructions {
    fn default() -> Self {
        Instructions {
            reflect: "Summarize which categories earned the highest ratings in this session and which \
                      repeated category ended it. Answer with lines `top_categories: <ids>` and \
                      `over_recommended: <id or none>`."
                .into(),
            plan: "Given the user's profile, recent items and past reflections, list the categories to \
                   recommend next, best first. Never pick a category that would repeat too often in the \
                   recent window. Answer with a line `categories: <ids>`."
                .into(),
            act: "Choose the next item from the guided categories. Answer with a line `item: <id>`.".into(),
            critic: "Estimate the total future rating this session will still collect. Answer with a line \
                     `value: <number>`."
                .into(),
        }
    }
}

pub struct ReflectRequest<'a> {
    pub episode: usize,
    pub trajectory: &'a Trajectory,
    pub instructions: &'a str,
}

pub struct PlanRequest<'a> {
    pub state: &'a StateVector,
    pub user: &'a UserProfile,
    pub reflections: &'a [&'a Reflection],
    pub instructions: &'a str,
}

pub struct ActRequest<'a> {
    pub state: &'a StateVector,
    pub user: &'a UserProfile,
    pub guidance: &'a Guidance,
    /// Earlier `(state, indicator, reward)` memories similar to this state.
    pub recalled: &'a [&'a MemoryEntry<Vec<f64>>],
    pub instructions: &'a str,
    /// Seed for any randomness in this step's decision.
    pub step_seed: u64,
}

pub struct CriticRequest<'a> {
    pub state: &'a StateVector,
    pub user: &'a UserProfile,
    pub recalled_values: &'a [f64],
    pub instructions: &'a str,
}

/// Frozen text policy behind the reflector, planner, actor and critic roles.
pub trait Provider: Send {
    fn kind(&self) -> ProviderKind;

    fn reflect(&mut self, request: &ReflectRequest<'_>) -> Result<Reflection>;

    fn plan(&mut self, request: &PlanRequest<'_>) -> Result<Guidance>;

    /// Action indicator in item-embedding space.
    fn act(&mut self, request: &ActRequest<'_>) -> Result<Vec<f64>>;

    fn critic(&mut self, request: &CriticRequest<'_>) -> Result<f64>;
}

pub(crate) fn check_complete(trajectory: &Trajectory) -> Result<()> {
    match trajectory.transitions.last() {
        Some(t) if t.done => Ok(()),
        _ => Err(Error::usage("cannot reflect on an unfinished episode")),
    }
}

/// `3 · Σ_{j<H} γ^j` for the `H` interactions left before the length cap.
pub fn fallback_value(state: &StateVector, rule: &TerminationRule, gamma: f64) -> f64 {
    let horizon = rule.length_cap.saturating_sub(state.step_index);
    let mut value = 0.0;
    let mut discount = 1.0;
    for _ in 0..horizon {
        value += 3.0 * discount;
        discount *= gamma;
    }
    value
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScriptedConfig {
    /// Fraction of steps that recommend from the second-highest-affinity
    /// category, ignoring guidance and the diversity limit.
    pub error_rate: f64,
    /// Softmax temperature over item affinities when forming the indicator.
    pub sharpness: f64,
    /// Score penalty for categories flagged by retrieved reflections.
    pub demotion: f64,
    pub n_guided: usize,
}

impl Default for ScriptedConfig {
    fn default() -> Self {
        ScriptedConfig {
            error_rate: 0.1,
            sharpness: 0.05,
            demotion: 0.5,
            n_guided: 3,
        }
    }
}

impl ScriptedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.error_rate) {
            return Err(Error::config("expert.scripted.error_rate", "must be in [0, 1]"));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::config("expert.scripted.sharpness", "must be positive"));
        }
        if !(self.demotion >= 0.0 && self.demotion.is_finite()) {
            return Err(Error::config("expert.scripted.demotion", "must be non-negative"));
        }
        if self.n_guided == 0 {
            return Err(Error::config("expert.scripted.n_guided", "must be positive"));
        }
        Ok(())
    }
}

/// Deterministic heuristic expert.
///
/// It sees each user's preference through per-user noise whose scale is the
/// provider temperature, ranks categories by the best item affinity, avoids
/// categories one step from the diversity limit, and on a configurable
/// fraction of steps falls back to its second-favourite category regardless
/// of the limit.
#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    catalog: Arc<Catalog>,
    rule: TerminationRule,
    temperature: f64,
    gamma: f64,
    seed: u64,
    config: ScriptedConfig,
}

impl ScriptedProvider {
    pub fn new(
        catalog: Arc<Catalog>,
        rule: TerminationRule,
        temperature: f64,
        gamma: f64,
        seed: u64,
        config: ScriptedConfig,
    ) -> Result<Self> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::config("expert.temperature", "must be non-negative"));
        }
        config.validate()?;
        Ok(ScriptedProvider {
            catalog,
            rule,
            temperature,
            gamma,
            seed,
            config,
        })
    }

    /// The provider's noisy read of `user`'s preference; fixed per user.
    pub fn estimated_preference(&self, user: &UserProfile) -> Vec<f64> {
        let d = user.preference.len();
        let mut rng = seed::derived_rng(self.seed, stream::EXPERT, user.id as u64);
        let scale = self.temperature / (d as f64).sqrt();
        let mut p: Vec<f64> = user
            .preference
            .iter()
            .map(|x| x + scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        normalize(&mut p);
        p
    }

    /// Best item affinity per category; `-inf` for empty categories.
    pub fn category_affinity(&self, preference: &[f64]) -> Vec<f64> {
        let mut aff = vec![f64::NEG_INFINITY; self.catalog.n_categories];
        for item in &self.catalog.items {
            let a = dot(preference, &item.embedding);
            if a > aff[item.category] {
                aff[item.category] = a;
            }
        }
        aff
    }

    fn ranked(scores: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..scores.len()).filter(|&c| scores[c].is_finite()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order
    }

    fn window_counts(&self, state: &StateVector) -> Result<Vec<usize>> {
        let cats = state
            .history
            .iter()
            .map(|&id| self.catalog.category_of(id))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.rule.window_counts(&cats, self.catalog.n_categories))
    }

    fn indicator(&self, preference: &[f64], allowed: impl Fn(usize) -> bool) -> Vec<f64> {
        let items: Vec<_> = self.catalog.items.iter().filter(|i| allowed(i.category)).collect();
        let logits: Vec<f64> = items.iter().map(|i| dot(preference, &i.embedding) / self.config.sharpness).collect();
        let weights = crate::neural::softmax(&logits);
        let mut out = vec![0.0; self.catalog.d_item];
        for (item, w) in items.iter().zip(weights) {
            for (o, e) in out.iter_mut().zip(&item.embedding) {
                *o += w * e;
            }
        }
        out
    }
}

impl Provider for ScriptedProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Scripted
    }

    fn reflect(&mut self, request: &ReflectRequest<'_>) -> Result<Reflection> {
        let trajectory = request.trajectory;
        check_complete(trajectory)?;
        let c = self.catalog.n_categories;
        let mut sums = vec![0.0; c];
        let mut counts = vec![0usize; c];
        for t in &trajectory.transitions {
            let cat = self.catalog.category_of(t.action)?;
            sums[cat] += t.reward;
            counts[cat] += 1;
        }
        let means: Vec<f64> = (0..c)
            .map(|k| if counts[k] > 0 { sums[k] / counts[k] as f64 } else { f64::NEG_INFINITY })
            .collect();
        let top_categories: Vec<usize> = Self::ranked(&means).into_iter().take(3).collect();
        let over_recommended = match trajectory.terminated_by {
            TerminatedBy::DiversityRule => Some(self.catalog.category_of(trajectory.transitions.last().unwrap().action)?),
            TerminatedBy::LengthCap => None,
        };
        let text = match over_recommended {
            Some(o) => format!("top_categories: {top_categories:?}\nover_recommended: {o}"),
            None => format!("top_categories: {top_categories:?}\nover_recommended: none"),
        };
        Ok(Reflection {
            episode: request.episode,
            text,
            top_categories,
            over_recommended,
        })
    }

    fn plan(&mut self, request: &PlanRequest<'_>) -> Result<Guidance> {
        let preference = self.estimated_preference(request.user);
        let mut scores = self.category_affinity(&preference);
        for r in request.reflections {
            if let Some(c) = r.over_recommended {
                if c < scores.len() {
                    scores[c] -= self.config.demotion;
                }
            }
        }
        let counts = self.window_counts(request.state)?;
        let limit = self.rule.max_same_category.saturating_sub(1);
        let ranked = Self::ranked(&scores);
        let mut categories: Vec<usize> = ranked
            .iter()
            .copied()
            .filter(|&c| counts[c] < limit)
            .take(self.config.n_guided)
            .collect();
        if categories.is_empty() {
            // Every category is at the limit: take the least repeated one.
            let least = ranked.iter().copied().min_by_key(|&c| counts[c]).unwrap_or(0);
            categories.push(least);
        }
        Ok(Guidance {
            text: format!("categories: {categories:?}"),
            categories,
        })
    }

    fn act(&mut self, request: &ActRequest<'_>) -> Result<Vec<f64>> {
        let preference = self.estimated_preference(request.user);
        if let Some(&bad) = request.guidance.categories.iter().find(|&&c| c >= self.catalog.n_categories) {
            return Err(Error::usage(format!("guidance names unknown category {bad}")));
        }
        let mut rng = seed::rng(request.step_seed);
        let slip = rng.gen::<f64>() < self.config.error_rate;
        let raw = Self::ranked(&self.category_affinity(&preference));
        let indicator = match raw.get(1) {
            Some(&second) if slip => self.indicator(&preference, |c| c == second),
            _ => self.indicator(&preference, |c| request.guidance.categories.contains(&c)),
        };
        if indicator.iter().all(|v| *v == 0.0) || indicator.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("scripted indicator degenerated"));
        }
        Ok(indicator)
    }

    fn critic(&mut self, request: &CriticRequest<'_>) -> Result<f64> {
        if request.recalled_values.is_empty() {
            Ok(fallback_value(request.state, &self.rule, self.gamma))
        } else {
            Ok(request.recalled_values.iter().sum::<f64>() / request.recalled_values.len() as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::catalog::{build_catalog, cosine, CatalogSpec, Item};
    use crate::env::{Transition, TerminatedBy};

    fn provider(error_rate: f64) -> (ScriptedProvider, Vec<UserProfile>) {
        let (catalog, population) = build_catalog(5, &CatalogSpec::default()).unwrap();
        let users = population.sample_users(6, 4, 0);
        let config = ScriptedConfig {
            error_rate,
            ..ScriptedConfig::default()
        };
        let p = ScriptedProvider::new(Arc::new(catalog), TerminationRule::short_window(), 0.5, 0.9, 1, config).unwrap();
        (p, users)
    }

    fn state_with(history: Vec<usize>) -> StateVector {
        StateVector {
            encoding: vec![0.0; 4],
            step_index: history.len(),
            history,
            terminal: false,
        }
    }

    fn episode(actions: &[usize], catalog: &Catalog, user: &UserProfile, terminated_by: TerminatedBy) -> Trajectory {
        let transitions = actions
            .iter()
            .enumerate()
            .map(|(i, &a)| Transition {
                state: state_with(actions[..i].to_vec()),
                action: a,
                reward: 1.0 + catalog.items[a].category as f64 * 0.4,
                next_state: state_with(actions[..=i].to_vec()),
                done: i + 1 == actions.len(),
            })
            .collect();
        Trajectory {
            user: user.clone(),
            transitions,
            terminated_by,
        }
    }

    #[test]
    fn plan_without_memory_ranks_by_affinity() {
        let (mut p, users) = provider(0.0);
        let state = state_with(vec![]);
        let g = p
            .plan(&PlanRequest {
                state: &state,
                user: &users[0],
                reflections: &[],
                instructions: "",
            })
            .unwrap();
        let aff = p.category_affinity(&p.estimated_preference(&users[0]));
        assert_eq!(g.categories, ScriptedProvider::ranked(&aff)[..3].to_vec());
    }

    #[test]
    fn plan_excludes_category_at_limit_and_is_deterministic() {
        let (mut p, users) = provider(0.0);
        let aff = p.category_affinity(&p.estimated_preference(&users[0]));
        let best = ScriptedProvider::ranked(&aff)[0];
        // Three items of the favourite category (ids congruent to it mod 10), among others.
        let history = vec![best, (best + 1) % 10, best + 10, best + 20];
        let state = state_with(history);
        let req = PlanRequest {
            state: &state,
            user: &users[0],
            reflections: &[],
            instructions: "",
        };
        let g = p.plan(&req).unwrap();
        assert!(!g.categories.contains(&best));
        assert_eq!(g, p.plan(&req).unwrap());
    }

    #[test]
    fn flagged_category_is_demoted() {
        let (mut p, users) = provider(0.0);
        let aff = p.category_affinity(&p.estimated_preference(&users[1]));
        let ranked = ScriptedProvider::ranked(&aff);
        let reflection = Reflection {
            episode: 0,
            text: "x".into(),
            top_categories: vec![],
            over_recommended: Some(ranked[0]),
        };
        let state = state_with(vec![]);
        let g = p
            .plan(&PlanRequest {
                state: &state,
                user: &users[1],
                reflections: &[&reflection],
                instructions: "",
            })
            .unwrap();
        assert_ne!(g.categories[0], ranked[0]);
    }

    #[test]
    fn one_item_guidance_points_at_that_item() {
        let items = vec![
            Item {
                id: 0,
                embedding: vec![1.0, 0.0],
                category: 0,
            },
            Item {
                id: 1,
                embedding: vec![0.0, 1.0],
                category: 1,
            },
        ];
        let catalog = Arc::new(Catalog::new(items, 2).unwrap());
        let mut p = ScriptedProvider::new(catalog, TerminationRule::short_window(), 0.5, 0.9, 1, ScriptedConfig {
            error_rate: 0.0,
            ..ScriptedConfig::default()
        })
        .unwrap();
        let user = UserProfile {
            id: 0,
            preference: vec![0.0, 1.0],
            side_features: vec![],
        };
        let guidance = Guidance {
            text: String::new(),
            categories: vec![0],
        };
        let state = state_with(vec![]);
        let ind = p
            .act(&ActRequest {
                state: &state,
                user: &user,
                guidance: &guidance,
                recalled: &[],
                instructions: "",
                step_seed: 3,
            })
            .unwrap();
        assert!(1.0 - cosine(&ind, &[1.0, 0.0]) < 1e-6);
    }

    #[test]
    fn opposite_users_get_opposed_indicators() {
        let (catalog, _) = build_catalog(5, &CatalogSpec::default()).unwrap();
        let mut p = ScriptedProvider::new(Arc::new(catalog), TerminationRule::short_window(), 0.0, 0.9, 1, ScriptedConfig {
            error_rate: 0.0,
            ..ScriptedConfig::default()
        })
        .unwrap();
        let guidance = Guidance {
            text: String::new(),
            categories: (0..10).collect(),
        };
        let state = state_with(vec![]);
        let pref = p.catalog.items[3].embedding.clone();
        let a = UserProfile {
            id: 0,
            preference: pref.clone(),
            side_features: vec![],
        };
        let b = UserProfile {
            id: 1,
            preference: pref.iter().map(|x| -x).collect(),
            side_features: vec![],
        };
        let act = |p: &mut ScriptedProvider, u: &UserProfile| {
            p.act(&ActRequest {
                state: &state,
                user: u,
                guidance: &guidance,
                recalled: &[],
                instructions: "",
                step_seed: 0,
            })
            .unwrap()
        };
        let ia = act(&mut p, &a);
        let ib = act(&mut p, &b);
        assert!(cosine(&ia, &ib) < 0.0);
        assert!(ia.iter().all(|v| v.is_finite()) && ia.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn reflection_flags_terminating_category() {
        let (mut p, users) = provider(0.0);
        let catalog = p.catalog.clone();
        // Items 3, 13, 23, 33 share category 3.
        let traj = episode(&[3, 5, 13, 23, 7, 33], &catalog, &users[0], TerminatedBy::DiversityRule);
        let req = ReflectRequest {
            episode: 4,
            trajectory: &traj,
            instructions: "",
        };
        let r = p.reflect(&req).unwrap();
        assert_eq!(r.over_recommended, Some(3));
        assert_eq!(r.top_categories[0], 7);
        assert!(!r.text.is_empty());
        assert_eq!(r, p.reflect(&req).unwrap());

        let mut unfinished = traj.clone();
        unfinished.transitions.last_mut().unwrap().done = false;
        let req = ReflectRequest {
            episode: 5,
            trajectory: &unfinished,
            instructions: "",
        };
        assert!(matches!(p.reflect(&req), Err(Error::Usage(_))));
    }

    #[test]
    fn critic_uses_memory_mean_or_fallback() {
        let (mut p, users) = provider(0.0);
        let state = state_with(vec![]);
        let value = |p: &mut ScriptedProvider, vals: &[f64]| {
            p.critic(&CriticRequest {
                state: &state,
                user: &users[0],
                recalled_values: vals,
                instructions: "",
            })
            .unwrap()
        };
        assert_eq!(value(&mut p, &[10.0]), 10.0);
        assert_eq!(value(&mut p, &[4.0, 8.0]), 6.0);
        let fallback = value(&mut p, &[]);
        let expected = 3.0 * (1.0 - 0.9f64.powi(100)) / (1.0 - 0.9);
        assert!((fallback - expected).abs() < 1e-9);
    }
}
