use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: usize,
    /// Unit Euclidean norm.
    pub embedding: Vec<f64>,
    pub category: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: usize,
    pub preference: Vec<f64>,
    /// Observable attributes (one-hot segment, an age/gender analog).
    pub side_features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub items: Vec<Item>,
    pub n_categories: usize,
    pub d_item: usize,
}

impl Catalog {
    pub fn new(items: Vec<Item>, n_categories: usize) -> Result<Self> {
        let d_item = items
            .first()
            .map(|i| i.embedding.len())
            .ok_or_else(|| Error::config("env.n_items", "catalog is empty"))?;
        for (idx, item) in items.iter().enumerate() {
            if item.id != idx {
                return Err(Error::data(format!("item ids must be dense; found {} at {idx}", item.id)));
            }
            if item.embedding.len() != d_item {
                return Err(Error::data(format!("item {idx} has embedding dim {}", item.embedding.len())));
            }
            if item.category >= n_categories {
                return Err(Error::data(format!("item {idx} has category {} >= {n_categories}", item.category)));
            }
            let norm = l2_norm(&item.embedding);
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::data(format!("item {idx} embedding norm {norm} is not 1")));
            }
        }
        Ok(Catalog {
            items,
            n_categories,
            d_item,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, id: usize) -> Result<&Item> {
        self.items
            .get(id)
            .ok_or_else(|| Error::data(format!("unknown item id {id}")))
    }

    pub fn category_of(&self, id: usize) -> Result<usize> {
        Ok(self.item(id)?.category)
    }

    pub fn items_in_category(&self, category: usize) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(move |i| i.category == category)
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = l2_norm(a) * l2_norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

pub fn normalize(v: &mut [f64]) {
    let n = l2_norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn gaussian_vec(rng: &mut seed::Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn random_unit(rng: &mut seed::Rng, d: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, d);
        if l2_norm(&v) > 1e-9 {
            normalize(&mut v);
            return v;
        }
    }
}

/// Shape of the synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogSpec {
    pub n_items: usize,
    pub n_categories: usize,
    pub d_item: usize,
    pub n_segments: usize,
    /// Within-category spread of item embeddings around the category center.
    pub category_spread: f64,
    /// Within-segment spread of user preferences around the segment center.
    pub preference_spread: f64,
}

impl CatalogSpec {
    pub fn new(n_items: usize, n_categories: usize, d_item: usize) -> Self {
        CatalogSpec {
            n_items,
            n_categories,
            d_item,
            ..CatalogSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_categories < 1 {
            return Err(Error::config("env.n_categories", "must be at least 1"));
        }
        if self.n_items < self.n_categories {
            return Err(Error::config("env.n_items", "must be at least n_categories"));
        }
        if self.d_item < 2 {
            return Err(Error::config("env.d_item", "must be at least 2"));
        }
        if self.n_segments < 1 {
            return Err(Error::config("env.n_segments", "must be at least 1"));
        }
        if !(self.category_spread >= 0.0) {
            return Err(Error::config("env.category_spread", "must be non-negative"));
        }
        if !(self.preference_spread >= 0.0) {
            return Err(Error::config("env.preference_spread", "must be non-negative"));
        }
        Ok(())
    }
}

impl Default for CatalogSpec {
    fn default() -> Self {
        CatalogSpec {
            n_items: 100,
            n_categories: 10,
            d_item: 8,
            n_segments: 4,
            category_spread: 0.35,
            preference_spread: 0.3,
        }
    }
}

/// Segment structure users are drawn from; shared by training and evaluation users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub segment_centers: Vec<Vec<f64>>,
    pub preference_spread: f64,
}

impl Population {
    pub fn side_dim(&self) -> usize {
        self.segment_centers.len()
    }

    /// Users `id_offset..id_offset + count`, deterministic in `seed`.
    pub fn sample_users(&self, seed: u64, count: usize, id_offset: usize) -> Vec<UserProfile> {
        let d = self.segment_centers.first().map_or(0, |c| c.len());
        (0..count)
            .map(|k| {
                let id = id_offset + k;
                let mut rng = seed::rng(seed::derive(seed, stream::TRAIN_USERS, id as u64));
                let segment = rng.gen_range(0..self.segment_centers.len());
                let noise = gaussian_vec(&mut rng, d);
                let scale = self.preference_spread / (d as f64).sqrt();
                let mut preference: Vec<f64> = self.segment_centers[segment]
                    .iter()
                    .zip(&noise)
                    .map(|(c, z)| c + scale * z)
                    .collect();
                normalize(&mut preference);
                let mut side_features = vec![0.0; self.segment_centers.len()];
                side_features[segment] = 1.0;
                UserProfile {
                    id,
                    preference,
                    side_features,
                }
            })
            .collect()
    }
}

/// Synthetic catalog: category centers on the unit sphere, items scattered
/// around their center and renormalized. Item `i` belongs to category
/// `i % n_categories`, so categories are balanced within one item.
pub fn build_catalog(seed: u64, spec: &CatalogSpec) -> Result<(Catalog, Population)> {
    spec.validate()?;
    let mut rng = seed::derived_rng(seed, stream::CATALOG, 0);
    let centers: Vec<Vec<f64>> = (0..spec.n_categories)
        .map(|_| random_unit(&mut rng, spec.d_item))
        .collect();
    let scale = spec.category_spread / (spec.d_item as f64).sqrt();
    let items = (0..spec.n_items)
        .map(|id| {
            let category = id % spec.n_categories;
            let mut embedding: Vec<f64> = centers[category]
                .iter()
                .map(|c| c + scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            if l2_norm(&embedding) < 1e-9 {
                embedding = centers[category].clone();
            }
            normalize(&mut embedding);
            Item {
                id,
                embedding,
                category,
            }
        })
        .collect();
    let segment_centers = (0..spec.n_segments)
        .map(|_| random_unit(&mut rng, spec.d_item))
        .collect();
    let population = Population {
        segment_centers,
        preference_spread: spec.preference_spread,
    };
    Ok((Catalog::new(items, spec.n_categories)?, population))
}

/// Items plus a default pool of 100 users, all deterministic in `seed`.
pub fn build_synthetic_catalog(
    seed: u64,
    n_items: usize,
    n_categories: usize,
    d_item: usize,
) -> Result<(Vec<Item>, Vec<UserProfile>)> {
    let spec = CatalogSpec::new(n_items, n_categories, d_item);
    let (catalog, population) = build_catalog(seed, &spec)?;
    let users = population.sample_users(seed::derive(seed, stream::TRAIN_USERS, 0), 100, 0);
    Ok((catalog.items, users))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_are_balanced_and_embeddings_unit() {
        let (items, users) = build_synthetic_catalog(1, 100, 10, 8).unwrap();
        assert_eq!(items.len(), 100);
        for c in 0..10 {
            assert_eq!(items.iter().filter(|i| i.category == c).count(), 10);
        }
        for item in &items {
            assert!((l2_norm(&item.embedding) - 1.0).abs() < 1e-6);
        }
        let side = users[0].side_features.len();
        assert!(users.iter().all(|u| u.side_features.len() == side));
    }

    #[test]
    fn unbalanced_counts_stay_within_one() {
        let (items, _) = build_synthetic_catalog(3, 23, 5, 4).unwrap();
        let counts: Vec<usize> = (0..5).map(|c| items.iter().filter(|i| i.category == c).count()).collect();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = build_synthetic_catalog(1, 100, 10, 8).unwrap();
        let b = build_synthetic_catalog(1, 100, 10, 8).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn different_seeds_differ() {
        let a = build_synthetic_catalog(1, 100, 10, 8).unwrap();
        let b = build_synthetic_catalog(2, 100, 10, 8).unwrap();
        assert_ne!(serde_json::to_string(&a.0).unwrap(), serde_json::to_string(&b.0).unwrap());
    }

    #[test]
    fn invalid_sizes_are_configuration_errors() {
        assert!(matches!(build_synthetic_catalog(1, 5, 10, 8), Err(Error::Config { .. })));
        assert!(matches!(build_synthetic_catalog(1, 10, 0, 8), Err(Error::Config { .. })));
        assert!(matches!(build_synthetic_catalog(1, 10, 2, 1), Err(Error::Config { .. })));
    }
}
