//! Demonstration-weighted adversarial imitation learning for sequential
//! recommendation.

pub mod config;
pub mod env;
pub mod error;
pub mod evalbench;
pub mod expert;
pub mod irl;
pub mod jsonl;
pub mod neural;
pub mod pipeline;
pub mod policy;
pub mod seed;
pub mod weighting;

pub use error::{Error, Result};
