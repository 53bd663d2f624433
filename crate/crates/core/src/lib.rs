//! Semantic vicinal augmentation for long-tailed text-attributed graphs.

pub mod baselines;
pub mod edges;
pub mod embedding;
pub mod error;
pub mod fixture;
pub mod generation;
pub mod graph;
mod http;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod theory;

pub use error::{Error, Result};
