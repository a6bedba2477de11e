//! Agent-based simulation of users co-evolving with an item-based
//! collaborative-filtering recommender.
//!
//! Users hold a constant number of items. At every event a random user either
//! deliberately picks an item of their own taste or follows the recommender,
//! then drops one old item. The crate measures how often recommendations
//! match the hidden tastes (ω) and compares the real and leave-one-out AUC.

pub mod dynamics;
pub mod error;
mod kernels;
pub mod metrics;
pub mod movielens;
pub mod plot;
pub mod recommender;
pub mod sweep;
pub mod verify;
pub mod world;

pub use dynamics::{instance_rng, run, run_replay, Mode, Simulation, WorldConfig};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use recommender::{RecommenderConfig, SimilarityKind};
pub use world::{BipartiteState, Provenance, TasteMap};
