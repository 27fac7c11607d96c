//! Deterministic federated-learning simulator with trajectory-Shapley
//! client weighting.
//!
//! The crate trains small classifiers (softmax regression and a one-hidden
//! layer MLP) across simulated clients and aggregates their updates with one
//! of several weighting policies: uniform averaging, data-size weighting, the
//! trajectory Shapley value policy (`fedtsv`), cosine-gradient scoring
//! (`cgsv`) and leave-one-out accuracy margins (`loo`).
//!
//! Every random draw is derived from a master seed plus a purpose tag, so a
//! run is byte-reproducible regardless of how many worker threads train
//! clients.
//!
//! The runnable programs under `examples/` walk through the main pieces:
//!
//! - `shapley_games`: exact and Monte Carlo Shapley values on toy games
//! - `partition_clients`: IID, Dirichlet and label-shuffled client shards
//! - `local_training`: model initialisation, gradients and local SGD
//! - `trajectory_utility`: the per-round utility and its Shapley split
//! - `federated_run`: a full experiment from a config file
//! - `compare_policies`: several policies on one federation, side by side
//! - `prepare_mnist`: converting raw digit data into IDX files

pub mod contribution;
pub mod data;
pub mod engine;
pub mod error;
pub mod harness;
pub mod model;
pub mod params;
pub mod rng;
pub mod strategies;

pub use error::{Error, Result};
pub use params::ParamVector;
