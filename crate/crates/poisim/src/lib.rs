//! Desk-scale simulator for trajectory inference attacks and defenses in
//! decentralized collaborative POI recommendation.
//!
//! The crate models a population of users who each train a compact sequential
//! POI recommender on-device and then collaborate either by sharing model
//! parameters within neighbor groups or by exchanging soft decisions on a
//! shared reference dataset. On top of that sit a trajectory inference attack
//! (shadow models, shadow sequences, a small attack MLP, and region
//! detection), three attacker baselines, and three defenses (Gaussian
//! parameter noise, embedding reset, and an adversarial training game).
//!
//! Modules follow the pipeline order:
//!
//! - [`geodata`]: POIs, check-in sequences, regions, dataset splits.
//! - [`recsys`]: the recommender model, its analytic gradients, local training.
//! - [`collab`]: neighbor grouping, model sharing, knowledge distillation.
//! - [`ptia`]: the trajectory inference attack and its baselines.
//! - [`defend`]: noise, embedding reset, and the adversarial game defense.
//! - [`evalkit`]: hit ratio and attack F1 metrics.
//! - [`harness`]: synthetic worlds, experiment orchestration, reports, CLI
//!   plumbing.

pub mod collab;
pub mod defend;
pub mod error;
pub mod evalkit;
pub mod geodata;
pub mod harness;
pub mod ptia;
pub mod recsys;
pub mod rng;

pub use error::Error;

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Version string embedded in every report and snapshot.
pub const VERSION: &str = concat!("poisim-v", env!("CARGO_PKG_VERSION"));
