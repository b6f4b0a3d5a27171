//! Defenses applied before knowledge leaves the device: Gaussian parameter
//! noise, embedding reset, and the adversarial game that trains the
//! recommender against an embedded copy of the attack.

mod agd;
mod noise;
mod sensitive;

pub use agd::{defense_loss, defense_loss_grad, train_with_agd, AgdDiagnostics, UnrelatedDraw};
pub use noise::{apply_er, apply_ldp};
pub use sensitive::select_sensitive;

use serde::{Deserialize, Serialize};

use crate::geodata::{PoiId, UserId};
use crate::ptia::MlpTrainConfig;

/// The POIs one user wants hidden, drawn from their visited set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitivePoiSet {
    pub user_id: UserId,
    /// Ascending; at most the requested count, fewer when the user has not
    /// visited that many POIs.
    pub poi_ids: Vec<PoiId>,
    /// True when the request exceeded the visited count.
    pub truncated: bool,
}

impl SensitivePoiSet {
    pub fn len(&self) -> usize {
        self.poi_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poi_ids.is_empty()
    }
}

/// Adversarial-game settings.
#[derive(Debug, Clone, Copy)]
pub struct AgdConfig {
    /// Defense weight on the synergic loss.
    pub mu: f64,
    /// Unrelated POIs sampled per sensitive POI each epoch.
    pub unrelated_count: usize,
    /// Attacker pretraining schedule.
    pub pretrain: MlpTrainConfig,
    /// Cap on alternation epochs.
    pub max_epochs: usize,
    /// Stop when the synergic loss improves relatively less than this for
    /// `patience` consecutive epochs.
    pub rel_tol: f64,
    pub patience: usize,
}

impl Default for AgdConfig {
    fn default() -> Self {
        AgdConfig {
            mu: 0.6,
            unrelated_count: 5,
            pretrain: MlpTrainConfig::default(),
            max_epochs: 50,
            rel_tol: 1e-4,
            patience: 3,
        }
    }
}
