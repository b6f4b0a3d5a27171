//! The on-device sequential POI recommender.
//!
//! A deliberately compact model: a POI embedding table with additive position
//! rows, single-head attention pooling over the prefix (query taken from the
//! last token), and an output layer tied to the embedding table
//! (`scores = E · h`). Tying the output to the embeddings makes the embedding
//! table the single locus of per-POI information, which is what both the
//! region detector and the embedding-reset defense reason about.
//!
//! All arithmetic is `f64` and every gradient is derived by hand; the tests
//! check each parameter group against central finite differences.

mod grad;
mod model;
pub(crate) mod snapshot;
mod train;

pub use grad::{feature_grad, score_grad_full, softmax_vjp, Gradients};
pub use model::{forward, init_model, ForwardOutput};
pub use snapshot::{read_model, write_model};
pub use train::{local_loss, local_loss_grad, run_epoch, train_local, DropoutState};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geodata::{PoiId, MAX_SEQ_LEN};
use crate::Result;

/// Latent dimensions the population may use.
pub const SUPPORTED_DIMS: [usize; 5] = [8, 16, 32, 64, 128];

/// One user's recommender parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// POI embedding table, one row per POI.
    pub embeddings: Array2<f64>,
    /// Attention query projection, d × d.
    pub query_weights: Array2<f64>,
    /// Attention key projection, d × d.
    pub key_weights: Array2<f64>,
    /// Additive position rows, max_seq_len × d.
    pub position_weights: Array2<f64>,
}

impl ModelParams {
    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn poi_count(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn max_seq_len(&self) -> usize {
        self.position_weights.nrows()
    }

    /// Total parameter count across all groups.
    pub fn n_params(&self) -> usize {
        self.embeddings.len()
            + self.query_weights.len()
            + self.key_weights.len()
            + self.position_weights.len()
    }

    pub fn zeros(poi_count: usize, dim: usize) -> ModelParams {
        ModelParams {
            embeddings: Array2::zeros((poi_count, dim)),
            query_weights: Array2::zeros((dim, dim)),
            key_weights: Array2::zeros((dim, dim)),
            position_weights: Array2::zeros((MAX_SEQ_LEN, dim)),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.embeddings.iter().all(|v| v.is_finite())
            && self.query_weights.iter().all(|v| v.is_finite())
            && self.key_weights.iter().all(|v| v.is_finite())
            && self.position_weights.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_prefix(&self, prefix: &[PoiId]) -> Result<()> {
        if prefix.is_empty() {
            return Err(Error::invalid("empty prefix"));
        }
        if prefix.len() > self.max_seq_len() {
            return Err(Error::invalid(format!(
                "prefix length {} exceeds {}",
                prefix.len(),
                self.max_seq_len()
            )));
        }
        if let Some(&p) = prefix.iter().find(|&&p| p >= self.poi_count()) {
            return Err(Error::invalid(format!("poi id {p} out of range")));
        }
        Ok(())
    }
}

/// The shared initial distribution every model in an experiment starts from.
/// Knowing it is part of the threat model: region detection measures how far
/// embeddings have drifted from exactly this distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub mean: f64,
    pub std: f64,
    pub seed: u64,
}

impl InitSpec {
    pub fn new(seed: u64) -> Self {
        InitSpec {
            mean: 0.0,
            std: 0.1,
            seed,
        }
    }
}

/// Local training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Dropout rate on the pooled feature, applied during training only.
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.002,
            batch_size: 16,
            max_epochs: 50,
            dropout: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0
            || self.batch_size == 0
            || self.max_epochs == 0
            || !(0.0..1.0).contains(&self.dropout)
        {
            return Err(Error::invalid(format!("bad train config {self:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_experiment_settings() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate, 0.002);
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.max_epochs, 50);
        assert_eq!(cfg.dropout, 0.2);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn config_validation_rejects_degenerate_values() {
        let mut cfg = TrainConfig::default();
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig::default();
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
    }
}
