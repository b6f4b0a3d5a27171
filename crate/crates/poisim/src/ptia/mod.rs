//! The trajectory inference attack.
//!
//! Pipeline: knowledge normalization (soft decisions become a shadow model),
//! visited-region detection from embedding drift, shadow-sequence assembly
//! per candidate POI, and a per-POI verdict from the attack classifier on the
//! averaged shadow features. Three baselines (random, 2-means on embeddings,
//! and displacement thresholding) share the verdict shape.

mod attack;
mod baselines;
mod mlp;
mod regions;
mod samples;
mod sequences;
mod shadow;

pub use attack::{run_ptia, AttackKnowledge, AttackVerdict, PtiaConfig};
pub use baselines::{baseline_imia, baseline_kmeans, baseline_random};
pub use mlp::{
    ptia_loss, ptia_loss_grad, read_attack_mlp, train_attack_mlp, write_attack_mlp, AttackMlp,
    MlpGradients, MlpTrainConfig, HIDDEN_WIDTHS, VISITED_HEAD,
};
pub use regions::{detect_regions, RegionScore};
pub use samples::{attack_input, make_attack_samples};
pub use sequences::{
    category_index, collect_shadow_sequences, fabricate_probe, SHADOW_STEP_KM,
};
pub use shadow::{build_shadow_model, ShadowConfig};

use ndarray::Array1;

use crate::geodata::{CheckinSequence, PoiId};

/// Shadow sequences prepared for one target POI.
#[derive(Debug, Clone)]
pub struct ShadowSequenceSet {
    pub target: PoiId,
    pub sequences: Vec<CheckinSequence>,
}

impl ShadowSequenceSet {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

/// One training sample for the attack classifier.
#[derive(Debug, Clone)]
pub struct AttackSample {
    pub input: Array1<f64>,
    /// 1 = member (visited), 0 = non-member.
    pub label: u8,
}
