//! Experiment configuration, synthetic worlds, orchestration, persistence,
//! and report emission.

mod config;
mod knowledge;
mod pipeline;
mod report;
mod store;
mod synthetic;

pub use config::{load_config, parse_override, ConfigOverride};
pub use knowledge::KnowledgeExport;
pub use pipeline::{
    build_attacker, evaluate_trial, normalize_knowledge, prepare_trial, run_attack_stage,
    run_experiment, run_trial, train_trial, AttackerToolkit, DefendedModels, TrialOutcome,
    TrialWorld,
};
pub use report::{emit_report, merge_reports, ExperimentReport, TrialReport};
pub use store::RunStore;
pub use synthetic::{gen_synthetic, write_checkin_csv, SyntheticWorld, SyntheticWorldSpec};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::evalkit::F1Mode;
use crate::recsys::{TrainConfig, SUPPORTED_DIMS};
use crate::Result;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "POISIM_OUT";

/// Which collaboration protocol the population runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    ModelSharing,
    Distillation,
}

/// Which attacker runs against the exported knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Ptia,
    Random,
    Kmeans,
    Imia,
}

/// Defense applied before knowledge export. Sensitive-set size lives in
/// [`HyperParams::sensitive_g`] so the same sets serve every defense and the
/// undefended comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefenseConfig {
    None,
    Ldp { lambda: f64 },
    Er,
    Agd { mu: f64 },
}

/// Population latent-dimension choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DimChoice {
    Fixed { d: usize },
    /// Each supported dimension covers 20% of the population.
    Mixed,
}

/// Where the check-in data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Csv { path: PathBuf },
    Synthetic { spec: SyntheticWorldSpec },
}

/// Everything tunable about a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub dim: DimChoice,
    /// Shadow sequences per target POI (V).
    pub shadow_count: usize,
    /// Attacker-side latent dimension for shadow models.
    pub shadow_dim: usize,
    pub shadow_lr: f64,
    pub hr_k: usize,
    pub regions: usize,
    pub rounds: usize,
    pub group_size: usize,
    pub min_interactions: usize,
    pub train: TrainConfig,
    pub distill_weight: f64,
    pub imia_quantile: f64,
    pub f1_mode: F1Mode,
    /// Sensitive POIs per user (G); 0 disables sensitive-set evaluation.
    pub sensitive_g: usize,
    /// Unrelated POIs per sensitive POI in the adversarial game (O).
    pub unrelated_count: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            dim: DimChoice::Fixed { d: 64 },
            shadow_count: 5,
            shadow_dim: 64,
            shadow_lr: 10.0,
            hr_k: 10,
            regions: 5,
            rounds: 3,
            group_size: 4,
            min_interactions: 10,
            train: TrainConfig::default(),
            distill_weight: 1.0,
            imia_quantile: 0.9,
            f1_mode: F1Mode::PerRegionMean,
            sensitive_g: 0,
            unrelated_count: 5,
        }
    }
}

/// One experiment: a dataset, a protocol, an attack, a defense, and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub protocol: Protocol,
    pub attack: AttackKind,
    pub defense: DefenseConfig,
    #[serde(default)]
    pub hyper: HyperParams,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if h.shadow_count == 0 || h.hr_k == 0 || h.regions == 0 || h.group_size < 2 {
            return Err(Error::Config(format!("degenerate hyperparameters: {h:?}")));
        }
        if !SUPPORTED_DIMS.contains(&h.shadow_dim) {
            return Err(Error::Config(format!(
                "shadow dimension {} unsupported",
                h.shadow_dim
            )));
        }
        if let DimChoice::Fixed { d } = h.dim {
            if !SUPPORTED_DIMS.contains(&d) {
                return Err(Error::Config(format!("latent dimension {d} unsupported")));
            }
        }
        if self.protocol == Protocol::ModelSharing && h.dim == DimChoice::Mixed {
            return Err(Error::Config(
                "model sharing requires structurally equivalent models; use a fixed dimension"
                    .into(),
            ));
        }
        if let DefenseConfig::Ldp { lambda } = self.defense {
            if lambda < 0.0 {
                return Err(Error::Config("noise level must be non-negative".into()));
            }
        }
        if let DefenseConfig::Agd { mu } = self.defense {
            if mu < 0.0 {
                return Err(Error::Config("defense weight must be non-negative".into()));
            }
        }
        if matches!(self.defense, DefenseConfig::Er | DefenseConfig::Agd { .. })
            && h.sensitive_g == 0
        {
            return Err(Error::Config(
                "sensitive-set defenses need hyper.sensitive_g > 0".into(),
            ));
        }
        h.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let DatasetSource::Synthetic { spec } = &self.dataset {
            spec.validate()?;
        }
        Ok(())
    }

    /// Content hash of the resolved configuration, embedded in every output.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        hex::encode(&digest[..16])
    }
}
