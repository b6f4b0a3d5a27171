//! End-to-end attack against one user.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::collab::SoftDecisionSet;
use crate::error::Error;
use crate::geodata::{CategorySequence, CheckinSequence, PoiId, PoiRecord, RegionId, RegionMap, UserId};
use crate::recsys::{InitSpec, ModelParams};
use crate::Result;

use super::regions::{detect_regions, RegionScore};
use super::samples::attack_input;
use super::sequences::collect_shadow_sequences;
use super::shadow::{build_shadow_model, ShadowConfig};
use super::{AttackMlp, ShadowSequenceSet};

/// What the adversary holds about a user, exactly one of the two protocol
/// exports.
#[derive(Debug, Clone)]
pub enum AttackKnowledge<'a> {
    ModelSharing(&'a ModelParams),
    Distillation(&'a SoftDecisionSet),
}

/// Attack hyperparameters.
#[derive(Debug, Clone)]
pub struct PtiaConfig {
    /// Shadow sequences per target POI (V).
    pub shadow_count: usize,
    /// Shadow-model fitting schedule for distillation knowledge.
    pub shadow: ShadowConfig,
    /// A POI is predicted visited when the visited-head probability exceeds
    /// this.
    pub decision_threshold: f64,
}

impl Default for PtiaConfig {
    fn default() -> Self {
        PtiaConfig {
            shadow_count: 5,
            shadow: ShadowConfig::default(),
            decision_threshold: 0.5,
        }
    }
}

/// Everything the adversary knows independent of the target user.
pub struct AttackContext<'a> {
    pub pois: &'a [PoiRecord],
    pub region_map: &'a RegionMap,
    pub init: &'a InitSpec,
    pub prior_pool: &'a [CheckinSequence],
    pub category_pool: &'a [CategorySequence],
    pub reference: &'a [CheckinSequence],
    /// One pretrained classifier per supported latent dimension.
    pub mlps: &'a BTreeMap<usize, AttackMlp>,
    pub config: &'a PtiaConfig,
    pub seed: u64,
}

/// The attack's output for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackVerdict {
    pub user_id: UserId,
    pub detected_regions: Vec<RegionId>,
    pub region_scores: Vec<RegionScore>,
    /// POIs predicted visited, ascending.
    pub predicted: Vec<PoiId>,
    /// Visited-head probability for every probed POI, ascending by id.
    pub probe_probabilities: Vec<(PoiId, f64)>,
}

/// Assemble shadow-sequence sets for every POI once; they depend only on the
/// pools and the seed, so one map serves all users of a trial.
pub fn collect_all_shadow_sets(
    ctx: &AttackContext<'_>,
) -> Result<BTreeMap<PoiId, ShadowSequenceSet>> {
    let mut sets = BTreeMap::new();
    for p in 0..ctx.pois.len() {
        sets.insert(
            p,
            collect_shadow_sequences(
                ctx.prior_pool,
                ctx.category_pool,
                p,
                ctx.config.shadow_count,
                ctx.pois,
                ctx.seed,
            )?,
        );
    }
    Ok(sets)
}

/// Run the full attack against one user: normalize the knowledge to a model,
/// detect visited regions, and classify every POI inside them.
pub fn run_ptia(
    ctx: &AttackContext<'_>,
    user_id: UserId,
    knowledge: AttackKnowledge<'_>,
    shadow_sets: &BTreeMap<PoiId, ShadowSequenceSet>,
) -> Result<AttackVerdict> {
    let shadow_model;
    let params: &ModelParams = match knowledge {
        AttackKnowledge::ModelSharing(p) => p,
        AttackKnowledge::Distillation(soft) => {
            shadow_model = build_shadow_model(
                soft,
                ctx.reference,
                ctx.init,
                &ctx.config.shadow,
                crate::rng::derive(ctx.seed, "user-shadow", &[user_id as u64]),
            )?;
            &shadow_model
        }
    };

    let detection = detect_regions(params, ctx.init, ctx.region_map)?;
    let mlp = ctx.mlps.get(&params.dim()).ok_or_else(|| {
        Error::invalid(format!(
            "no attack classifier pretrained for dimension {}",
            params.dim()
        ))
    })?;

    let mut predicted = Vec::new();
    let mut probe_probabilities = Vec::new();
    for p in 0..ctx.pois.len() {
        if !detection.visited.contains(&ctx.region_map.region_of(p)) {
            continue;
        }
        let set = shadow_sets
            .get(&p)
            .ok_or_else(|| Error::invalid(format!("no shadow sequences for poi {p}")))?;
        let input = attack_input(params, set)?;
        let alpha = mlp.visited_probability(input.view())?;
        probe_probabilities.push((p, alpha));
        if alpha > ctx.config.decision_threshold {
            predicted.push(p);
        }
    }

    Ok(AttackVerdict {
        user_id,
        detected_regions: detection.visited,
        region_scores: detection.scores,
        predicted,
        probe_probabilities,
    })
}
