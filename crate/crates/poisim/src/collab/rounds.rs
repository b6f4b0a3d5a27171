//! Model-sharing and distillation rounds.

use ndarray::Array1;
use rand::seq::SliceRandom;

use crate::error::Error;
use crate::geodata::CheckinSequence;
use crate::recsys::{
    forward, run_epoch, score_grad_full, softmax_vjp, Gradients, ModelParams, TrainConfig,
};
use crate::rng;
use crate::Result;

use super::{reference_hash, SoftDecisionSet};

/// Convex aggregation for one group: each member becomes half its own
/// parameters plus half the uniform mean of the other members.
pub fn aggregate_group(members: &[ModelParams]) -> Result<Vec<ModelParams>> {
    if members.is_empty() {
        return Err(Error::invalid("empty group"));
    }
    let dim = members[0].dim();
    if members.iter().any(|m| m.dim() != dim) {
        return Err(Error::protocol(
            "model sharing requires structurally equivalent models: mixed latent dimensions",
        ));
    }
    if members.len() == 1 {
        return Ok(members.to_vec());
    }
    let n_others = (members.len() - 1) as f64;
    let out = (0..members.len())
        .map(|i| {
            let mut blended = ModelParams::zeros(members[0].poi_count(), dim);
            for (j, m) in members.iter().enumerate() {
                let w = if j == i { 0.5 } else { 0.5 / n_others };
                blended.embeddings.scaled_add(w, &m.embeddings);
                blended.query_weights.scaled_add(w, &m.query_weights);
                blended.key_weights.scaled_add(w, &m.key_weights);
                blended.position_weights.scaled_add(w, &m.position_weights);
            }
            blended
        })
        .collect();
    Ok(out)
}

/// One model-sharing round for a group: aggregate, then each member
/// fine-tunes locally for a single epoch on its own data.
pub fn share_models_round(
    members: &[ModelParams],
    member_ids: &[usize],
    training: &[Vec<CheckinSequence>],
    config: &TrainConfig,
    seed: u64,
    round: usize,
) -> Result<Vec<ModelParams>> {
    if members.len() != training.len() || members.len() != member_ids.len() {
        return Err(Error::invalid("member/training length mismatch"));
    }
    let mut updated = aggregate_group(members)?;
    for ((params, &user), seqs) in updated.iter_mut().zip(member_ids).zip(training) {
        if seqs.is_empty() {
            continue;
        }
        let mut shuffle = rng::stream(seed, "share-finetune-shuffle", &[round as u64, user as u64]);
        let mut dropout = rng::stream(seed, "share-finetune-dropout", &[round as u64, user as u64]);
        let loss = run_epoch(params, seqs, config, &mut shuffle, &mut dropout)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                what: "model-sharing fine-tune",
                epoch: round,
            });
        }
    }
    Ok(updated)
}

/// A model's soft decisions on the reference dataset, computed on the full
/// sequence.
pub fn emit_soft_decisions(
    params: &ModelParams,
    reference: &[CheckinSequence],
) -> Result<SoftDecisionSet> {
    if reference.is_empty() {
        return Err(Error::invalid("empty reference dataset"));
    }
    let mut probs = ndarray::Array2::zeros((reference.len(), params.poi_count()));
    for (z, seq) in reference.iter().enumerate() {
        let out = forward(params, &seq.poi_ids)?;
        probs.row_mut(z).assign(&out.probs);
    }
    Ok(SoftDecisionSet {
        reference_hash: reference_hash(reference),
        probs,
    })
}

/// Mean squared soft-decision disagreement with a target set, averaged over
/// the reference sequences.
pub fn soft_decision_mse(params: &ModelParams, reference: &[CheckinSequence], target: &SoftDecisionSet) -> Result<f64> {
    let mut total = 0.0;
    for (z, seq) in reference.iter().enumerate() {
        let out = forward(params, &seq.poi_ids)?;
        let diff = &out.probs - &target.probs.row(z);
        total += diff.dot(&diff);
    }
    Ok(total / reference.len() as f64)
}

/// One knowledge-distillation round: pull the model's reference predictions
/// toward the average of the neighbors' soft decisions, then fine-tune on
/// local data for one epoch.
///
/// The distillation pass runs first so that a round whose neighbors agree
/// with the model exactly reduces to plain local training.
#[allow(clippy::too_many_arguments)]
pub fn distill_round(
    params: &ModelParams,
    train_seqs: &[CheckinSequence],
    reference: &[CheckinSequence],
    own: &SoftDecisionSet,
    neighbors: &[&SoftDecisionSet],
    weight: f64,
    config: &TrainConfig,
    seed: u64,
) -> Result<ModelParams> {
    if neighbors.is_empty() {
        return Err(Error::protocol("distillation round without neighbors"));
    }
    let expected = reference_hash(reference);
    if own.reference_hash != expected {
        return Err(Error::protocol("own soft decisions disagree with the reference dataset"));
    }
    for n in neighbors {
        own.check_aligned(n)?;
    }
    if weight < 0.0 {
        return Err(Error::invalid("distillation weight must be non-negative"));
    }

    // Average the neighbors' decisions once.
    let mut target = neighbors[0].probs.clone();
    for n in &neighbors[1..] {
        target += &n.probs;
    }
    target /= neighbors.len() as f64;

    let mut params = params.clone();
    let mut grads = Gradients::zeros_like(&params);
    let mut order: Vec<usize> = (0..reference.len()).collect();
    order.shuffle(&mut rng::stream(seed, "distill-shuffle", &[]));
    for batch in order.chunks(config.batch_size) {
        grads.reset();
        for &z in batch {
            let out = forward(&params, &reference[z].poi_ids)?;
            let dprobs: Array1<f64> = (&out.probs - &target.row(z)) * 2.0 * weight;
            let dscore = softmax_vjp(out.probs.view(), dprobs.view());
            score_grad_full(&params, &reference[z].poi_ids, dscore.view(), &mut grads)?;
        }
        params.step(&grads, -config.learning_rate / batch.len() as f64);
    }
    if !params.all_finite() {
        return Err(Error::Divergence {
            what: "distillation",
            epoch: 0,
        });
    }

    if !train_seqs.is_empty() {
        let mut shuffle = rng::stream(seed, "train-shuffle", &[]);
        let mut dropout = rng::stream(seed, "train-dropout", &[]);
        let loss = run_epoch(&mut params, train_seqs, config, &mut shuffle, &mut dropout)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                what: "distillation fine-tune",
                epoch: 0,
            });
        }
    }
    Ok(params)
}
