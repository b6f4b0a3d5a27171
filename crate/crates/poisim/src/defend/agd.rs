//! The adversarial game: train the recommender so that the attack's visited
//! probability for each sensitive POI sits at the level of unrelated POIs,
//! while an embedded copy of the attacker keeps adapting to the defended
//! model. Strict alternation: each pass updates exactly one player.

use std::collections::BTreeMap;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::geodata::{CheckinSequence, PoiId};
use crate::ptia::{fabricate_probe, train_attack_mlp, AttackMlp, AttackSample, MlpGradients};
use crate::recsys::{
    feature_grad, forward, local_loss, local_loss_grad, DropoutState, Gradients, ModelParams,
    TrainConfig,
};
use crate::rng;
use crate::Result;

use super::{AgdConfig, SensitivePoiSet};

/// Per-epoch unrelated-POI assignment: for each sensitive POI, the POIs it
/// is compared against.
pub type UnrelatedDraw = BTreeMap<PoiId, Vec<PoiId>>;

/// Game outcome bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgdDiagnostics {
    pub epochs_run: usize,
    pub final_local_loss: f64,
    pub final_defense_loss: f64,
}

fn probe_of<'a>(probes: &'a BTreeMap<PoiId, Vec<PoiId>>, p: PoiId) -> Result<&'a [PoiId]> {
    probes
        .get(&p)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::invalid(format!("no probe sequence for poi {p}")))
}

/// The attack's visited probability for one POI under the current model.
fn attack_score(
    mlp: &AttackMlp,
    params: &ModelParams,
    probe: &[PoiId],
) -> Result<(Array1<f64>, f64)> {
    let feature = forward(params, probe)?.feature;
    let alpha = mlp.visited_probability(feature.view())?;
    Ok((feature, alpha))
}

/// The defense loss: mean over sensitive POIs of the absolute difference
/// between the attack's score for the POI and the mean score of its
/// unrelated POIs.
pub fn defense_loss(
    mlp: &AttackMlp,
    params: &ModelParams,
    probes: &BTreeMap<PoiId, Vec<PoiId>>,
    sensitive: &SensitivePoiSet,
    unrelated: &UnrelatedDraw,
) -> Result<f64> {
    defense_pass(mlp, params, probes, sensitive, unrelated, None)
}

/// Defense loss with gradients with respect to the recommender accumulated
/// into `grads`; the attacker stays frozen.
pub fn defense_loss_grad(
    mlp: &AttackMlp,
    params: &ModelParams,
    probes: &BTreeMap<PoiId, Vec<PoiId>>,
    sensitive: &SensitivePoiSet,
    unrelated: &UnrelatedDraw,
    grads: &mut Gradients,
) -> Result<f64> {
    defense_pass(mlp, params, probes, sensitive, unrelated, Some(grads))
}

fn defense_pass(
    mlp: &AttackMlp,
    params: &ModelParams,
    probes: &BTreeMap<PoiId, Vec<PoiId>>,
    sensitive: &SensitivePoiSet,
    unrelated: &UnrelatedDraw,
    mut grads: Option<&mut Gradients>,
) -> Result<f64> {
    if sensitive.is_empty() {
        return Ok(0.0);
    }
    let g = sensitive.len() as f64;
    let mut total = 0.0;
    for &p in &sensitive.poi_ids {
        let others = unrelated
            .get(&p)
            .ok_or_else(|| Error::invalid(format!("no unrelated POIs drawn for poi {p}")))?;
        if others.is_empty() {
            return Err(Error::invalid("no unrelated POIs available"));
        }
        let o = others.len() as f64;
        let (feat_p, alpha_p) = attack_score(mlp, params, probe_of(probes, p)?)?;
        let mut mean_other = 0.0;
        let mut other_feats = Vec::with_capacity(others.len());
        for &q in others {
            let (feat_q, alpha_q) = attack_score(mlp, params, probe_of(probes, q)?)?;
            mean_other += alpha_q / o;
            other_feats.push((q, feat_q));
        }
        let diff = alpha_p - mean_other;
        total += diff.abs() / g;

        if let Some(grads) = grads.as_deref_mut() {
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            // d|diff|/d alpha_p = sign / G, and -sign/(G*O) per unrelated POI.
            let dfeat = mlp.input_gradient(feat_p.view(), sign / g)?;
            feature_grad(params, probe_of(probes, p)?, dfeat.view(), grads)?;
            for (q, feat_q) in other_feats {
                let dfeat = mlp.input_gradient(feat_q.view(), -sign / (g * o))?;
                feature_grad(params, probe_of(probes, q)?, dfeat.view(), grads)?;
            }
        }
    }
    Ok(total)
}

fn draw_unrelated(
    sensitive: &SensitivePoiSet,
    unvisited: &[PoiId],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<UnrelatedDraw> {
    if unvisited.is_empty() {
        return Err(Error::invalid("no unrelated POIs available"));
    }
    let take = count.min(unvisited.len());
    let mut draw = UnrelatedDraw::new();
    for &p in &sensitive.poi_ids {
        let picked = rand::seq::index::sample(rng, unvisited.len(), take)
            .into_iter()
            .map(|i| unvisited[i])
            .collect();
        draw.insert(p, picked);
    }
    Ok(draw)
}

/// One recommender pass: mini-batch SGD on the synergic loss with the
/// attacker frozen. Returns (mean local loss, defense loss at epoch start).
#[allow(clippy::too_many_arguments)]
pub(crate) fn theta_pass(
    params: &mut ModelParams,
    mlp: &AttackMlp,
    train_seqs: &[CheckinSequence],
    sensitive: &SensitivePoiSet,
    probes: &BTreeMap<PoiId, Vec<PoiId>>,
    unrelated: Option<&UnrelatedDraw>,
    mu: f64,
    config: &TrainConfig,
    shuffle_rng: &mut ChaCha8Rng,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let mut order: Vec<usize> = (0..train_seqs.len()).collect();
    order.shuffle(shuffle_rng);
    let mut ce_grads = Gradients::zeros_like(params);
    let mut def_grads = Gradients::zeros_like(params);
    let mut local_total = 0.0;
    let mut defense_total = 0.0;
    let mut defense_terms = 0usize;
    for batch in order.chunks(config.batch_size) {
        ce_grads.reset();
        for &ix in batch {
            let mut dropout = DropoutState {
                rng: dropout_rng,
                rate: config.dropout,
            };
            let d = (config.dropout > 0.0).then_some(&mut dropout);
            local_total += local_loss_grad(params, &train_seqs[ix].poi_ids, &mut ce_grads, d)?;
        }
        let defended = match unrelated {
            Some(unrelated) if mu > 0.0 && !sensitive.is_empty() => {
                def_grads.reset();
                defense_total +=
                    defense_loss_grad(mlp, params, probes, sensitive, unrelated, &mut def_grads)?;
                defense_terms += 1;
                true
            }
            _ => false,
        };
        params.step(&ce_grads, -config.learning_rate / batch.len() as f64);
        if defended {
            params.step(&def_grads, -config.learning_rate * mu);
        }
    }
    let defense_mean = if defense_terms > 0 {
        defense_total / defense_terms as f64
    } else {
        0.0
    };
    Ok((local_total / train_seqs.len() as f64, defense_mean))
}

/// One attacker pass: fine-tune the classifier for a single epoch on samples
/// produced by the current recommender, with the recommender frozen.
pub(crate) fn attacker_pass(
    mlp: &mut AttackMlp,
    params: &ModelParams,
    train_seqs: &[CheckinSequence],
    probes: &BTreeMap<PoiId, Vec<PoiId>>,
    unvisited: &[PoiId],
    lr: f64,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if unvisited.is_empty() {
        return Err(Error::invalid("no unrelated POIs available"));
    }
    let mut samples = Vec::with_capacity(2 * train_seqs.len());
    for seq in train_seqs {
        samples.push(AttackSample {
            input: forward(params, &seq.poi_ids)?.feature,
            label: 1,
        });
    }
    let take = train_seqs.len().min(unvisited.len());
    for i in rand::seq::index::sample(rng, unvisited.len(), take) {
        samples.push(AttackSample {
            input: forward(params, probe_of(probes, unvisited[i])?)?.feature,
            label: 0,
        });
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let mut grads = MlpGradients::zeros_like(mlp);
    let mut loss = 0.0;
    for batch in order.chunks(batch_size) {
        grads.reset();
        for &ix in batch {
            loss += crate::ptia::ptia_loss_grad(mlp, &samples[ix..ix + 1], &mut grads)?;
        }
        mlp.step(&grads, -lr / batch.len() as f64);
    }
    Ok(loss / samples.len() as f64)
}

/// Local training with the adversarial defense. Pretrains the attacker on
/// the shared samples, then alternates one recommender pass on
/// `L_loc + mu * L_def` with one attacker pass on samples produced by the
/// defended model, until the synergic loss converges or the epoch cap.
#[allow(clippy::too_many_arguments)]
pub fn train_with_agd(
    start: &ModelParams,
    train_seqs: &[CheckinSequence],
    sensitive: &SensitivePoiSet,
    probes: &BTreeMap<PoiId, Vec<PoiId>>,
    unvisited: &[PoiId],
    pretrain_samples: &[AttackSample],
    agd: &AgdConfig,
    config: &TrainConfig,
    seed: u64,
) -> Result<(ModelParams, AttackMlp, AgdDiagnostics)> {
    config.validate()?;
    if train_seqs.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let mut mlp = train_attack_mlp(
        pretrain_samples,
        start.dim(),
        &agd.pretrain,
        rng::derive(seed, "agd-pretrain", &[]),
    )?;
    let mut params = start.clone();

    // Same stream labels as plain local training so that the mu = 0 game is
    // bit-identical to train_local; game-only draws use their own streams.
    let mut shuffle_rng = rng::stream(seed, "train-shuffle", &[]);
    let mut dropout_rng = rng::stream(seed, "train-dropout", &[]);
    let mut unrelated_rng = rng::stream(seed, "agd-unrelated", &[]);
    let mut attacker_rng = rng::stream(seed, "agd-attacker", &[]);

    let active = agd.mu > 0.0 && !sensitive.is_empty();
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    let mut diag = AgdDiagnostics {
        epochs_run: 0,
        final_local_loss: f64::NAN,
        final_defense_loss: 0.0,
    };
    for epoch in 0..agd.max_epochs {
        let unrelated = if active {
            Some(draw_unrelated(
                sensitive,
                unvisited,
                agd.unrelated_count,
                &mut unrelated_rng,
            )?)
        } else {
            None
        };
        let (local, defense) = theta_pass(
            &mut params,
            &mlp,
            train_seqs,
            sensitive,
            probes,
            unrelated.as_ref(),
            agd.mu,
            config,
            &mut shuffle_rng,
            &mut dropout_rng,
        )?;
        if !local.is_finite() || !defense.is_finite() {
            return Err(Error::Divergence {
                what: "adversarial game (recommender)",
                epoch,
            });
        }
        if active {
            let attacker_loss = attacker_pass(
                &mut mlp,
                &params,
                train_seqs,
                probes,
                unvisited,
                agd.pretrain.learning_rate,
                agd.pretrain.batch_size,
                &mut attacker_rng,
            )?;
            if !attacker_loss.is_finite() {
                return Err(Error::Divergence {
                    what: "adversarial game (attacker)",
                    epoch,
                });
            }
        }
        diag.epochs_run = epoch + 1;
        diag.final_local_loss = local;
        diag.final_defense_loss = defense;

        let combined = local + agd.mu * defense;
        let improvement = (best - combined) / best.abs().max(1e-12);
        if improvement < agd.rel_tol {
            stalled += 1;
            if stalled >= agd.patience {
                break;
            }
        } else {
            stalled = 0;
        }
        best = best.min(combined);
    }
    // Recompute the local loss without dropout for reporting.
    let mut clean = 0.0;
    for seq in train_seqs {
        clean += local_loss(&params, &seq.poi_ids)?;
    }
    diag.final_local_loss = clean / train_seqs.len() as f64;
    Ok((params, mlp, diag))
}

/// Build the per-POI probe map for a whole POI universe.
pub fn build_probes(
    pois: &[crate::geodata::PoiRecord],
    seed: u64,
) -> BTreeMap<PoiId, Vec<PoiId>> {
    let index = crate::ptia::category_index(pois);
    (0..pois.len())
        .map(|p| (p, fabricate_probe(p, pois, &index, seed)))
        .collect()
}
