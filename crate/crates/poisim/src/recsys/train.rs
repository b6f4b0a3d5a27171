//! The local objective and plain-SGD training.
//!
//! The loss over a sequence is the mean cross-entropy of predicting each next
//! POI from its prefix. One combined pass computes all prefix steps: keys and
//! queries are projected once per sequence and the output scores of all steps
//! go through a single GEMM against the tied embedding table.

use ndarray::linalg::general_mat_mul;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::geodata::{CheckinSequence, PoiId};
use crate::rng;
use crate::Result;

use super::grad::{Gradients, SeqBackward, SeqState};
use super::model::attention_step;
use super::{ModelParams, TrainConfig};

/// Dropout on the pooled feature, fed by a dedicated stream so that its
/// draws never shift any other stream.
pub struct DropoutState<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub rate: f64,
}

/// Mean next-POI cross-entropy over the sequence (no dropout).
pub fn local_loss(params: &ModelParams, seq: &[PoiId]) -> Result<f64> {
    ce_pass(params, seq, None, None)
}

/// Mean next-POI cross-entropy with gradients accumulated into `grads`.
/// Dropout, when supplied, zeroes pooled-feature elements at the given rate
/// and rescales the survivors; the returned loss is the dropped-out one.
pub fn local_loss_grad(
    params: &ModelParams,
    seq: &[PoiId],
    grads: &mut Gradients,
    dropout: Option<&mut DropoutState>,
) -> Result<f64> {
    ce_pass(params, seq, Some(grads), dropout)
}

fn ce_pass(
    params: &ModelParams,
    seq: &[PoiId],
    grads: Option<&mut Gradients>,
    dropout: Option<&mut DropoutState>,
) -> Result<f64> {
    params.check_prefix(seq)?;
    if seq.len() < 2 {
        return Err(Error::invalid(
            "sequence of length 1 has no prediction target",
        ));
    }
    let steps = seq.len() - 1;
    let dim = params.dim();
    let state = SeqState::new(params, seq);

    // Pooled features for every prefix step, plus the dropout scaling.
    let mut features = Array2::zeros((steps, dim));
    let mut attns: Vec<Vec<f64>> = Vec::with_capacity(steps);
    for t in 0..steps {
        let (attn, h) = attention_step(&state.x, &state.keys, state.queries.row(t), t);
        features.row_mut(t).assign(&h);
        attns.push(attn);
    }
    let scaling = dropout.map(|d| {
        let keep = 1.0 - d.rate;
        let mut scale = Array2::zeros((steps, dim));
        for v in scale.iter_mut() {
            if d.rng.random::<f64>() >= d.rate {
                *v = 1.0 / keep;
            }
        }
        features *= &scale;
        scale
    });

    // scores = H E^T, then row-wise log-softmax against the next POI.
    let mut scores = features.dot(&params.embeddings.t());
    let mut loss = 0.0;
    for t in 0..steps {
        let target = seq[t + 1];
        let mut row = scores.row_mut(t);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        loss += -(row[target] / total).ln();
        if let Some(_) = grads {
            // Convert the row in place into dL/dscores for this step.
            let inv = 1.0 / (steps as f64);
            for v in row.iter_mut() {
                *v = *v / total * inv;
            }
            row[target] -= inv;
        }
    }
    loss /= steps as f64;

    let grads = match grads {
        Some(g) => g,
        None => return Ok(loss),
    };

    // Output layer: dE += dS^T H', dH' = dS E.
    general_mat_mul(1.0, &scores.t(), &features, 1.0, &mut grads.embeddings);
    let mut dfeatures = scores.dot(&params.embeddings);
    if let Some(scale) = scaling {
        dfeatures *= &scale;
    }

    let mut back = SeqBackward::new(&state);
    for t in 0..steps {
        back.step(&attns[t], t, dfeatures.row(t));
    }
    back.finish(params, seq, grads);
    Ok(loss)
}

/// One shuffled mini-batch epoch of plain SGD. Returns the mean training
/// loss over the epoch.
pub fn run_epoch(
    params: &mut ModelParams,
    sequences: &[CheckinSequence],
    config: &TrainConfig,
    shuffle_rng: &mut ChaCha8Rng,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    order.shuffle(shuffle_rng);
    let mut grads = Gradients::zeros_like(params);
    let mut epoch_loss = 0.0;
    for batch in order.chunks(config.batch_size) {
        grads.reset();
        for &ix in batch {
            let mut dropout = DropoutState {
                rng: dropout_rng,
                rate: config.dropout,
            };
            let d = (config.dropout > 0.0).then_some(&mut dropout);
            epoch_loss += local_loss_grad(params, &sequences[ix].poi_ids, &mut grads, d)?;
        }
        params.step(&grads, -config.learning_rate / batch.len() as f64);
    }
    Ok(epoch_loss / sequences.len() as f64)
}

/// Mini-batch SGD for up to `max_epochs`; deterministic given `seed`.
pub fn train_local(
    params: &ModelParams,
    sequences: &[CheckinSequence],
    config: &TrainConfig,
    seed: u64,
) -> Result<ModelParams> {
    config.validate()?;
    if sequences.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    for s in sequences {
        if s.len() < 2 {
            return Err(Error::invalid("training sequences need length >= 2"));
        }
    }
    let mut params = params.clone();
    let mut shuffle_rng = rng::stream(seed, "train-shuffle", &[]);
    let mut dropout_rng = rng::stream(seed, "train-dropout", &[]);
    for epoch in 0..config.max_epochs {
        let loss = run_epoch(&mut params, sequences, config, &mut shuffle_rng, &mut dropout_rng)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                what: "local training",
                epoch,
            });
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recsys::model::init_model;
    use crate::recsys::InitSpec;
    use ndarray::Array1;
    use rand::Rng;

    fn seqs(v: &[&[PoiId]]) -> Vec<CheckinSequence> {
        v.iter()
            .map(|ids| CheckinSequence::new(Some(0), ids.to_vec()).unwrap())
            .collect()
    }

    #[test]
    fn uniform_model_loss_is_log_poi_count() {
        let params = ModelParams::zeros(64, 8);
        let loss = local_loss(&params, &[1, 2, 3]).unwrap();
        assert!((loss - (64.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn length_one_sequence_is_rejected() {
        let params = ModelParams::zeros(10, 8);
        assert!(local_loss(&params, &[3]).is_err());
    }

    #[test]
    fn near_one_probabilities_give_near_zero_loss_and_gradient() {
        // Scores: target row strongly aligned with the feature, the rest
        // strongly anti-aligned, so every step predicts its target with
        // probability ~1 and both the loss and its gradient vanish.
        let mut params = ModelParams::zeros(6, 8);
        for p in 0..6 {
            params.embeddings[[p, 0]] = -100.0;
        }
        params.embeddings[[0, 0]] = 1.0; // only POI 0 appears in the prefix
        params.embeddings[[1, 0]] = 100.0; // target row
        let loss = local_loss(&params, &[0, 1]).unwrap();
        assert!(loss < 1e-8, "loss {loss}");
        let mut grads = Gradients::zeros_like(&params);
        local_loss_grad(&params, &[0, 1], &mut grads, None).unwrap();
        let max = grads
            .embeddings
            .iter()
            .chain(grads.query_weights.iter())
            .chain(grads.key_weights.iter())
            .chain(grads.position_weights.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(max < 1e-6, "max grad {max}");
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_probes() {
        let params = init_model(30, 8, &InitSpec::new(13)).unwrap();
        let seq = [2, 17, 9, 2, 25, 11];
        let mut grads = Gradients::zeros_like(&params);
        local_loss_grad(&params, &seq, &mut grads, None).unwrap();

        let mut rng = crate::rng::stream(41, "fd-ce", &[]);
        for _ in 0..20 {
            let group = rng.random_range(0..4usize);
            let (rows, cols) = match group {
                0 => params.embeddings.dim(),
                1 => params.query_weights.dim(),
                2 => params.key_weights.dim(),
                _ => (seq.len(), params.position_weights.ncols()),
            };
            let (r, c) = (rng.random_range(0..rows), rng.random_range(0..cols));
            let eps = 1e-5;
            let mut plus = params.clone();
            let mut minus = params.clone();
            match group {
                0 => {
                    plus.embeddings[[r, c]] += eps;
                    minus.embeddings[[r, c]] -= eps;
                }
                1 => {
                    plus.query_weights[[r, c]] += eps;
                    minus.query_weights[[r, c]] -= eps;
                }
                2 => {
                    plus.key_weights[[r, c]] += eps;
                    minus.key_weights[[r, c]] -= eps;
                }
                _ => {
                    plus.position_weights[[r, c]] += eps;
                    minus.position_weights[[r, c]] -= eps;
                }
            }
            let fd = (local_loss(&plus, &seq).unwrap() - local_loss(&minus, &seq).unwrap())
                / (2.0 * eps);
            let an = match group {
                0 => grads.embeddings[[r, c]],
                1 => grads.query_weights[[r, c]],
                2 => grads.key_weights[[r, c]],
                _ => grads.position_weights[[r, c]],
            };
            let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-8);
            assert!(rel < 1e-4, "group {group} [{r},{c}]: fd {fd} vs analytic {an}");
        }
    }

    #[test]
    fn unused_poi_rows_only_receive_the_output_term() {
        // POI 29 never appears in the sequence, so its embedding-row gradient
        // must equal the softmax-output term alone, which we recompute here
        // from per-step probabilities and features.
        let params = init_model(30, 8, &InitSpec::new(5)).unwrap();
        let seq = [1, 2, 3];
        let mut grads = Gradients::zeros_like(&params);
        local_loss_grad(&params, &seq, &mut grads, None).unwrap();

        let mut expect = Array1::<f64>::zeros(8);
        for t in 0..2 {
            let out = crate::recsys::model::forward(&params, &seq[..=t]).unwrap();
            expect.scaled_add(out.probs[29] / 2.0, &out.feature);
        }
        for (a, b) in grads.embeddings.row(29).iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let params = init_model(20, 8, &InitSpec::new(1)).unwrap();
        let data = seqs(&[&[1, 2, 3], &[4, 5, 6, 7]]);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let trained = train_local(&params, &data, &cfg, 9).unwrap();
        assert_eq!(trained, params);
    }

    #[test]
    fn training_is_deterministic_given_the_seed() {
        let params = init_model(20, 8, &InitSpec::new(1)).unwrap();
        let data = seqs(&[&[1, 2, 3, 4], &[4, 5, 6, 7], &[8, 9, 10]]);
        let cfg = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let a = train_local(&params, &data, &cfg, 77).unwrap();
        let b = train_local(&params, &data, &cfg, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_sequence_overfits_with_enough_epochs() {
        // Run-and-record fixture: 200 epochs at lr 0.05 on one 3-POI sequence
        // drives the loss below a tenth of its starting value.
        let params = init_model(500, 8, &InitSpec::new(2)).unwrap();
        let data = seqs(&[&[10, 250, 499]]);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 16,
            max_epochs: 200,
            dropout: 0.0,
        };
        let initial = local_loss(&params, &data[0].poi_ids).unwrap();
        let trained = train_local(&params, &data, &cfg, 3).unwrap();
        let final_loss = local_loss(&trained, &data[0].poi_ids).unwrap();
        assert!(
            final_loss < 0.1 * initial,
            "loss went {initial} -> {final_loss}"
        );
    }
}
