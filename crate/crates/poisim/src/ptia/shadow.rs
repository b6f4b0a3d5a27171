//! Shadow-model reconstruction from soft decisions.
//!
//! Under distillation the attacker never sees parameters, only the victim's
//! prediction vectors on the reference dataset. A fresh model is fitted to
//! reproduce them by minimizing the summed squared disagreement, which puts
//! the attacker in the same position as under model sharing, at the cost of
//! whatever the fit loses.

use ndarray::Array1;
use rand::seq::SliceRandom;

use crate::collab::{reference_hash, SoftDecisionSet};
use crate::error::Error;
use crate::geodata::CheckinSequence;
use crate::recsys::{
    forward, init_model, score_grad_full, softmax_vjp, Gradients, InitSpec, ModelParams,
};
use crate::rng;
use crate::Result;

/// Fitting schedule for shadow reconstruction.
#[derive(Debug, Clone, Copy)]
pub struct ShadowConfig {
    /// The attacker-side latent dimension; the victim's is unknown under
    /// distillation, so one width is used for every shadow.
    pub dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once the mean per-sequence squared error improves by less than
    /// this for `patience` consecutive epochs.
    pub min_improvement: f64,
    pub patience: usize,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        ShadowConfig {
            dim: 64,
            learning_rate: 10.0,
            batch_size: 16,
            max_epochs: 200,
            min_improvement: 1e-5,
            patience: 3,
        }
    }
}

/// Mean per-sequence squared disagreement with the target decisions.
pub fn shadow_mse(
    params: &ModelParams,
    reference: &[CheckinSequence],
    target: &SoftDecisionSet,
) -> Result<f64> {
    let mut total = 0.0;
    for (z, seq) in reference.iter().enumerate() {
        let probs = forward(params, &seq.poi_ids)?.probs;
        let diff = &probs - &target.probs.row(z);
        total += diff.dot(&diff);
    }
    Ok(total / reference.len() as f64)
}

/// Fit a shadow model to the victim's soft decisions.
pub fn build_shadow_model(
    soft: &SoftDecisionSet,
    reference: &[CheckinSequence],
    init: &InitSpec,
    cfg: &ShadowConfig,
    seed: u64,
) -> Result<ModelParams> {
    if soft.reference_hash != reference_hash(reference) {
        return Err(Error::protocol(
            "soft decisions do not match the reference dataset",
        ));
    }
    if soft.probs.nrows() != reference.len() {
        return Err(Error::protocol("soft decision count mismatch"));
    }
    let poi_count = soft.probs.ncols();
    let mut params = init_model(poi_count, cfg.dim, init)?;
    let mut grads = Gradients::zeros_like(&params);
    let mut shuffle = rng::stream(seed, "shadow-shuffle", &[]);
    let mut order: Vec<usize> = (0..reference.len()).collect();

    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_mse = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.reset();
            for &z in batch {
                let out = forward(&params, &reference[z].poi_ids)?;
                let diff = &out.probs - &soft.probs.row(z);
                epoch_mse += diff.dot(&diff);
                let dprobs: Array1<f64> = diff * 2.0;
                let dscore = softmax_vjp(out.probs.view(), dprobs.view());
                score_grad_full(&params, &reference[z].poi_ids, dscore.view(), &mut grads)?;
            }
            params.step(&grads, -cfg.learning_rate / batch.len() as f64);
        }
        epoch_mse /= reference.len() as f64;
        if !epoch_mse.is_finite() {
            return Err(Error::Divergence {
                what: "shadow fitting",
                epoch,
            });
        }
        if best - epoch_mse < cfg.min_improvement {
            stalled += 1;
            if stalled >= cfg.patience {
                break;
            }
        } else {
            stalled = 0;
        }
        best = best.min(epoch_mse);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collab::emit_soft_decisions;
    use crate::recsys::{train_local, TrainConfig};

    fn seqs(v: &[&[usize]]) -> Vec<CheckinSequence> {
        v.iter()
            .map(|ids| CheckinSequence::new(None, ids.to_vec()).unwrap())
            .collect()
    }

    fn small_cfg() -> ShadowConfig {
        ShadowConfig {
            dim: 8,
            ..ShadowConfig::default()
        }
    }

    #[test]
    fn self_distillation_starts_at_the_floor() {
        // The victim is an untrained model with the same dimension and init
        // seed, so the shadow starts bit-identical and the loss starts at 0.
        let init = InitSpec::new(5);
        let victim = init_model(20, 8, &init).unwrap();
        let reference = seqs(&[&[1, 2, 3], &[4, 5], &[6, 7, 8]]);
        let soft = emit_soft_decisions(&victim, &reference).unwrap();
        let initial = shadow_mse(&victim, &reference, &soft).unwrap();
        assert_eq!(initial, 0.0);
        let shadowed = build_shadow_model(&soft, &reference, &init, &small_cfg(), 3).unwrap();
        let fitted = shadow_mse(&shadowed, &reference, &soft).unwrap();
        assert!(fitted <= 1e-12, "MSE {fitted}");
    }

    #[test]
    fn uniform_targets_keep_the_shadow_near_uniform() {
        let init = InitSpec::new(5);
        let reference = seqs(&[&[1, 2, 3], &[4, 5], &[6, 7, 8], &[0, 9]]);
        let n = 20;
        let soft = SoftDecisionSet {
            reference_hash: crate::collab::reference_hash(&reference),
            probs: ndarray::Array2::from_elem((4, n), 1.0 / n as f64),
        };
        let shadowed = build_shadow_model(&soft, &reference, &init, &small_cfg(), 3).unwrap();
        // Mean KL(shadow || uniform) over the reference stays tiny.
        let mut kl = 0.0;
        for seq in &reference {
            let probs = forward(&shadowed, &seq.poi_ids).unwrap().probs;
            kl += probs
                .iter()
                .map(|&p| p * (p * n as f64).max(1e-300).ln())
                .sum::<f64>();
        }
        kl /= reference.len() as f64;
        assert!(kl < 0.01, "KL {kl}");
    }

    #[test]
    fn trained_victim_is_reconstructed_to_a_tenth() {
        // A confidently trained victim at a different dimension: fitting
        // must cut the disagreement to at most 10% of its starting value.
        let init = InitSpec::new(7);
        let victim = init_model(25, 16, &init).unwrap();
        let favs = [1usize, 4, 7, 10, 13, 16, 19, 22];
        let data: Vec<CheckinSequence> = (0..6)
            .map(|i| {
                CheckinSequence::new(
                    None,
                    (0..20).map(|j| favs[(i + 2 * j) % favs.len()]).collect(),
                )
                .unwrap()
            })
            .collect();
        let victim = train_local(
            &victim,
            &data,
            &TrainConfig {
                learning_rate: 0.3,
                max_epochs: 60,
                dropout: 0.0,
                ..TrainConfig::default()
            },
            2,
        )
        .unwrap();
        let reference: Vec<CheckinSequence> = (0..5)
            .map(|i| {
                CheckinSequence::new(
                    None,
                    (0..10).map(|j| favs[(3 * i + j) % favs.len()]).collect(),
                )
                .unwrap()
            })
            .collect();
        let soft = emit_soft_decisions(&victim, &reference).unwrap();

        let shadow_init = init_model(25, 8, &init).unwrap();
        let initial = shadow_mse(&shadow_init, &reference, &soft).unwrap();
        let shadowed = build_shadow_model(&soft, &reference, &init, &small_cfg(), 4).unwrap();
        let fitted = shadow_mse(&shadowed, &reference, &soft).unwrap();
        assert!(
            fitted <= 0.1 * initial,
            "MSE went {initial} -> {fitted}, not a 10x cut"
        );
    }

    #[test]
    fn wrong_reference_is_a_protocol_error() {
        let init = InitSpec::new(5);
        let victim = init_model(20, 8, &init).unwrap();
        let reference = seqs(&[&[1, 2, 3]]);
        let other = seqs(&[&[3, 2, 1]]);
        let soft = emit_soft_decisions(&victim, &reference).unwrap();
        assert!(build_shadow_model(&soft, &other, &init, &small_cfg(), 0).is_err());
    }
}
