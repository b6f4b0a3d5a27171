//! Attack inputs and classifier training samples.

use ndarray::Array1;

use crate::error::Error;
use crate::geodata::CheckinSequence;
use crate::recsys::{forward, ModelParams};
use crate::Result;

use super::{AttackSample, ShadowSequenceSet};

/// The classifier input for one (user, POI) probe: the average final feature
/// of the user's model over the shadow sequences.
pub fn attack_input(params: &ModelParams, shadow: &ShadowSequenceSet) -> Result<Array1<f64>> {
    if shadow.is_empty() {
        return Err(Error::invalid("empty shadow sequence set"));
    }
    let mut mean = Array1::zeros(params.dim());
    for seq in &shadow.sequences {
        mean += &forward(params, &seq.poi_ids)?.feature;
    }
    mean /= shadow.len() as f64;
    Ok(mean)
}

/// Balanced training samples from a public model: the final-token feature of
/// each sequence the model trained on (label 1) and of an equal number of
/// sequences it never saw (label 0).
pub fn make_attack_samples(
    public_params: &ModelParams,
    member_seqs: &[CheckinSequence],
    nonmember_seqs: &[CheckinSequence],
) -> Result<Vec<AttackSample>> {
    if member_seqs.len() != nonmember_seqs.len() || member_seqs.is_empty() {
        return Err(Error::invalid(format!(
            "class imbalance: {} member vs {} non-member sequences",
            member_seqs.len(),
            nonmember_seqs.len()
        )));
    }
    let mut samples = Vec::with_capacity(2 * member_seqs.len());
    for (label, seqs) in [(1u8, member_seqs), (0u8, nonmember_seqs)] {
        for seq in seqs {
            samples.push(AttackSample {
                input: forward(public_params, &seq.poi_ids)?.feature,
                label,
            });
        }
    }
    Ok(samples)
}
