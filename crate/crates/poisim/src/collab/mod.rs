//! Decentralized collaboration protocols.
//!
//! Two ways users improve their local models, mirroring the two kinds of
//! shared artifacts an attacker can observe: model sharing exports the full
//! parameter set to the group, knowledge distillation exports only soft
//! decisions (prediction vectors) on a common reference dataset.
//!
//! Rounds are barriers: every member computes its export against the previous
//! round's state, then updates are applied.

mod groups;
mod rounds;

pub use groups::{form_groups, NeighborGroup};
pub use rounds::{aggregate_group, distill_round, emit_soft_decisions, share_models_round};

use std::io::{Read, Write};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::geodata::CheckinSequence;
use crate::recsys::snapshot;
use crate::Result;

/// A model's soft decisions on the reference dataset: one probability vector
/// per reference sequence. The content hash of the reference set is embedded
/// so that parties provably talk about the same data.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftDecisionSet {
    pub reference_hash: [u8; 32],
    /// Z × |P|; row z is the model's probability vector on reference
    /// sequence z.
    pub probs: Array2<f64>,
}

impl SoftDecisionSet {
    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }

    pub(crate) fn check_aligned(&self, other: &SoftDecisionSet) -> Result<()> {
        if self.reference_hash != other.reference_hash || self.probs.dim() != other.probs.dim() {
            return Err(Error::protocol(
                "soft decision sets refer to different reference datasets",
            ));
        }
        Ok(())
    }
}

/// Content hash of a reference dataset (lengths and POI ids, little-endian).
pub fn reference_hash(reference: &[CheckinSequence]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update((reference.len() as u64).to_le_bytes());
    for seq in reference {
        hasher.update((seq.len() as u64).to_le_bytes());
        for &p in &seq.poi_ids {
            hasher.update((p as u64).to_le_bytes());
        }
    }
    hasher.finalize().into()
}

/// Serialize a soft decision set in the snapshot format.
pub fn write_soft_decisions(w: &mut impl Write, set: &SoftDecisionSet) -> Result<()> {
    snapshot::write_header(w, snapshot::KIND_SOFT_DECISIONS)?;
    w.write_all(&set.reference_hash)?;
    snapshot::write_u64(w, set.probs.nrows() as u64)?;
    snapshot::write_u64(w, set.probs.ncols() as u64)?;
    snapshot::write_f64s(w, set.probs.iter())?;
    Ok(())
}

/// Deserialize a soft decision set.
pub fn read_soft_decisions(r: &mut impl Read) -> Result<SoftDecisionSet> {
    snapshot::read_header(r, snapshot::KIND_SOFT_DECISIONS)?;
    let mut reference_hash = [0u8; 32];
    r.read_exact(&mut reference_hash)?;
    let rows = snapshot::read_u64(r)? as usize;
    let cols = snapshot::read_u64(r)? as usize;
    let data = snapshot::read_f64s(r, rows * cols)?;
    let probs = Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Format(format!("bad soft decision shape: {e}")))?;
    Ok(SoftDecisionSet {
        reference_hash,
        probs,
    })
}
