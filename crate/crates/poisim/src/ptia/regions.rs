//! Visited-region detection from embedding drift.
//!
//! Every model starts from the same known initial distribution. Training
//! moves the embedding rows of POIs it touches, so pooling a region's
//! embedding entries and measuring how far their fitted Gaussian sits from
//! the initial one scores the region's involvement.
//!
//! Marking walks the scores in descending order until they converge:
//! regions whose divergence never left the sampling-noise floor are
//! converged from the start, and among the rest the cut falls at the
//! largest log-scale gap (including the drop back to the floor). Log scale
//! keeps a strongly and a weakly visited region together when both sit far
//! above the noise. At least one region is always marked.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geodata::{RegionId, RegionMap};
use crate::recsys::{InitSpec, ModelParams};
use crate::Result;

const VARIANCE_FLOOR: f64 = 1e-12;

/// Divergence below this is indistinguishable from sampling noise for
/// regions of 50+ POIs.
const SIGNAL_FLOOR: f64 = 0.05;

/// One region's drift score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionScore {
    pub region_id: RegionId,
    /// Closed-form KL from the initial distribution to the fitted Gaussian.
    pub divergence: f64,
    /// True when the region had fewer than two POIs or a degenerate fit.
    pub flagged: bool,
}

/// Detection outcome: the marked regions plus all scores, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDetection {
    pub visited: Vec<RegionId>,
    pub scores: Vec<RegionScore>,
}

/// Score every region and mark the visited set.
pub fn detect_regions(
    params: &ModelParams,
    init: &InitSpec,
    region_map: &RegionMap,
) -> Result<RegionDetection> {
    if region_map.assignment.len() != params.poi_count() {
        return Err(Error::invalid(format!(
            "region map covers {} POIs, model has {}",
            region_map.assignment.len(),
            params.poi_count()
        )));
    }
    if region_map.k == 0 {
        return Err(Error::invalid("empty region map"));
    }

    let mut scores = Vec::with_capacity(region_map.k);
    for (region_id, members) in region_map.members().into_iter().enumerate() {
        // Pool all embedding entries of the region's POIs and fit a Gaussian.
        let n = (members.len() * params.dim()) as f64;
        let mut flagged = members.len() < 2;
        let divergence = if members.is_empty() {
            0.0
        } else {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for &p in &members {
                for &v in params.embeddings.row(p) {
                    sum += v;
                    sum_sq += v * v;
                }
            }
            let mean = sum / n;
            let mut var = sum_sq / n - mean * mean;
            if var < VARIANCE_FLOOR {
                var = VARIANCE_FLOOR;
                flagged = true;
            }
            // KL(N(m0, s0^2) || N(m1, s1^2)), closed form.
            let (m0, s0_sq) = (init.mean, init.std * init.std);
            (var / s0_sq).ln() / 2.0 + (s0_sq + (m0 - mean) * (m0 - mean)) / (2.0 * var) - 0.5
        };
        if !divergence.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite divergence for region {region_id}"
            )));
        }
        scores.push(RegionScore {
            region_id,
            divergence,
            flagged,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .divergence
            .partial_cmp(&scores[a].divergence)
            .unwrap()
            .then(scores[a].region_id.cmp(&scores[b].region_id))
    });
    let diverged = order
        .iter()
        .take_while(|&&i| scores[i].divergence >= SIGNAL_FLOOR)
        .count();

    let marked = if diverged == 0 {
        // Everything already converged: the forced minimum of one region.
        1
    } else {
        // Largest log-scale gap among the diverged prefix, counting the
        // drop back to the noise floor as the final gap.
        let log_d = |i: usize| scores[order[i]].divergence.max(VARIANCE_FLOOR).ln();
        let mut cut = diverged;
        let mut best_gap = f64::NEG_INFINITY;
        for i in 0..diverged {
            let below = if i + 1 < order.len() {
                log_d(i + 1)
            } else {
                VARIANCE_FLOOR.ln()
            };
            let gap = log_d(i) - below;
            if gap > best_gap {
                best_gap = gap;
                cut = i + 1;
            }
        }
        cut
    };
    let mut visited: Vec<RegionId> = order[..marked]
        .iter()
        .map(|&i| scores[i].region_id)
        .collect();
    visited.sort_unstable();

    Ok(RegionDetection { visited, scores })
}
