//! Leave-one-out hit ratio.
//!
//! The ground-truth POI competes against its nearest unvisited POIs (nearest
//! by haversine to the ground truth, which is the only per-instance
//! geographic referent). The model ranks the candidates from the user's
//! training prefix; a hit means the ground truth lands in the top k.

use std::collections::BTreeSet;

use crate::error::Error;
use crate::geodata::{haversine_km, PoiId, PoiRecord};
use crate::recsys::{forward, ModelParams};
use crate::Result;

/// Unvisited candidates ranked against the ground truth.
pub const CANDIDATE_COUNT: usize = 200;

/// One leave-one-out ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HitOutcome {
    pub hit: bool,
    /// True when fewer than [`CANDIDATE_COUNT`] unvisited POIs existed and
    /// all of them were used.
    pub short_candidates: bool,
}

/// Rank the ground truth among its nearest unvisited POIs.
pub fn hr_at_k(
    params: &ModelParams,
    train_prefix: &[PoiId],
    test_poi: PoiId,
    history: &BTreeSet<PoiId>,
    pois: &[PoiRecord],
    k: usize,
) -> Result<HitOutcome> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if test_poi >= pois.len() {
        return Err(Error::invalid(format!("test poi {test_poi} out of range")));
    }

    // Nearest unvisited POIs to the ground truth.
    let anchor = pois[test_poi].coords();
    let mut unvisited: Vec<(PoiId, f64)> = (0..pois.len())
        .filter(|p| !history.contains(p) && *p != test_poi)
        .map(|p| Ok((p, haversine_km(anchor, pois[p].coords())?)))
        .collect::<Result<_>>()?;
    unvisited.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    let short_candidates = unvisited.len() < CANDIDATE_COUNT;
    let mut candidates: Vec<PoiId> = unvisited
        .into_iter()
        .take(CANDIDATE_COUNT)
        .map(|(p, _)| p)
        .collect();
    candidates.push(test_poi);

    let scores = forward(params, train_prefix)?.scores;
    // Rank of the ground truth among candidates: higher score wins, ties
    // break by ascending id so the outcome is deterministic.
    let gt_score = scores[test_poi];
    let better = candidates
        .iter()
        .filter(|&&p| {
            scores[p] > gt_score || (scores[p] == gt_score && p < test_poi)
        })
        .count();
    Ok(HitOutcome {
        hit: better < k,
        short_candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recsys::{init_model, InitSpec, ModelParams};

    fn grid_world(n: usize) -> Vec<PoiRecord> {
        (0..n)
            .map(|i| {
                PoiRecord::new(i, 0, 0.01 * (i % 30) as f64, 0.01 * (i / 30) as f64).unwrap()
            })
            .collect()
    }

    #[test]
    fn top_scored_ground_truth_always_hits() {
        let pois = grid_world(300);
        let mut params = ModelParams::zeros(300, 8);
        // Prefix token embedding picks out the first coordinate; the ground
        // truth row scores highest.
        params.embeddings[[7, 0]] = 1.0;
        for p in 0..300 {
            if p != 42 && p != 7 {
                params.embeddings[[p, 0]] = -1.0;
            }
        }
        params.embeddings[[42, 0]] = 5.0;
        let history = BTreeSet::from([7]);
        let out = hr_at_k(&params, &[7], 42, &history, &pois, 1).unwrap();
        assert!(out.hit);
        assert!(!out.short_candidates);
    }

    #[test]
    fn random_scores_hit_at_the_exchangeable_rate() {
        // With i.i.d. random embedding rows the ground truth is exchangeable
        // with its 200 candidates, so HR@10 must approach 10/201. Binomial
        // std over 2000 trials is ~0.0049; a 3-sigma corridor is +-0.0146.
        let pois = grid_world(300);
        let mut hits = 0usize;
        let trials = 2000;
        for t in 0..trials {
            let params = init_model(300, 8, &InitSpec::new(1000 + t as u64)).unwrap();
            let gt = (17 * t + 3) % 300;
            let prefix = [(t * 7 + 1) % 300];
            let out = hr_at_k(&params, &prefix, gt, &BTreeSet::new(), &pois, 10).unwrap();
            if out.hit {
                hits += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        let expected = 10.0 / 201.0;
        assert!(
            (rate - expected).abs() < 0.0146,
            "rate {rate:.4} vs {expected:.4}"
        );
    }

    #[test]
    fn small_worlds_use_all_candidates_and_flag() {
        let pois = grid_world(50);
        let params = init_model(50, 8, &InitSpec::new(3)).unwrap();
        let out = hr_at_k(&params, &[1], 5, &BTreeSet::from([1]), &pois, 10).unwrap();
        assert!(out.short_candidates);
    }

    #[test]
    fn history_pois_never_compete() {
        // Every POI except the ground truth is history: the candidate list
        // degenerates to the ground truth alone, which therefore hits.
        let pois = grid_world(40);
        let params = init_model(40, 8, &InitSpec::new(4)).unwrap();
        let history: BTreeSet<PoiId> = (0..40).filter(|&p| p != 9).collect();
        let out = hr_at_k(&params, &[1], 9, &history, &pois, 1).unwrap();
        assert!(out.hit);
        assert!(out.short_candidates);
    }
}
