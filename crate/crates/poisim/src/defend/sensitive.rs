//! Sensitive-POI sampling: users hide niche places, so the draw is weighted
//! by inverse global access frequency, without replacement.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::Error;
use crate::geodata::{PoiId, UserId};
use crate::rng;
use crate::Result;

use super::SensitivePoiSet;

/// Draw up to `g` POIs from the user's visited set with probability
/// proportional to `1 / global_frequency`. Deterministic per seed.
pub fn select_sensitive(
    user_id: UserId,
    visited: &BTreeSet<PoiId>,
    global_frequency: &[f64],
    g: usize,
    seed: u64,
) -> Result<SensitivePoiSet> {
    for &p in visited {
        let f = global_frequency
            .get(p)
            .copied()
            .ok_or_else(|| Error::invalid(format!("poi {p} missing from frequency table")))?;
        if f <= 0.0 {
            return Err(Error::invalid(format!(
                "poi {p} has non-positive global frequency {f}"
            )));
        }
    }

    let truncated = g > visited.len();
    let take = g.min(visited.len());
    let mut rng = rng::stream(seed, "sensitive", &[user_id as u64]);
    let mut candidates: Vec<PoiId> = visited.iter().copied().collect();
    let mut weights: Vec<f64> = candidates
        .iter()
        .map(|&p| 1.0 / global_frequency[p])
        .collect();

    let mut picked = Vec::with_capacity(take);
    for _ in 0..take {
        let total: f64 = weights.iter().sum();
        let mut target = rng.random_range(0.0..total);
        let mut chosen = candidates.len() - 1;
        for (i, &w) in weights.iter().enumerate() {
            if target < w {
                chosen = i;
                break;
            }
            target -= w;
        }
        picked.push(candidates.swap_remove(chosen));
        weights.swap_remove(chosen);
    }
    picked.sort_unstable();
    Ok(SensitivePoiSet {
        user_id,
        poi_ids: picked,
        truncated,
    })
}
