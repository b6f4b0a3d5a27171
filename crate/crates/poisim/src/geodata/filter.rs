//! Minimum-interaction filtering.
//!
//! Users with too few check-ins and POIs with too few occurrences are removed
//! alternately until a fixed point, then both index spaces are re-compacted.
//! Running to a fixed point (rather than a single pass) is required because
//! each removal can push other counts below the threshold.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::Result;

use super::{CheckinSequence, PoiId, PoiRecord, UserId};

/// Filtered dataset with compacted id spaces.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub pois: Vec<PoiRecord>,
    pub sequences: Vec<CheckinSequence>,
    /// Map from the input POI id to the compacted id, for surviving POIs.
    pub poi_map: BTreeMap<PoiId, PoiId>,
    /// Map from the input user id to the compacted id, for surviving users.
    pub user_map: BTreeMap<UserId, UserId>,
}

/// Alternately drop users with fewer than `min_count` check-ins and POIs with
/// fewer than `min_count` occurrences until nothing changes. Sequences whose
/// user disappears are dropped; removed POIs are deleted in place, shortening
/// their sequences. Sequences without a user id are exempt from the user rule
/// but still contribute POI occurrences.
pub fn filter_min_interactions(
    raw: &[CheckinSequence],
    pois: &[PoiRecord],
    min_count: usize,
) -> Result<FilterOutcome> {
    if min_count == 0 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    let mut seqs: Vec<CheckinSequence> = raw.to_vec();

    loop {
        // User pass.
        let mut user_counts: BTreeMap<UserId, usize> = BTreeMap::new();
        for s in &seqs {
            if let Some(u) = s.user_id {
                *user_counts.entry(u).or_insert(0) += s.len();
            }
        }
        let before = seqs.len();
        seqs.retain(|s| match s.user_id {
            Some(u) => user_counts[&u] >= min_count,
            None => true,
        });
        let users_changed = seqs.len() != before;

        // POI pass.
        let mut poi_counts: BTreeMap<PoiId, usize> = BTreeMap::new();
        for s in &seqs {
            for &p in &s.poi_ids {
                *poi_counts.entry(p).or_insert(0) += 1;
            }
        }
        let mut pois_changed = false;
        for s in seqs.iter_mut() {
            let before = s.poi_ids.len();
            s.poi_ids.retain(|p| poi_counts[p] >= min_count);
            if s.poi_ids.len() != before {
                pois_changed = true;
            }
        }
        seqs.retain(|s| !s.is_empty());

        if !users_changed && !pois_changed {
            break;
        }
    }

    if seqs.is_empty() {
        return Err(Error::DatasetExhausted(format!(
            "no sequences survive the {min_count}-interaction filter"
        )));
    }

    // Compact the surviving id spaces in ascending order of the old ids.
    let mut poi_map: BTreeMap<PoiId, PoiId> = BTreeMap::new();
    let mut user_map: BTreeMap<UserId, UserId> = BTreeMap::new();
    for s in &seqs {
        if let Some(u) = s.user_id {
            user_map.entry(u).or_insert(0);
        }
        for &p in &s.poi_ids {
            poi_map.entry(p).or_insert(0);
        }
    }
    for (next, (_, v)) in poi_map.iter_mut().enumerate() {
        *v = next;
    }
    for (next, (_, v)) in user_map.iter_mut().enumerate() {
        *v = next;
    }

    let new_pois: Vec<PoiRecord> = poi_map
        .keys()
        .map(|&old| {
            let mut rec = pois[old].clone();
            rec.poi_id = poi_map[&old];
            rec
        })
        .collect();
    let new_seqs: Vec<CheckinSequence> = seqs
        .into_iter()
        .map(|s| CheckinSequence {
            user_id: s.user_id.map(|u| user_map[&u]),
            poi_ids: s.poi_ids.iter().map(|p| poi_map[p]).collect(),
        })
        .collect();

    Ok(FilterOutcome {
        pois: new_pois,
        sequences: new_seqs,
        poi_map,
        user_map,
    })
}
