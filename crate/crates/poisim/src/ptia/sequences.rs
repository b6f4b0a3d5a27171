//! Shadow-sequence assembly.
//!
//! Real shadow sequences are anonymous prior-pool sequences containing the
//! target POI; the ones where the target sits closest to the end are
//! preferred, since the classifier's training features are anchored on the
//! final token. When the pool runs short, the remainder is fabricated by
//! taking an anonymous category sequence and assigning concrete POIs slot by
//! slot: the last slot matching the target's category holds the target, every
//! other slot gets a uniform sample of its category, and each consecutive
//! pair must lie within five kilometers (rejection sampling per slot).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::geodata::{
    haversine_km, CategoryId, CategorySequence, CheckinSequence, PoiId, PoiRecord, MAX_SEQ_LEN,
};
use crate::rng;
use crate::Result;

use super::ShadowSequenceSet;

/// Maximum distance between consecutive POIs in a fabricated sequence.
pub const SHADOW_STEP_KM: f64 = 5.0;

const SLOT_ATTEMPTS: usize = 1000;
const TEMPLATE_ATTEMPTS: usize = 10;

/// POI ids grouped by category.
pub fn category_index(pois: &[PoiRecord]) -> Vec<Vec<PoiId>> {
    let n_cats = pois.iter().map(|p| p.category_id + 1).max().unwrap_or(0);
    let mut index = vec![Vec::new(); n_cats];
    for p in pois {
        index[p.category_id].push(p.poi_id);
    }
    index
}

fn within_step(pois: &[PoiRecord], a: PoiId, b: PoiId) -> bool {
    haversine_km(pois[a].coords(), pois[b].coords())
        .map(|d| d < SHADOW_STEP_KM)
        .unwrap_or(false)
}

/// Fill one slot: a uniform draw from the category's POIs subject to the
/// step constraint against the already-placed neighbor.
fn fill_slot(
    candidates: &[PoiId],
    neighbor: PoiId,
    pois: &[PoiRecord],
    rng: &mut ChaCha8Rng,
) -> Option<PoiId> {
    if candidates.is_empty() {
        return None;
    }
    for _ in 0..SLOT_ATTEMPTS {
        let cand = candidates[rng.random_range(0..candidates.len())];
        if within_step(pois, neighbor, cand) {
            return Some(cand);
        }
    }
    None
}

/// Assign POIs to a category template so that the target holds its last
/// matching slot and the distance chain holds, working outward from the
/// target.
fn fabricate_from_template(
    template: &[CategoryId],
    target: PoiId,
    pois: &[PoiRecord],
    by_category: &[Vec<PoiId>],
    rng: &mut ChaCha8Rng,
) -> std::result::Result<Vec<PoiId>, (usize, String)> {
    let target_cat = pois[target].category_id;
    let anchor = template
        .iter()
        .rposition(|&c| c == target_cat)
        .ok_or((0, "no slot matches the target's category".to_string()))?;

    let mut filled = vec![usize::MAX; template.len()];
    filled[anchor] = target;
    for slot in anchor + 1..template.len() {
        let cands = by_category.get(template[slot]).map(Vec::as_slice).unwrap_or(&[]);
        filled[slot] = fill_slot(cands, filled[slot - 1], pois, rng).ok_or((
            slot,
            format!("no category-{} POI within {SHADOW_STEP_KM} km", template[slot]),
        ))?;
    }
    for slot in (0..anchor).rev() {
        let cands = by_category.get(template[slot]).map(Vec::as_slice).unwrap_or(&[]);
        filled[slot] = fill_slot(cands, filled[slot + 1], pois, rng).ok_or((
            slot,
            format!("no category-{} POI within {SHADOW_STEP_KM} km", template[slot]),
        ))?;
    }
    Ok(filled)
}

/// Collect up to `v` real shadow sequences for the target and fabricate the
/// rest from anonymous category sequences.
pub fn collect_shadow_sequences(
    prior_pool: &[CheckinSequence],
    category_pool: &[CategorySequence],
    target: PoiId,
    v: usize,
    pois: &[PoiRecord],
    seed: u64,
) -> Result<ShadowSequenceSet> {
    if v == 0 {
        return Err(Error::invalid("shadow sequence count must be at least 1"));
    }
    if target >= pois.len() {
        return Err(Error::invalid(format!("target poi {target} out of range")));
    }

    // Real sequences, preferring those with the target nearest the end.
    let mut with_target: Vec<(usize, usize)> = prior_pool
        .iter()
        .enumerate()
        .filter_map(|(ix, s)| {
            s.poi_ids
                .iter()
                .rposition(|&p| p == target)
                .map(|pos| (s.len() - 1 - pos, ix))
        })
        .collect();
    with_target.sort_unstable();
    let mut sequences: Vec<CheckinSequence> = with_target
        .iter()
        .take(v)
        .map(|&(_, ix)| prior_pool[ix].clone())
        .collect();

    if sequences.len() < v {
        let by_category = category_index(pois);
        let mut rng = rng::stream(seed, "shadow-fabricate", &[target as u64]);
        let mut last_err = (0usize, "no anonymous category sequences available".to_string());
        while sequences.len() < v {
            let mut fabricated = None;
            for _ in 0..TEMPLATE_ATTEMPTS {
                if category_pool.is_empty() {
                    break;
                }
                let template = &category_pool[rng.random_range(0..category_pool.len())];
                let len = template.category_ids.len().min(MAX_SEQ_LEN);
                match fabricate_from_template(
                    &template.category_ids[..len],
                    target,
                    pois,
                    &by_category,
                    &mut rng,
                ) {
                    Ok(ids) => {
                        fabricated = Some(ids);
                        break;
                    }
                    Err(e) => last_err = e,
                }
            }
            match fabricated {
                Some(ids) => sequences.push(CheckinSequence::new(None, ids)?),
                None => {
                    return Err(Error::Fabrication {
                        slot: last_err.0,
                        reason: last_err.1,
                    })
                }
            }
        }
    }

    Ok(ShadowSequenceSet { target, sequences })
}

/// A short deterministic probe for one POI: two fabricated context hops of
/// the POI's own category, ending at the POI. Falls back to a shorter probe
/// when the neighborhood cannot support the distance chain.
pub fn fabricate_probe(
    target: PoiId,
    pois: &[PoiRecord],
    by_category: &[Vec<PoiId>],
    seed: u64,
) -> Vec<PoiId> {
    let mut rng = rng::stream(seed, "probe", &[target as u64]);
    let cands: Vec<PoiId> = by_category
        .get(pois[target].category_id)
        .map(Vec::as_slice)
        .unwrap_or(&[])
        .iter()
        .copied()
        .filter(|&p| p != target)
        .collect();
    let mut probe = vec![target];
    for _ in 0..2 {
        match fill_slot(&cands, probe[0], pois, &mut rng) {
            Some(p) => probe.insert(0, p),
            None => break,
        }
    }
    probe
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::to_category_sequence;

    /// A 2-cluster world: categories alternate inside each cluster and the
    /// clusters are far beyond the step limit from each other.
    fn world() -> Vec<PoiRecord> {
        let mut pois = Vec::new();
        for i in 0..10 {
            // ~1.1 km spacing within the cluster.
            pois.push(PoiRecord::new(i, i % 2, 0.01 * i as f64, 0.0).unwrap());
        }
        for i in 0..10 {
            pois.push(PoiRecord::new(10 + i, i % 2, 3.0 + 0.01 * i as f64, 0.0).unwrap());
        }
        pois
    }

    fn seq(ids: &[PoiId]) -> CheckinSequence {
        CheckinSequence::new(None, ids.to_vec()).unwrap()
    }

    #[test]
    fn enough_pool_sequences_means_no_fabrication() {
        let pois = world();
        let pool = vec![seq(&[0, 2, 4]), seq(&[4, 6]), seq(&[1, 4, 3])];
        let set = collect_shadow_sequences(&pool, &[], 4, 2, &pois, 0).unwrap();
        assert_eq!(set.len(), 2);
        // The sequence ending at the target comes first; the tie between the
        // other two (target one slot from the end) breaks by pool order.
        assert_eq!(set.sequences[0], pool[0]);
        assert_eq!(set.sequences[1], pool[1]);
        assert!(set.sequences.iter().all(|s| s.poi_ids.contains(&4)));
    }

    #[test]
    fn fabricated_sequences_satisfy_the_constraints() {
        let pois = world();
        let pool = vec![seq(&[0, 1, 2, 3, 0])];
        let cat_pool: Vec<CategorySequence> = pool
            .iter()
            .map(|s| to_category_sequence(s, &pois).unwrap())
            .collect();
        let set = collect_shadow_sequences(&pool, &cat_pool, 6, 4, &pois, 9).unwrap();
        assert_eq!(set.len(), 4);
        for s in &set.sequences {
            assert!(s.poi_ids.contains(&6), "target missing in {:?}", s.poi_ids);
            for w in s.poi_ids.windows(2) {
                let d = haversine_km(pois[w[0]].coords(), pois[w[1]].coords()).unwrap();
                assert!(d < SHADOW_STEP_KM, "step {d} km");
            }
        }
        // Fabricated sequences preserve the template's categories.
        let fabricated = &set.sequences[1];
        let cats = to_category_sequence(fabricated, &pois).unwrap();
        assert_eq!(cats, cat_pool[0]);
    }

    #[test]
    fn fabrication_without_matching_category_fails_with_the_slot() {
        let mut pois = world();
        pois.push(PoiRecord::new(20, 7, 0.05, 0.0).unwrap()); // lone category
        let cat_pool = vec![CategorySequence {
            category_ids: vec![0, 1, 0],
        }];
        match collect_shadow_sequences(&[], &cat_pool, 20, 1, &pois, 3) {
            Err(Error::Fabrication { .. }) => {}
            other => panic!("expected fabrication error, got {other:?}"),
        }
    }

    #[test]
    fn distance_impossible_fabrication_reports_the_blocking_slot() {
        // The target lives in the far cluster; the template demands a chain
        // through categories that only exist in the near cluster.
        let mut pois = Vec::new();
        pois.push(PoiRecord::new(0, 0, 0.0, 0.0).unwrap());
        pois.push(PoiRecord::new(1, 1, 3.0, 0.0).unwrap()); // ~330 km away
        let cat_pool = vec![CategorySequence {
            category_ids: vec![0, 1],
        }];
        match collect_shadow_sequences(&[], &cat_pool, 1, 1, &pois, 3) {
            Err(Error::Fabrication { slot, .. }) => assert_eq!(slot, 0),
            other => panic!("expected fabrication error, got {other:?}"),
        }
    }

    #[test]
    fn zero_v_is_rejected() {
        let pois = world();
        assert!(collect_shadow_sequences(&[], &[], 0, 0, &pois, 0).is_err());
    }

    #[test]
    fn probes_end_at_the_target_and_respect_the_chain() {
        let pois = world();
        let index = category_index(&pois);
        for target in [0, 5, 13] {
            let probe = fabricate_probe(target, &pois, &index, 4);
            assert_eq!(*probe.last().unwrap(), target);
            assert_eq!(probe.len(), 3);
            for w in probe.windows(2) {
                let d = haversine_km(pois[w[0]].coords(), pois[w[1]].coords()).unwrap();
                assert!(d < SHADOW_STEP_KM);
            }
            // Context hops share the target's category.
            for &p in &probe[..2] {
                assert_eq!(pois[p].category_id, pois[target].category_id);
            }
        }
    }

    #[test]
    fn probe_falls_back_when_isolated() {
        let pois = vec![
            PoiRecord::new(0, 0, 0.0, 0.0).unwrap(),
            PoiRecord::new(1, 0, 3.0, 0.0).unwrap(),
        ];
        let index = category_index(&pois);
        // The only same-category peer is out of range, so no context hop fits.
        let probe = fabricate_probe(0, &pois, &index, 1);
        assert_eq!(probe, vec![0]);
    }
}
