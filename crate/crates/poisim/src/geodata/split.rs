//! Attacker-prior / reference / evaluation splits.
//!
//! Both pools are anonymous, sized at 15% of the sequences each, and must
//! cover the whole POI universe. Coverage is established by greedily seeding
//! each pool with a small covering set (most novel POIs first) and filling
//! the remainder randomly; the paper-side constraint is only that the pools
//! are random subject to full coverage.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng;
use crate::Result;

use super::{CheckinSequence, PoiId, PoiRecord, UserId};

/// Fraction of sequences assigned to each anonymous pool.
pub const SPLIT_FRACTION: f64 = 0.15;

/// A retained sequence with leave-one-out markers: the last POI is the test
/// target, the second-to-last is validation, the rest is training data.
/// Sequences shorter than 3 are kept for training only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSequence {
    pub user_id: UserId,
    pub poi_ids: Vec<PoiId>,
}

impl EvalSequence {
    pub fn is_eval(&self) -> bool {
        self.poi_ids.len() >= 3
    }

    pub fn train_part(&self) -> &[PoiId] {
        if self.is_eval() {
            &self.poi_ids[..self.poi_ids.len() - 2]
        } else {
            &self.poi_ids
        }
    }

    pub fn validation(&self) -> Option<PoiId> {
        self.is_eval()
            .then(|| self.poi_ids[self.poi_ids.len() - 2])
    }

    pub fn test(&self) -> Option<PoiId> {
        self.is_eval().then(|| *self.poi_ids.last().unwrap())
    }
}

/// The three-way split of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplits {
    pub attacker_prior: Vec<CheckinSequence>,
    pub reference: Vec<CheckinSequence>,
    pub retained: Vec<EvalSequence>,
}

impl DatasetSplits {
    /// Users with at least one retained sequence, ascending.
    pub fn users(&self) -> Vec<UserId> {
        let set: BTreeSet<UserId> = self.retained.iter().map(|s| s.user_id).collect();
        set.into_iter().collect()
    }

    pub fn user_sequences(&self, user: UserId) -> Vec<&EvalSequence> {
        self.retained
            .iter()
            .filter(|s| s.user_id == user)
            .collect()
    }

    /// The user's local training sequences (train parts of length >= 2).
    pub fn training_sequences(&self, user: UserId) -> Vec<CheckinSequence> {
        self.user_sequences(user)
            .iter()
            .filter(|s| s.train_part().len() >= 2)
            .map(|s| CheckinSequence {
                user_id: Some(user),
                poi_ids: s.train_part().to_vec(),
            })
            .collect()
    }

    /// POIs present in the user's local training data. This is the ground
    /// truth the inference attack is scored against: it is exactly what the
    /// user's model was exposed to.
    pub fn visited_set(&self, user: UserId) -> BTreeSet<PoiId> {
        self.training_sequences(user)
            .iter()
            .flat_map(|s| s.poi_ids.iter().copied())
            .collect()
    }
}

fn greedy_cover(
    available: &[usize],
    sequences: &[CheckinSequence],
    universe: usize,
    pool: &'static str,
) -> Result<Vec<usize>> {
    let mut covered = vec![false; universe];
    let mut n_covered = 0usize;
    let mut chosen = Vec::new();
    let mut remaining: Vec<usize> = available.to_vec();

    while n_covered < universe {
        let mut best: Option<(usize, usize)> = None; // (novel count, index into remaining)
        for (slot, &ix) in remaining.iter().enumerate() {
            let novel = sequences[ix]
                .poi_ids
                .iter()
                .collect::<BTreeSet<_>>()
                .iter()
                .filter(|&&&p| !covered[p])
                .count();
            let better = match best {
                None => novel > 0,
                Some((b, _)) => novel > b,
            };
            if better {
                best = Some((novel, slot));
            }
        }
        match best {
            Some((_, slot)) => {
                let ix = remaining.remove(slot);
                for &p in &sequences[ix].poi_ids {
                    if !covered[p] {
                        covered[p] = true;
                        n_covered += 1;
                    }
                }
                chosen.push(ix);
            }
            None => {
                let uncoverable: Vec<PoiId> =
                    (0..universe).filter(|&p| !covered[p]).collect();
                return Err(Error::Coverage { pool, uncoverable });
            }
        }
    }
    Ok(chosen)
}

/// Split sequences into the attacker-prior pool, the reference pool, and the
/// retained evaluation set. Deterministic given `seed`.
pub fn split_dataset(
    sequences: &[CheckinSequence],
    pois: &[PoiRecord],
    seed: u64,
) -> Result<DatasetSplits> {
    let n = sequences.len();
    let universe = pois.len();
    let pool_size = (SPLIT_FRACTION * n as f64).round() as usize;
    if pool_size == 0 {
        return Err(Error::invalid(format!(
            "{n} sequences are too few to form 15% pools"
        )));
    }

    let mut rng = rng::stream(seed, "split", &[]);
    let mut available: Vec<usize> = (0..n).collect();
    let mut pools: Vec<Vec<usize>> = Vec::new();

    for pool_name in ["attacker_prior", "reference"] {
        let cover = greedy_cover(&available, sequences, universe, pool_name)?;
        if cover.len() > pool_size {
            return Err(Error::invalid(format!(
                "{pool_name} needs {} sequences to cover all POIs but the 15% budget is {pool_size}",
                cover.len()
            )));
        }
        let cover_set: BTreeSet<usize> = cover.iter().copied().collect();
        available.retain(|ix| !cover_set.contains(ix));
        let mut fill_from = available.clone();
        fill_from.shuffle(&mut rng);
        let mut pool = cover;
        pool.extend(fill_from.into_iter().take(pool_size - pool.len()));
        let pool_set: BTreeSet<usize> = pool.iter().copied().collect();
        available.retain(|ix| !pool_set.contains(ix));
        pool.sort_unstable();
        pools.push(pool);
    }

    let to_anonymous = |ixs: &[usize]| -> Vec<CheckinSequence> {
        ixs.iter().map(|&ix| sequences[ix].anonymized()).collect()
    };
    let reference = pools.pop().unwrap();
    let prior = pools.pop().unwrap();

    let retained = available
        .iter()
        .filter_map(|&ix| {
            sequences[ix].user_id.map(|u| EvalSequence {
                user_id: u,
                poi_ids: sequences[ix].poi_ids.clone(),
            })
        })
        .collect();

    Ok(DatasetSplits {
        attacker_prior: to_anonymous(&prior),
        reference: to_anonymous(&reference),
        retained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn poi(id: PoiId) -> PoiRecord {
        PoiRecord::new(id, 0, 0.0, 0.0).unwrap()
    }

    fn world(n_seqs: usize, n_pois: usize, seed: u64) -> (Vec<CheckinSequence>, Vec<PoiRecord>) {
        // Every POI appears in several sequences so both pools can cover.
        let mut rng = rng::stream(seed, "test-world", &[]);
        let pois: Vec<PoiRecord> = (0..n_pois).map(poi).collect();
        let seqs = (0..n_seqs)
            .map(|i| {
                let mut ids: Vec<PoiId> = (0..10).map(|_| rng.random_range(0..n_pois)).collect();
                ids.push(i % n_pois); // round-robin guarantees every POI occurs often
                CheckinSequence::new(Some(i / 4), ids).unwrap()
            })
            .collect();
        (seqs, pois)
    }

    fn poi_union(seqs: &[CheckinSequence]) -> BTreeSet<PoiId> {
        seqs.iter().flat_map(|s| s.poi_ids.iter().copied()).collect()
    }

    #[test]
    fn pools_cover_the_universe_on_a_200_sequence_set() {
        let (seqs, pois) = world(200, 40, 3);
        let splits = split_dataset(&seqs, &pois, 17).unwrap();
        let all: BTreeSet<PoiId> = (0..pois.len()).collect();
        assert_eq!(poi_union(&splits.attacker_prior), all);
        assert_eq!(poi_union(&splits.reference), all);
    }

    #[test]
    fn pool_sizes_are_fifteen_percent() {
        let (seqs, pois) = world(200, 40, 3);
        let splits = split_dataset(&seqs, &pois, 17).unwrap();
        assert_eq!(splits.attacker_prior.len(), 30);
        assert_eq!(splits.reference.len(), 30);
        assert_eq!(splits.retained.len(), 140);
    }

    #[test]
    fn single_covering_sequence_satisfies_the_constraint() {
        let pois: Vec<PoiRecord> = (0..5).map(poi).collect();
        let full: Vec<PoiId> = (0..5).collect();
        let mut seqs = vec![
            CheckinSequence::new(Some(0), full.clone()).unwrap(),
            CheckinSequence::new(Some(1), full.clone()).unwrap(),
            CheckinSequence::new(Some(2), full).unwrap(),
        ];
        for i in 0..17 {
            seqs.push(CheckinSequence::new(Some(3 + i), vec![i % 5]).unwrap());
        }
        let splits = split_dataset(&seqs, &pois, 5).unwrap();
        let all: BTreeSet<PoiId> = (0..5).collect();
        assert_eq!(poi_union(&splits.attacker_prior), all);
        assert_eq!(poi_union(&splits.reference), all);
    }

    #[test]
    fn pools_and_retained_are_disjoint_and_partition_the_input() {
        let (seqs, pois) = world(200, 40, 9);
        let splits = split_dataset(&seqs, &pois, 1).unwrap();
        assert_eq!(
            splits.attacker_prior.len() + splits.reference.len() + splits.retained.len(),
            seqs.len()
        );
        // Disjoint by sequence identity: counts of each poi-id vector match.
        let mut claimed: Vec<Vec<PoiId>> = Vec::new();
        claimed.extend(splits.attacker_prior.iter().map(|s| s.poi_ids.clone()));
        claimed.extend(splits.reference.iter().map(|s| s.poi_ids.clone()));
        claimed.extend(splits.retained.iter().map(|s| s.poi_ids.clone()));
        claimed.sort();
        let mut original: Vec<Vec<PoiId>> = seqs.iter().map(|s| s.poi_ids.clone()).collect();
        original.sort();
        assert_eq!(claimed, original);
    }

    #[test]
    fn pools_are_anonymous_and_retained_keep_users() {
        let (seqs, pois) = world(100, 20, 2);
        let splits = split_dataset(&seqs, &pois, 4).unwrap();
        assert!(splits.attacker_prior.iter().all(|s| s.user_id.is_none()));
        assert!(splits.reference.iter().all(|s| s.user_id.is_none()));
        assert!(!splits.retained.is_empty());
    }

    #[test]
    fn deterministic_given_seed() {
        let (seqs, pois) = world(120, 25, 8);
        let a = split_dataset(&seqs, &pois, 33).unwrap();
        let b = split_dataset(&seqs, &pois, 33).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unsatisfiable_coverage_names_the_poi() {
        // POI 4 appears in exactly one sequence: the prior pool claims it and
        // the reference pool cannot cover it any more.
        let pois: Vec<PoiRecord> = (0..5).map(poi).collect();
        let mut seqs = vec![CheckinSequence::new(Some(0), vec![0, 1, 2, 3, 4]).unwrap()];
        for i in 0..19 {
            seqs.push(CheckinSequence::new(Some(1 + i), vec![i % 4]).unwrap());
        }
        match split_dataset(&seqs, &pois, 0) {
            Err(Error::Coverage { pool, uncoverable }) => {
                assert_eq!(pool, "reference");
                assert_eq!(uncoverable, vec![4]);
            }
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn leave_one_out_markers() {
        let s = EvalSequence {
            user_id: 0,
            poi_ids: vec![5, 6, 7, 8],
        };
        assert_eq!(s.train_part(), &[5, 6]);
        assert_eq!(s.validation(), Some(7));
        assert_eq!(s.test(), Some(8));
        let short = EvalSequence {
            user_id: 0,
            poi_ids: vec![5, 6],
        };
        assert!(!short.is_eval());
        assert_eq!(short.train_part(), &[5, 6]);
        assert_eq!(short.test(), None);
    }
}
