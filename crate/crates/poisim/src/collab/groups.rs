//! Neighbor-group formation.
//!
//! Users are grouped by Jaccard similarity of their visited-region sets: the
//! lowest-id unassigned user anchors a group and pulls in the most similar
//! unassigned users. Ties break by ascending user id, so formation is fully
//! deterministic. A trailing lone user joins the previous group rather than
//! forming a singleton; a singleton can only happen when the population
//! itself is a single user, and it is flagged.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geodata::{RegionId, UserId};
use crate::Result;

/// One per-round group assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborGroup {
    pub round: usize,
    pub members: Vec<UserId>,
    /// True only for the degenerate single-user population.
    pub degenerate: bool,
}

fn jaccard(a: &BTreeSet<RegionId>, b: &BTreeSet<RegionId>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Group users by region-set similarity for one round.
pub fn form_groups(
    users: &[(UserId, BTreeSet<RegionId>)],
    group_size: usize,
    round: usize,
) -> Result<Vec<NeighborGroup>> {
    if group_size < 2 {
        return Err(Error::invalid("group_size must be at least 2"));
    }
    if users.is_empty() {
        return Err(Error::invalid("no users to group"));
    }

    let mut order: Vec<usize> = (0..users.len()).collect();
    order.sort_by_key(|&i| users[i].0);
    let mut remaining: Vec<usize> = order;
    let mut groups: Vec<NeighborGroup> = Vec::new();

    while !remaining.is_empty() {
        let anchor = remaining.remove(0);
        let mut scored: Vec<(usize, f64)> = remaining
            .iter()
            .map(|&i| (i, jaccard(&users[anchor].1, &users[i].1)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(users[a.0].0.cmp(&users[b.0].0))
        });
        let take: Vec<usize> = scored
            .iter()
            .take(group_size - 1)
            .map(|&(i, _)| i)
            .collect();
        remaining.retain(|i| !take.contains(i));
        let mut members: Vec<UserId> = Some(anchor)
            .into_iter()
            .chain(take)
            .map(|i| users[i].0)
            .collect();
        members.sort_unstable();
        groups.push(NeighborGroup {
            round,
            members,
            degenerate: false,
        });
    }

    // A trailing lone user joins the previous group.
    if groups.len() >= 2 && groups.last().unwrap().members.len() == 1 {
        let lone = groups.pop().unwrap();
        let last = groups.last_mut().unwrap();
        last.members.extend(lone.members);
        last.members.sort_unstable();
    }
    if groups.len() == 1 && groups[0].members.len() == 1 {
        groups[0].degenerate = true;
    }
    Ok(groups)
}
