//! Metrics: hit ratio over geographic candidate sets and attack F1 with the
//! region-zero rule. All functions are pure and deterministic.

mod f1;
mod hitratio;

pub use f1::{attack_f1, sensitive_f1, F1Mode};
pub use hitratio::{hr_at_k, HitOutcome, CANDIDATE_COUNT};

use serde::{Deserialize, Serialize};

use crate::geodata::UserId;

/// Per-user metric record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEval {
    pub user_id: UserId,
    /// Mean over the user's evaluation instances; absent when the user has
    /// none.
    pub hit_ratio: Option<f64>,
    pub eval_instances: usize,
    pub attack_f1: Option<f64>,
    pub sensitive_f1: Option<f64>,
}

/// Mean of the present values; `None` when none are present.
pub fn mean_present(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values.flatten() {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}
