//! Attack F1 with the region-zero rule, and the sensitive-POI variant.

use std::collections::BTreeSet;

use crate::defend::SensitivePoiSet;
use crate::error::Error;
use crate::geodata::{PoiId, RegionId, RegionMap};
use crate::Result;

/// How the region-zero rule aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Mode {
    /// F1 per truly-visited region (zero for undetected regions), averaged
    /// over the user's visited regions.
    #[default]
    PerRegionMean,
    /// One global F1 with predictions gated to detected regions.
    GlobalGated,
}

fn f1(tp: usize, n_pred: usize, n_true: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / n_pred as f64;
    let recall = tp as f64 / n_true as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Attack F1 for one user.
pub fn attack_f1(
    predicted: &BTreeSet<PoiId>,
    true_visited: &BTreeSet<PoiId>,
    region_map: &RegionMap,
    detected_regions: &[RegionId],
    mode: F1Mode,
) -> Result<f64> {
    if true_visited.is_empty() {
        return Err(Error::invalid("user with no visits is excluded from attack F1"));
    }
    match mode {
        F1Mode::PerRegionMean => {
            let visited_regions = region_map.regions_of(true_visited.iter().copied());
            let mut total = 0.0;
            for &r in &visited_regions {
                if !detected_regions.contains(&r) {
                    continue; // contributes 0
                }
                let pred_r: BTreeSet<PoiId> = predicted
                    .iter()
                    .copied()
                    .filter(|&p| region_map.region_of(p) == r)
                    .collect();
                let true_r: BTreeSet<PoiId> = true_visited
                    .iter()
                    .copied()
                    .filter(|&p| region_map.region_of(p) == r)
                    .collect();
                let tp = pred_r.intersection(&true_r).count();
                total += f1(tp, pred_r.len(), true_r.len());
            }
            Ok(total / visited_regions.len() as f64)
        }
        F1Mode::GlobalGated => {
            let gated: BTreeSet<PoiId> = predicted
                .iter()
                .copied()
                .filter(|&p| detected_regions.contains(&region_map.region_of(p)))
                .collect();
            let tp = gated.intersection(true_visited).count();
            Ok(f1(tp, gated.len(), true_visited.len()))
        }
    }
}

/// F1 restricted to the sensitive POIs: they are the positive class and only
/// predictions about them count, so the score reduces to `2r / (1 + r)` in
/// terms of sensitive recall.
pub fn sensitive_f1(predicted: &BTreeSet<PoiId>, sensitive: &SensitivePoiSet) -> Result<f64> {
    if sensitive.is_empty() {
        return Err(Error::invalid("sensitive F1 is undefined for an empty set"));
    }
    let hidden: BTreeSet<PoiId> = sensitive.poi_ids.iter().copied().collect();
    let tp = predicted.intersection(&hidden).count();
    Ok(f1(tp, tp, hidden.len()))
}
