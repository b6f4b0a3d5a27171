//! POI universe, trajectories, regions, and dataset splits.
//!
//! All types here are immutable after construction and safe to read from
//! concurrent workers; construction itself is single-threaded.

mod cluster;
mod filter;
mod geo;
mod ingest;
mod split;

pub use cluster::{cluster_regions, kmeans, KmeansOutcome};
pub use filter::filter_min_interactions;
pub use geo::{haversine_km, Coordinates};
pub use ingest::{ingest_csv, read_checkin_csv, IngestConfig, RawCheckin};
pub use split::{split_dataset, DatasetSplits, EvalSequence, SPLIT_FRACTION};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Dense POI index.
pub type PoiId = usize;
/// Dense user index.
pub type UserId = usize;
/// Dense category index.
pub type CategoryId = usize;
/// Region index produced by [`cluster_regions`].
pub type RegionId = usize;

/// Hard cap on sequence length; longer histories are split during ingestion.
pub const MAX_SEQ_LEN: usize = 200;

/// A point of interest with its category tag and coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRecord {
    pub poi_id: PoiId,
    pub category_id: CategoryId,
    pub lon: f64,
    pub lat: f64,
}

impl PoiRecord {
    pub fn new(poi_id: PoiId, category_id: CategoryId, lon: f64, lat: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::invalid(format!(
                "poi {poi_id}: coordinates ({lat}, {lon}) out of range"
            )));
        }
        Ok(PoiRecord {
            poi_id,
            category_id,
            lon,
            lat,
        })
    }

    pub fn coords(&self) -> Coordinates {
        Coordinates {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

/// A chronologically ordered check-in trajectory. Sequences that entered an
/// anonymous pool carry no user id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckinSequence {
    pub user_id: Option<UserId>,
    pub poi_ids: Vec<PoiId>,
}

impl CheckinSequence {
    pub fn new(user_id: Option<UserId>, poi_ids: Vec<PoiId>) -> Result<Self> {
        if poi_ids.is_empty() || poi_ids.len() > MAX_SEQ_LEN {
            return Err(Error::invalid(format!(
                "sequence length {} outside 1..={MAX_SEQ_LEN}",
                poi_ids.len()
            )));
        }
        Ok(CheckinSequence { user_id, poi_ids })
    }

    pub fn len(&self) -> usize {
        self.poi_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poi_ids.is_empty()
    }

    /// The same sequence with the user link severed.
    pub fn anonymized(&self) -> CheckinSequence {
        CheckinSequence {
            user_id: None,
            poi_ids: self.poi_ids.clone(),
        }
    }
}

/// A check-in sequence with every POI replaced by its category tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySequence {
    pub category_ids: Vec<CategoryId>,
}

/// Element-wise category substitution; output length equals input length.
pub fn to_category_sequence(x: &CheckinSequence, pois: &[PoiRecord]) -> Result<CategorySequence> {
    let category_ids = x
        .poi_ids
        .iter()
        .map(|&p| {
            pois.get(p)
                .map(|r| r.category_id)
                .ok_or_else(|| Error::invalid(format!("poi id {p} out of range")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CategorySequence { category_ids })
}

/// Assignment of every POI to exactly one geographic region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub k: usize,
    /// `assignment[poi_id]` is the region of that POI.
    pub assignment: Vec<RegionId>,
    /// Region centroids as (lon, lat) pairs.
    pub centroids: Vec<(f64, f64)>,
}

impl RegionMap {
    pub fn region_of(&self, poi: PoiId) -> RegionId {
        self.assignment[poi]
    }

    /// POI ids grouped by region, ascending within each region.
    pub fn members(&self) -> Vec<Vec<PoiId>> {
        let mut out = vec![Vec::new(); self.k];
        for (poi, &r) in self.assignment.iter().enumerate() {
            out[r].push(poi);
        }
        out
    }

    /// Distinct regions touched by a set of POIs, ascending.
    pub fn regions_of(&self, pois: impl IntoIterator<Item = PoiId>) -> Vec<RegionId> {
        let mut seen = vec![false; self.k];
        for p in pois {
            seen[self.assignment[p]] = true;
        }
        (0..self.k).filter(|&r| seen[r]).collect()
    }
}
