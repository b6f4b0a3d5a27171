//! Check-in CSV ingestion.
//!
//! Expected format, header required:
//!
//! ```text
//! user_id,poi_id,category,lat,lon,timestamp
//! ```
//!
//! Timestamps are ISO-8601 (with or without a UTC offset). Rows are grouped
//! by user and sorted by timestamp; a user's stream is cut into sequences at
//! long time gaps and at the maximum sequence length. Only the resulting
//! order is retained downstream — the recommender does not consume absolute
//! time.

use std::collections::HashMap;
use std::io::Read;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::Deserialize;

use crate::error::Error;
use crate::Result;

use super::{CheckinSequence, PoiRecord, MAX_SEQ_LEN};

/// One parsed CSV row.
#[derive(Debug, Clone)]
pub struct RawCheckin {
    pub user: String,
    pub poi: String,
    pub category: String,
    pub lat: f64,
    pub lon: f64,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    user_id: String,
    poi_id: String,
    category: String,
    lat: f64,
    lon: f64,
    timestamp: String,
}

/// Sessionization knobs.
#[derive(Debug, Clone)]
pub struct IngestConfig {
    /// A gap of at least this many hours starts a new sequence.
    pub session_gap_hours: f64,
    pub max_seq_len: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            session_gap_hours: 8.0,
            max_seq_len: MAX_SEQ_LEN,
        }
    }
}

/// Ingested dataset with dense id spaces, before interaction filtering.
#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub pois: Vec<PoiRecord>,
    pub sequences: Vec<CheckinSequence>,
    pub user_keys: Vec<String>,
    pub poi_keys: Vec<String>,
    pub category_keys: Vec<String>,
}

fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Ok(t.and_utc());
    }
    Err(Error::Format(format!("unparseable timestamp {s:?}")))
}

/// Parse a check-in CSV. The header is mandatory and must name the columns.
pub fn read_checkin_csv<R: Read>(reader: R) -> Result<Vec<RawCheckin>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row?;
        out.push(RawCheckin {
            timestamp: parse_timestamp(&row.timestamp)?,
            user: row.user_id,
            poi: row.poi_id,
            category: row.category,
            lat: row.lat,
            lon: row.lon,
        });
    }
    Ok(out)
}

/// Build dense POI/user/category tables and sessionized sequences.
pub fn ingest_csv(rows: &[RawCheckin], cfg: &IngestConfig) -> Result<IngestOutcome> {
    if rows.is_empty() {
        return Err(Error::DatasetExhausted("empty check-in CSV".into()));
    }

    // Dense ids in order of first appearance; first occurrence fixes a POI's
    // coordinates and category.
    let mut user_ids: HashMap<&str, usize> = HashMap::new();
    let mut poi_ids: HashMap<&str, usize> = HashMap::new();
    let mut cat_ids: HashMap<&str, usize> = HashMap::new();
    let mut user_keys = Vec::new();
    let mut poi_keys = Vec::new();
    let mut category_keys = Vec::new();
    let mut pois: Vec<PoiRecord> = Vec::new();

    for r in rows {
        if !user_ids.contains_key(r.user.as_str()) {
            user_ids.insert(&r.user, user_keys.len());
            user_keys.push(r.user.clone());
        }
        if !poi_ids.contains_key(r.poi.as_str()) {
            let cat = *cat_ids.entry(&r.category).or_insert_with(|| {
                category_keys.push(r.category.clone());
                category_keys.len() - 1
            });
            let id = poi_keys.len();
            poi_ids.insert(&r.poi, id);
            poi_keys.push(r.poi.clone());
            pois.push(PoiRecord::new(id, cat, r.lon, r.lat)?);
        }
    }

    // Group rows by user, sort by timestamp (stable on input order).
    let mut per_user: Vec<Vec<(DateTime<Utc>, usize)>> = vec![Vec::new(); user_keys.len()];
    for (ix, r) in rows.iter().enumerate() {
        per_user[user_ids[r.user.as_str()]].push((r.timestamp, ix));
    }

    let gap = chrono::Duration::milliseconds((cfg.session_gap_hours * 3_600_000.0) as i64);
    let mut sequences = Vec::new();
    for (user, mut checkins) in per_user.into_iter().enumerate() {
        checkins.sort_by_key(|&(t, ix)| (t, ix));
        let mut current: Vec<usize> = Vec::new();
        let mut last_t: Option<DateTime<Utc>> = None;
        for (t, ix) in checkins {
            let new_session = match last_t {
                Some(prev) => t - prev >= gap,
                None => false,
            };
            if (new_session || current.len() >= cfg.max_seq_len) && !current.is_empty() {
                sequences.push(CheckinSequence::new(Some(user), std::mem::take(&mut current))?);
            }
            current.push(poi_ids[rows[ix].poi.as_str()]);
            last_t = Some(t);
        }
        if !current.is_empty() {
            sequences.push(CheckinSequence::new(Some(user), current)?);
        }
    }

    Ok(IngestOutcome {
        pois,
        sequences,
        user_keys,
        poi_keys,
        category_keys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "\
user_id,poi_id,category,lat,lon,timestamp
alice,cafe,food,48.85,2.35,2024-03-01T09:00:00+00:00
bob,museum,culture,48.86,2.34,2024-03-01T10:00:00+00:00
alice,park,outdoors,48.84,2.36,2024-03-01T09:30:00+00:00
alice,cafe,food,48.85,2.35,2024-03-02T09:00:00+00:00
";

    #[test]
    fn rows_group_by_user_and_sort_by_time() {
        let rows = read_checkin_csv(CSV.as_bytes()).unwrap();
        let out = ingest_csv(&rows, &IngestConfig::default()).unwrap();
        assert_eq!(out.user_keys, vec!["alice", "bob"]);
        assert_eq!(out.poi_keys, vec!["cafe", "museum", "park"]);
        // Alice's day one: cafe then park (sorted by time); day two splits off.
        let alice: Vec<_> = out
            .sequences
            .iter()
            .filter(|s| s.user_id == Some(0))
            .collect();
        assert_eq!(alice.len(), 2);
        assert_eq!(alice[0].poi_ids, vec![0, 2]);
        assert_eq!(alice[1].poi_ids, vec![0]);
    }

    #[test]
    fn naive_timestamps_are_accepted() {
        let csv = "\
user_id,poi_id,category,lat,lon,timestamp
u,p,c,1.0,2.0,2024-06-01T08:00:00
";
        let rows = read_checkin_csv(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn long_streams_split_at_max_len() {
        let mut csv = String::from("user_id,poi_id,category,lat,lon,timestamp\n");
        for i in 0..7 {
            csv.push_str(&format!("u,p{},c,1.0,2.0,2024-06-01T08:{:02}:00\n", i % 3, i));
        }
        let rows = read_checkin_csv(csv.as_bytes()).unwrap();
        let out = ingest_csv(
            &rows,
            &IngestConfig {
                session_gap_hours: 8.0,
                max_seq_len: 3,
            },
        )
        .unwrap();
        let lens: Vec<usize> = out.sequences.iter().map(|s| s.len()).collect();
        assert_eq!(lens, vec![3, 3, 1]);
    }

    #[test]
    fn bad_timestamp_is_a_format_error() {
        let csv = "\
user_id,poi_id,category,lat,lon,timestamp
u,p,c,1.0,2.0,yesterday
";
        assert!(matches!(
            read_checkin_csv(csv.as_bytes()),
            Err(Error::Format(_))
        ));
    }
}
