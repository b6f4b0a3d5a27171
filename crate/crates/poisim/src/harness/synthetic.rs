//! Synthetic check-in worlds with planted ground truth.
//!
//! Regions are planted far apart on a ring, POIs scatter tightly around
//! their region center, and every user walks a personal favorite set inside
//! two preferred regions. Favorites are dealt round-robin per region so that
//! every POI collects enough interactions to survive filtering and to appear
//! in both anonymous pools. Walk steps stay inside the five-kilometer chain
//! the shadow fabricator assumes.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geodata::{haversine_km, Coordinates, RawCheckin};
use crate::rng;
use crate::Result;

/// World-shape knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorldSpec {
    pub users: usize,
    pub pois: usize,
    pub regions: usize,
    pub categories: usize,
    /// Preferred regions per user.
    pub regions_per_user: usize,
    /// Share of sequences landing in the user's first preferred region.
    pub major_share: f64,
    /// Inclusive range of sequences per user.
    pub seqs_per_user: (usize, usize),
    /// Inclusive range of sequence lengths.
    pub seq_len: (usize, usize),
    pub favorites_per_region: usize,
    pub seed: u64,
}

impl Default for SyntheticWorldSpec {
    fn default() -> Self {
        SyntheticWorldSpec {
            users: 50,
            pois: 500,
            regions: 5,
            categories: 10,
            regions_per_user: 2,
            major_share: 0.6,
            seqs_per_user: (12, 16),
            seq_len: (25, 40),
            favorites_per_region: 12,
            seed: 7,
        }
    }
}

impl SyntheticWorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0
            || self.pois == 0
            || self.regions == 0
            || self.categories == 0
            || self.favorites_per_region == 0
        {
            return Err(Error::Config("synthetic spec needs positive counts".into()));
        }
        if self.regions > self.pois {
            return Err(Error::Config("more regions than POIs".into()));
        }
        if self.regions_per_user == 0 || self.regions_per_user > self.regions {
            return Err(Error::Config("regions_per_user out of range".into()));
        }
        if !(0.0..=1.0).contains(&self.major_share) {
            return Err(Error::Config("major_share must lie in [0, 1]".into()));
        }
        if self.seqs_per_user.0 > self.seqs_per_user.1
            || self.seq_len.0 < 3
            || self.seq_len.0 > self.seq_len.1
        {
            return Err(Error::Config("bad sequence ranges".into()));
        }
        Ok(())
    }
}

/// Ground truth recorded alongside the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub rows: Vec<SyntheticRow>,
    /// Planted preferred regions per user, major region first.
    pub preferred_regions: BTreeMap<String, Vec<usize>>,
    /// Every POI the user's walks emitted.
    pub visited: BTreeMap<String, Vec<String>>,
}

/// One check-in row before CSV encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRow {
    pub user: String,
    pub poi: String,
    pub category: String,
    pub lat: f64,
    pub lon: f64,
    pub timestamp: String,
}

impl SyntheticRow {
    pub fn to_raw(&self) -> Result<RawCheckin> {
        Ok(RawCheckin {
            user: self.user.clone(),
            poi: self.poi.clone(),
            category: self.category.clone(),
            lat: self.lat,
            lon: self.lon,
            timestamp: chrono::NaiveDateTime::parse_from_str(&self.timestamp, "%Y-%m-%dT%H:%M:%S")
                .map_err(|e| Error::Format(format!("bad generated timestamp: {e}")))?
                .and_utc(),
        })
    }
}

const ANCHOR_LAT: f64 = 40.0;
const ANCHOR_LON: f64 = -80.0;
const RING_RADIUS_KM: f64 = 25.0;
const SCATTER_KM: f64 = 1.2;
const WALK_STEP_KM: f64 = 5.0;
/// Distinct preferred-region combinations repeat across users, giving the
/// neighbor grouping something to find.
const SESSION_START_HOUR: i64 = 9;

fn km_to_lat_deg(km: f64) -> f64 {
    km / 111.19
}

fn km_to_lon_deg(km: f64, lat: f64) -> f64 {
    km / (111.19 * lat.to_radians().cos())
}

/// Generate the world. Deterministic: the same spec yields byte-identical
/// rows.
pub fn gen_synthetic(spec: &SyntheticWorldSpec) -> Result<SyntheticWorld> {
    spec.validate()?;
    let mut poi_rng = rng::stream(spec.seed, "world-pois", &[]);

    // Region centers on a ring, POIs scattered around them.
    let centers: Vec<Coordinates> = (0..spec.regions)
        .map(|r| {
            let angle = 2.0 * std::f64::consts::PI * r as f64 / spec.regions as f64;
            Coordinates {
                lat: ANCHOR_LAT + km_to_lat_deg(RING_RADIUS_KM) * angle.sin(),
                lon: ANCHOR_LON + km_to_lon_deg(RING_RADIUS_KM, ANCHOR_LAT) * angle.cos(),
            }
        })
        .collect();
    let mut poi_region = Vec::with_capacity(spec.pois);
    let mut poi_coords: Vec<Coordinates> = Vec::with_capacity(spec.pois);
    let mut poi_category = Vec::with_capacity(spec.pois);
    for p in 0..spec.pois {
        let r = p % spec.regions;
        let c = centers[r];
        poi_region.push(r);
        poi_coords.push(Coordinates {
            lat: c.lat + km_to_lat_deg(SCATTER_KM) * sample_std_normal(&mut poi_rng),
            lon: c.lon + km_to_lon_deg(SCATTER_KM, ANCHOR_LAT) * sample_std_normal(&mut poi_rng),
        });
        poi_category.push(poi_rng.random_range(0..spec.categories));
    }

    // Preferred-region combinations cycle over users so that several users
    // share each combination, giving the neighbor grouping something to
    // find; favorites are dealt from per-region shuffled decks, cycling so
    // every POI is dealt roughly equally often.
    let combo_of = |u: usize| -> Vec<usize> {
        let major = u % spec.regions;
        let stride = 1 + (u / spec.regions) % spec.regions.saturating_sub(1).max(1);
        let mut combo = vec![major];
        for j in 1..spec.regions {
            let cand = (major + j * stride) % spec.regions;
            if combo.len() < spec.regions_per_user && !combo.contains(&cand) {
                combo.push(cand);
            }
        }
        for cand in 0..spec.regions {
            if combo.len() < spec.regions_per_user && !combo.contains(&cand) {
                combo.push(cand);
            }
        }
        combo
    };

    let mut decks: Vec<Vec<usize>> = (0..spec.regions)
        .map(|r| {
            let mut deck: Vec<usize> = (0..spec.pois).filter(|&p| poi_region[p] == r).collect();
            deck.shuffle(&mut poi_rng);
            deck
        })
        .collect();
    let mut deck_cursor = vec![0usize; spec.regions];
    let mut deal = |r: usize, n: usize| -> Vec<usize> {
        let deck = &mut decks[r];
        let mut out = Vec::with_capacity(n);
        for _ in 0..n.min(deck.len()) {
            out.push(deck[deck_cursor[r] % deck.len()]);
            deck_cursor[r] += 1;
        }
        out
    };

    let mut rows = Vec::new();
    let mut preferred_regions = BTreeMap::new();
    let mut visited: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let base_date = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();

    for u in 0..spec.users {
        let mut user_rng = rng::stream(spec.seed, "world-user", &[u as u64]);
        let user_key = format!("u{u:03}");
        let combo = combo_of(u);
        let favorites: Vec<Vec<usize>> = combo
            .iter()
            .map(|&r| deal(r, spec.favorites_per_region))
            .collect();
        preferred_regions.insert(user_key.clone(), combo.clone());

        let n_seqs = user_rng.random_range(spec.seqs_per_user.0..=spec.seqs_per_user.1);
        let mut seen = Vec::new();
        for s in 0..n_seqs {
            // Pick the region of this session by affinity.
            let slot = if combo.len() == 1 || user_rng.random::<f64>() < spec.major_share {
                0
            } else {
                1 + user_rng.random_range(0..combo.len() - 1)
            };
            let favs = &favorites[slot];
            let len = user_rng.random_range(spec.seq_len.0..=spec.seq_len.1);
            let date = base_date + Duration::days(s as i64);
            let mut current = favs[user_rng.random_range(0..favs.len())];
            for j in 0..len {
                let timestamp = date.and_hms_opt(SESSION_START_HOUR as u32, 0, 0).unwrap()
                    + Duration::minutes(18 * j as i64);
                rows.push(SyntheticRow {
                    user: user_key.clone(),
                    poi: format!("p{current:04}"),
                    category: format!("c{:02}", poi_category[current]),
                    lat: poi_coords[current].lat,
                    lon: poi_coords[current].lon,
                    timestamp: timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
                });
                seen.push(format!("p{current:04}"));
                if j + 1 == len {
                    break;
                }
                // Next favorite within walking range of the current one.
                let reachable: Vec<usize> = favs
                    .iter()
                    .copied()
                    .filter(|&q| {
                        q != current
                            && haversine_km(poi_coords[current], poi_coords[q])
                                .map(|d| d < WALK_STEP_KM)
                                .unwrap_or(false)
                    })
                    .collect();
                current = if reachable.is_empty() {
                    current
                } else {
                    reachable[user_rng.random_range(0..reachable.len())]
                };
            }
        }
        seen.sort_unstable();
        seen.dedup();
        visited.insert(user_key, seen);
    }

    Ok(SyntheticWorld {
        rows,
        preferred_regions,
        visited,
    })
}

fn sample_std_normal(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Encode rows as the ingestion CSV format.
pub fn write_checkin_csv(w: &mut impl Write, rows: &[SyntheticRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["user_id", "poi_id", "category", "lat", "lon", "timestamp"])?;
    for r in rows {
        writer.write_record([
            r.user.as_str(),
            r.poi.as_str(),
            r.category.as_str(),
            &format!("{:.6}", r.lat),
            &format!("{:.6}", r.lon),
            r.timestamp.as_str(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticWorldSpec {
        SyntheticWorldSpec {
            users: 20,
            pois: 100,
            regions: 4,
            categories: 5,
            seqs_per_user: (6, 8),
            seq_len: (10, 20),
            favorites_per_region: 8,
            seed: 7,
            ..SyntheticWorldSpec::default()
        }
    }

    #[test]
    fn generation_is_byte_identical_across_runs() {
        let a = gen_synthetic(&spec()).unwrap();
        let b = gen_synthetic(&spec()).unwrap();
        assert_eq!(a, b);
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        write_checkin_csv(&mut csv_a, &a.rows).unwrap();
        write_checkin_csv(&mut csv_b, &b.rows).unwrap();
        assert_eq!(csv_a, csv_b);
    }

    #[test]
    fn single_region_world_plants_region_zero_for_everyone() {
        let mut s = spec();
        s.regions = 1;
        s.regions_per_user = 1;
        let world = gen_synthetic(&s).unwrap();
        for regions in world.preferred_regions.values() {
            assert_eq!(regions, &vec![0]);
        }
    }

    #[test]
    fn mean_sequence_length_tracks_the_spec() {
        let mut s = spec();
        s.users = 100;
        let world = gen_synthetic(&s).unwrap();
        // Group rows into sequences by (user, date).
        let mut lengths: BTreeMap<(String, String), usize> = BTreeMap::new();
        for r in &world.rows {
            let day = r.timestamp[..10].to_string();
            *lengths.entry((r.user.clone(), day)).or_insert(0) += 1;
        }
        let mean: f64 =
            lengths.values().map(|&l| l as f64).sum::<f64>() / lengths.len() as f64;
        let spec_mean = (s.seq_len.0 + s.seq_len.1) as f64 / 2.0;
        assert!(
            (mean - spec_mean).abs() / spec_mean < 0.05,
            "mean {mean} vs spec {spec_mean}"
        );
    }

    #[test]
    fn walks_stay_inside_the_step_limit() {
        let world = gen_synthetic(&spec()).unwrap();
        let mut by_user_day: BTreeMap<(String, String), Vec<&SyntheticRow>> = BTreeMap::new();
        for r in &world.rows {
            by_user_day
                .entry((r.user.clone(), r.timestamp[..10].to_string()))
                .or_default()
                .push(r);
        }
        for seq in by_user_day.values() {
            for w in seq.windows(2) {
                let d = haversine_km(
                    Coordinates {
                        lat: w[0].lat,
                        lon: w[0].lon,
                    },
                    Coordinates {
                        lat: w[1].lat,
                        lon: w[1].lon,
                    },
                )
                .unwrap();
                assert!(d < WALK_STEP_KM, "step {d} km");
            }
        }
    }

    #[test]
    fn every_poi_is_visited_by_someone() {
        let world = gen_synthetic(&spec()).unwrap();
        let mut seen: std::collections::BTreeSet<&String> = std::collections::BTreeSet::new();
        for v in world.visited.values() {
            seen.extend(v.iter());
        }
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn users_stick_to_their_preferred_regions() {
        let world = gen_synthetic(&spec()).unwrap();
        // POI p belongs to region p % regions by construction.
        for (user, visited) in &world.visited {
            let allowed = &world.preferred_regions[user];
            for poi in visited {
                let id: usize = poi[1..].parse().unwrap();
                assert!(allowed.contains(&(id % 4)));
            }
        }
    }
}
