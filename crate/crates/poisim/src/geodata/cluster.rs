//! k-means with k-means++ seeding.
//!
//! The same routine clusters POI coordinates into regions (on raw
//! (lon, lat) degrees; at city scale the projection distortion does not
//! change memberships) and embedding rows for the 2-means attacker baseline.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::rng;
use crate::Result;

use super::{PoiRecord, RegionMap};

const MAX_ITERS: usize = 100;

/// Result of a k-means run over arbitrary-dimensional points.
#[derive(Debug, Clone)]
pub struct KmeansOutcome {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Per-cluster sum of squared distances to the centroid.
    pub sse: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first centroid uniform, later ones proportional to
/// squared distance from the nearest chosen centroid.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All mass already covered; fall back to a uniform pick.
            rng.random_range(0..points.len())
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, centroids.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// Lloyd iterations until assignments stabilize or [`MAX_ITERS`] passes.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KmeansOutcome> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if points.len() < k {
        return Err(Error::invalid(format!(
            "{} points cannot form {k} clusters",
            points.len()
        )));
    }
    let dim = points[0].len();
    let mut rng = rng::stream(seed, "kmeans", &[k as u64]);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignment = vec![usize::MAX; points.len()];

    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, x) in sums[assignment[i]].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centroids[c] = sums[c].clone();
            }
            // Empty clusters keep their previous centroid.
        }
    }

    let mut sse = vec![0.0; k];
    for (i, p) in points.iter().enumerate() {
        sse[assignment[i]] += sq_dist(p, &centroids[assignment[i]]);
    }
    Ok(KmeansOutcome {
        assignment,
        centroids,
        sse,
    })
}

/// Cluster POIs into `k` geographic regions.
pub fn cluster_regions(pois: &[PoiRecord], k: usize, seed: u64) -> Result<RegionMap> {
    let points: Vec<Vec<f64>> = pois.iter().map(|p| vec![p.lon, p.lat]).collect();
    let out = kmeans(&points, k, seed)?;
    Ok(RegionMap {
        k,
        assignment: out.assignment,
        centroids: out.centroids.iter().map(|c| (c[0], c[1])).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poi(id: usize, lon: f64, lat: f64) -> PoiRecord {
        PoiRecord::new(id, 0, lon, lat).unwrap()
    }

    /// Brute-force minimum-SSE bipartition of a small point set.
    fn best_two_partition(points: &[Vec<f64>]) -> Vec<usize> {
        let n = points.len();
        let mut best_sse = f64::INFINITY;
        let mut best = vec![0; n];
        for mask in 1..(1u32 << n) - 1 {
            let mut groups = [Vec::new(), Vec::new()];
            for (i, p) in points.iter().enumerate() {
                groups[(mask >> i & 1) as usize].push(p.clone());
            }
            let mut sse = 0.0;
            for g in &groups {
                let dim = g[0].len();
                let mut mean = vec![0.0; dim];
                for p in g {
                    for (m, x) in mean.iter_mut().zip(p) {
                        *m += x / g.len() as f64;
                    }
                }
                sse += g.iter().map(|p| sq_dist(p, &mean)).sum::<f64>();
            }
            if sse < best_sse {
                best_sse = sse;
                best = (0..n).map(|i| (mask >> i & 1) as usize).collect();
            }
        }
        best
    }

    #[test]
    fn single_cluster_holds_everything() {
        let pois = vec![poi(0, 0.0, 0.0), poi(1, 1.0, 1.0), poi(2, 2.0, 0.5)];
        let map = cluster_regions(&pois, 1, 3).unwrap();
        assert!(map.assignment.iter().all(|&r| r == 0));
    }

    #[test]
    fn two_well_separated_pairs_split_as_brute_force() {
        let pois = vec![
            poi(0, 0.0, 0.0),
            poi(1, 0.0, 0.01),
            poi(2, 10.0, 10.0),
            poi(3, 10.0, 10.01),
        ];
        let map = cluster_regions(&pois, 2, 5).unwrap();
        assert_eq!(map.assignment[0], map.assignment[1]);
        assert_eq!(map.assignment[2], map.assignment[3]);
        assert_ne!(map.assignment[0], map.assignment[2]);

        // The brute-force oracle agrees this is the minimum-SSE bipartition.
        let points: Vec<Vec<f64>> = pois.iter().map(|p| vec![p.lon, p.lat]).collect();
        let oracle = best_two_partition(&points);
        assert_eq!(oracle[0], oracle[1]);
        assert_eq!(oracle[2], oracle[3]);
        assert_ne!(oracle[0], oracle[2]);
    }

    #[test]
    fn deterministic_given_seed() {
        let pois: Vec<PoiRecord> = (0..40)
            .map(|i| poi(i, (i % 7) as f64 * 0.3, (i % 5) as f64 * 0.4))
            .collect();
        let a = cluster_regions(&pois, 5, 42).unwrap();
        let b = cluster_regions(&pois, 5, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_more_clusters_than_points() {
        let pois = vec![poi(0, 0.0, 0.0)];
        assert!(cluster_regions(&pois, 2, 0).is_err());
        assert!(cluster_regions(&pois, 0, 0).is_err());
    }

    #[test]
    fn assignment_is_total() {
        let pois: Vec<PoiRecord> = (0..30)
            .map(|i| poi(i, f64::from(i as u32 % 6), f64::from(i as u32 / 6)))
            .collect();
        let map = cluster_regions(&pois, 5, 9).unwrap();
        assert_eq!(map.assignment.len(), pois.len());
        assert!(map.assignment.iter().all(|&r| r < 5));
    }
}
