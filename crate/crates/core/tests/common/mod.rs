#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scale_core::clustering::{cluster_distance, ClusterFeature, DistanceMix};
use scale_core::data::{load_wdbc, LabeledExample};
use scale_core::geo::GeoPoint;
use scale_core::protocol::{DriverCriteria, CRITERIA};
use scale_core::{NodeId, RunConfig};
use std::path::PathBuf;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn shipped_config_path() -> PathBuf {
    workspace_root().join("exp/wdbc100.cfg")
}

pub fn shipped_config() -> RunConfig {
    RunConfig::load(&shipped_config_path()).expect("shipped config loads")
}

pub fn wdbc() -> Vec<LabeledExample> {
    load_wdbc(&workspace_root().join("data/wdbc.data")).expect("dataset loads")
}

/// Great-circle distance on a sphere of radius 6371 km.
pub fn haversine_km(p: GeoPoint, q: GeoPoint) -> f64 {
    let (p1, p2) = (p.lat_deg.to_radians(), q.lat_deg.to_radians());
    let dphi = p2 - p1;
    let dl = (q.lon_deg - p.lon_deg).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * 6371.0 * a.sqrt().asin()
}

/// Random point with the given initial bearing and distance from `p`.
pub fn destination(p: GeoPoint, bearing: f64, km: f64) -> GeoPoint {
    let d = km / 6371.0;
    let phi1 = p.lat_deg.to_radians();
    let l1 = p.lon_deg.to_radians();
    let phi2 = (phi1.sin() * d.cos() + phi1.cos() * d.sin() * bearing.cos()).asin();
    let l2 = l1 + (bearing.sin() * d.sin() * phi1.cos()).atan2(d.cos() - phi1.sin() * phi2.sin());
    let mut lon = l2.to_degrees();
    if lon > 180.0 {
        lon -= 360.0;
    } else if lon <= -180.0 {
        lon += 360.0;
    }
    GeoPoint { lat_deg: phi2.to_degrees(), lon_deg: lon }
}

pub fn random_features(rng: &mut ChaCha8Rng, n: usize) -> Vec<ClusterFeature> {
    (0..n)
        .map(|i| ClusterFeature {
            node_id: i as NodeId,
            ds: rng.random(),
            pi: rng.random(),
            geo: GeoPoint { lat_deg: rng.random_range(30.0..45.0), lon_deg: rng.random_range(-120.0..-75.0) },
        })
        .collect()
}

/// Exact k-medoids optimum by enumerating every partition into exactly `k`
/// blocks (restricted growth strings) and taking each block's best medoid.
pub fn exhaustive_optimum(features: &[ClusterFeature], k: usize, mix: &DistanceMix) -> f64 {
    let n = features.len();
    let d: Vec<Vec<f64>> = features.iter().map(|a| features.iter().map(|b| cluster_distance(a, b, mix)).collect()).collect();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    fn block_cost(d: &[Vec<f64>], members: &[usize]) -> f64 {
        members.iter().map(|&m| members.iter().map(|&j| d[m][j]).sum::<f64>()).fold(f64::INFINITY, f64::min)
    }
    fn rec(i: usize, used: usize, k: usize, labels: &mut [usize], d: &[Vec<f64>], best: &mut f64) {
        let n = labels.len();
        if n - i < k - used {
            return;
        }
        if i == n {
            let cost: f64 = (0..k)
                .map(|c| {
                    let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                    block_cost(d, &members)
                })
                .sum();
            if cost < *best {
                *best = cost;
            }
            return;
        }
        for c in 0..=used.min(k - 1) {
            labels[i] = c;
            rec(i + 1, used.max(c + 1), k, labels, d, best);
        }
    }
    rec(0, 0, k, &mut labels, &d, &mut best);
    best
}

/// Brute-force weighted argmax with lowest-id tie break.
pub fn argmax_oracle(weights: &[f64; CRITERIA], scores: &[[f64; CRITERIA]], alive: &[NodeId]) -> NodeId {
    let mut best_id = NodeId::MAX;
    let mut best = f64::NEG_INFINITY;
    for &id in alive {
        let s: f64 = (0..CRITERIA).map(|j| weights[j] * scores[id as usize][j]).sum();
        if s > best || (s == best && id < best_id) {
            best = s;
            best_id = id;
        }
    }
    best_id
}

pub fn random_criteria(rng: &mut ChaCha8Rng, n: usize) -> DriverCriteria {
    let mut weights = [0.0; CRITERIA];
    for w in weights.iter_mut() {
        *w = rng.random::<f64>();
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    let scores = (0..n)
        .map(|_| {
            let mut row = [0.0; CRITERIA];
            for x in row.iter_mut() {
                // coarse grid so ties actually occur
                *x = (rng.random_range(0..5) as f64) / 4.0;
            }
            row
        })
        .collect();
    DriverCriteria { weights, scores }
}
