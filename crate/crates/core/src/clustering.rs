//! Server-side cluster formation over a composite distance of data
//! similarity, performance index and geographic proximity.

use crate::geo::{equirectangular_distance, GeoPoint};
use crate::profiles::{NodeProfile, Range};
use crate::NodeId;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("k = {k} is invalid for {nodes} nodes")]
    InvalidK { k: usize, nodes: usize },
    #[error("mix weights must be >= 0 and sum to 1, got {0:?}")]
    InvalidMix([f64; 3]),
    #[error("geo scale must be positive, got {0}")]
    InvalidGeoScale(f64),
}

/// Normalized per-node inputs to the clustering metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterFeature {
    pub node_id: NodeId,
    pub ds: f64,
    pub pi: f64,
    pub geo: GeoPoint,
}

/// Relative weight of data similarity, performance index and geography,
/// plus the distance (km) that counts as one unit of geographic difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceMix {
    pub w_ds: f64,
    pub w_pi: f64,
    pub w_gp: f64,
    pub geo_scale_km: f64,
}

impl Default for DistanceMix {
    fn default() -> Self {
        Self { w_ds: 0.4, w_pi: 0.2, w_gp: 0.4, geo_scale_km: 1000.0 }
    }
}

impl DistanceMix {
    pub fn validate(&self) -> Result<(), ClusterError> {
        let w = [self.w_ds, self.w_pi, self.w_gp];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || ((w.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(ClusterError::InvalidMix(w));
        }
        if !(self.geo_scale_km.is_finite() && self.geo_scale_km > 0.0) {
            return Err(ClusterError::InvalidGeoScale(self.geo_scale_km));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: usize,
    pub members: Vec<NodeId>,
    pub driver: Option<NodeId>,
}

/// Partition of the fleet into clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub clusters: Vec<Cluster>,
    pub k: usize,
}

impl ClusterAssignment {
    /// Checks that every node in `nodes` appears in exactly one non-empty
    /// cluster and that drivers are members.
    pub fn check_partition(&self, nodes: &[NodeId]) -> Result<(), String> {
        let mut seen = std::collections::BTreeMap::new();
        for c in &self.clusters {
            if c.members.is_empty() {
                return Err(format!("cluster {} is empty", c.cluster_id));
            }
            for &m in &c.members {
                if seen.insert(m, c.cluster_id).is_some() {
                    return Err(format!("node {m} appears in more than one cluster"));
                }
            }
            if let Some(d) = c.driver {
                if !c.members.contains(&d) {
                    return Err(format!("driver {d} is not a member of cluster {}", c.cluster_id));
                }
            }
        }
        for n in nodes {
            if !seen.contains_key(n) {
                return Err(format!("node {n} is not assigned"));
            }
        }
        if seen.len() != nodes.len() {
            return Err("assignment contains unknown nodes".into());
        }
        Ok(())
    }

    pub fn cluster_of(&self, node: NodeId) -> Option<usize> {
        self.clusters.iter().position(|c| c.members.contains(&node))
    }
}

/// Scales dataset scores and log performance indices to `[0, 1]` across the fleet.
pub fn build_cluster_features(profiles: &[NodeProfile]) -> Vec<ClusterFeature> {
    let ds_range = Range::of(profiles.iter().map(|p| p.schema_score));
    let pi_range = Range::of(profiles.iter().map(|p| p.log_pi));
    profiles
        .iter()
        .map(|p| ClusterFeature {
            node_id: p.node_id,
            ds: ds_range.map_or(0.5, |r| r.unit(p.schema_score)),
            pi: pi_range.map_or(0.5, |r| r.unit(p.log_pi)),
            geo: p.location,
        })
        .collect()
}

pub fn cluster_distance(a: &ClusterFeature, b: &ClusterFeature, mix: &DistanceMix) -> f64 {
    mix.w_ds * (a.ds - b.ds).abs() + mix.w_pi * (a.pi - b.pi).abs() + mix.w_gp * (equirectangular_distance(a.geo, b.geo) / mix.geo_scale_km)
}

/// Assignment plus the data needed to audit the optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringOutcome {
    pub assignment: ClusterAssignment,
    /// Index into the feature slice of each cluster's medoid.
    pub medoids: Vec<usize>,
    /// Total member-to-medoid distance after each iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl ClusteringOutcome {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }
}

pub const MAX_ITERATIONS: usize = 100;

pub fn form_clusters(
    features: &[ClusterFeature],
    k: usize,
    mix: &DistanceMix,
    rng: &mut ChaCha8Rng,
) -> Result<ClusterAssignment, ClusterError> {
    form_clusters_traced(features, k, mix, rng).map(|o| o.assignment)
}

/// k-medoids: k-means++ seeding, Lloyd-style alternation, then greedy
/// medoid swaps until no single exchange lowers the objective.
pub fn form_clusters_traced(
    features: &[ClusterFeature],
    k: usize,
    mix: &DistanceMix,
    rng: &mut ChaCha8Rng,
) -> Result<ClusteringOutcome, ClusterError> {
    let n = features.len();
    if k < 1 || k > n {
        return Err(ClusterError::InvalidK { k, nodes: n });
    }
    mix.validate()?;
    let dist = DistanceMatrix::new(features, mix);

    let mut medoids = seed_medoids(&dist, k, rng);
    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        assign(&dist, &medoids, &mut labels);
        reseed_empty(&dist, &mut medoids, &mut labels);
        let next = update_medoids(&dist, &medoids, &labels);
        let changed = next != medoids;
        medoids = next;
        trace.push(objective(&dist, &medoids, &labels));
        if !changed || iterations >= MAX_ITERATIONS {
            break;
        }
    }
    let mut swaps = 0;
    while swaps < MAX_ITERATIONS && swap_once(&dist, &mut medoids) {
        swaps += 1;
        assign(&dist, &medoids, &mut labels);
        reseed_empty(&dist, &mut medoids, &mut labels);
        trace.push(objective(&dist, &medoids, &labels));
    }
    iterations += swaps;

    let clusters = (0..k)
        .map(|c| Cluster {
            cluster_id: c,
            members: (0..n).filter(|&i| labels[i] == c).map(|i| features[i].node_id).collect(),
            driver: None,
        })
        .collect();
    Ok(ClusteringOutcome { assignment: ClusterAssignment { clusters, k }, medoids, objective_trace: trace, iterations })
}

struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    fn new(features: &[ClusterFeature], mix: &DistanceMix) -> Self {
        let n = features.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = cluster_distance(&features[i], &features[j], mix);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

fn seed_medoids(dist: &DistanceMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = dist.n;
    let mut medoids = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist.get(i, medoids[0])).collect();
    while medoids.len() < k {
        let total: f64 = nearest.iter().map(|d| d * d).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, d) in nearest.iter().enumerate() {
                let w = d * d;
                if w > 0.0 {
                    if target < w {
                        chosen = Some(i);
                        break;
                    }
                    target -= w;
                }
            }
            // rounding can leave a sliver; fall back to the last positive weight
            chosen.unwrap_or_else(|| nearest.iter().rposition(|d| *d > 0.0).expect("positive total"))
        } else {
            // all remaining points coincide with a medoid
            let free: Vec<usize> = (0..n).filter(|i| !medoids.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        medoids.push(pick);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist.get(i, pick));
        }
    }
    medoids
}

fn assign(dist: &DistanceMatrix, medoids: &[usize], labels: &mut [usize]) {
    for (i, label) in labels.iter_mut().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, &m) in medoids.iter().enumerate() {
            let d = dist.get(i, m);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        *label = best;
    }
}

/// Gives every empty cluster the point farthest from its own medoid,
/// taken from a cluster that can spare it.
fn reseed_empty(dist: &DistanceMatrix, medoids: &mut [usize], labels: &mut [usize]) {
    let k = medoids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..labels.len())
            .filter(|&i| sizes[labels[i]] >= 2 && medoids[labels[i]] != i)
            .max_by(|&a, &b| dist.get(a, medoids[labels[a]]).total_cmp(&dist.get(b, medoids[labels[b]])).then(b.cmp(&a)))
            .expect("k <= n guarantees a spare point");
        medoids[empty] = donor;
        labels[donor] = empty;
    }
}

fn update_medoids(dist: &DistanceMatrix, medoids: &[usize], labels: &[usize]) -> Vec<usize> {
    medoids
        .iter()
        .enumerate()
        .map(|(c, &current)| {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            let cost = |m: usize| members.iter().map(|&i| dist.get(i, m)).sum::<f64>();
            let mut best = current;
            let mut best_cost = cost(current);
            for &m in &members {
                let v = cost(m);
                if v < best_cost {
                    best = m;
                    best_cost = v;
                }
            }
            best
        })
        .collect()
}

fn nearest_cost(dist: &DistanceMatrix, medoids: &[usize]) -> f64 {
    (0..dist.n).map(|i| medoids.iter().map(|&m| dist.get(i, m)).fold(f64::INFINITY, f64::min)).sum()
}

/// Applies the single medoid/non-medoid exchange that lowers the total
/// cost the most. Returns false at a swap-local optimum.
fn swap_once(dist: &DistanceMatrix, medoids: &mut [usize]) -> bool {
    let current = nearest_cost(dist, medoids);
    let mut best: Option<(usize, usize, f64)> = None;
    let mut trial = medoids.to_vec();
    for c in 0..medoids.len() {
        for x in 0..dist.n {
            if medoids.contains(&x) {
                continue;
            }
            trial[c] = x;
            let cost = nearest_cost(dist, &trial);
            if cost < best.map_or(current, |b| b.2) {
                best = Some((c, x, cost));
            }
        }
        trial[c] = medoids[c];
    }
    match best {
        Some((c, x, cost)) if cost < current - 1e-12 * current.abs().max(1.0) => {
            medoids[c] = x;
            true
        }
        _ => false,
    }
}

fn objective(dist: &DistanceMatrix, medoids: &[usize], labels: &[usize]) -> f64 {
    labels.iter().enumerate().map(|(i, &c)| dist.get(i, medoids[c])).sum()
}

/// Mean pairwise distance between medoids; reported alongside the
/// intra-cluster objective as a separation diagnostic.
pub fn inter_cluster_separation(features: &[ClusterFeature], medoids: &[usize], mix: &DistanceMix) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in medoids.iter().enumerate() {
        for &j in &medoids[a + 1..] {
            total += cluster_distance(&features[i], &features[j], mix);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

/// Default cluster count: one cluster per ten nodes, rounded up.
pub fn default_k(nodes: usize) -> usize {
    nodes.div_ceil(10).max(1)
}
