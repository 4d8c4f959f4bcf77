//! Deterministic round-synchronous network simulation: message and byte
//! accounting, latency and energy cost models, fault injection, and the
//! two run drivers (clustered protocol and FedAvg baseline).

use crate::clustering::{build_cluster_features, form_clusters_traced, inter_cluster_separation, ClusterAssignment, ClusterError};
use crate::config::{ConfigError, RunConfig};
use crate::data::{Label, LabeledExample, NodePartition, FEATURE_COUNT, FEATURE_NAMES};
use crate::exec;
use crate::geo::{GeoPoint, EARTH_RADIUS_KM};
use crate::model::{evaluate, train_local, Metrics, ModelError, ModelWeights};
use crate::profiles::{build_profile, FleetRanges, NodeProfile, Range, SchemaDescriptor, ScoreError};
use crate::protocol::{
    elect_driver, run_cluster_round, ClusterRound, ClusterState, DriverCriteria, DriverEvent, ProtocolError, RoundContext, CRITERIA,
};
use crate::seeding::{self, Stream};
use crate::NodeId;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const PROFILE_BYTES: u32 = 64;
pub const CLUSTER_ASSIGN_BYTES: u32 = 16;
pub const HEARTBEAT_BYTES: u32 = 16;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{expected} data partitions required, got {found}")]
    PartitionCount { expected: usize, found: usize },
}

impl SimError {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            SimError::Model(ModelError::NumericalDivergence { .. })
                | SimError::Protocol(ProtocolError::Model(ModelError::NumericalDivergence { .. }))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageKind {
    ProfileUpload,
    ClusterAssign,
    PeerExchange,
    MemberToDriver,
    DriverBroadcast,
    GlobalUpload,
    Heartbeat,
    /// Baseline only: global model pushed back to every node.
    ServerBroadcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Node(NodeId),
    Server,
}

impl Endpoint {
    pub fn is_server(self) -> bool {
        self == Endpoint::Server
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub round: u32,
    pub kind: MessageKind,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub payload_bytes: u32,
}

/// Latency and energy charged per message on one class of link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkCost {
    pub base_ms: f64,
    pub bandwidth_bytes_per_s: f64,
    pub energy_nj_per_byte: f64,
    pub energy_fixed_nj: f64,
}

impl LinkCost {
    pub fn latency_ms(&self, bytes: u32) -> f64 {
        self.base_ms + 1000.0 * bytes as f64 / self.bandwidth_bytes_per_s
    }

    pub fn energy_nj(&self, bytes: u32) -> f64 {
        self.energy_nj_per_byte * bytes as f64 + self.energy_fixed_nj
    }

    fn violations(&self, prefix: &str) -> Vec<(String, String)> {
        let mut v = Vec::new();
        for (name, x) in
            [("base_ms", self.base_ms), ("energy_nj_per_byte", self.energy_nj_per_byte), ("energy_fixed_nj", self.energy_fixed_nj)]
        {
            if !(x.is_finite() && x >= 0.0) {
                v.push((format!("{prefix}.{name}"), format!("must be non-negative, got {x}")));
            }
        }
        if !(self.bandwidth_bytes_per_s.is_finite() && self.bandwidth_bytes_per_s > 0.0) {
            v.push((format!("{prefix}.bandwidth_bytes_per_s"), "must be positive".into()));
        }
        v
    }
}

impl Default for LinkCost {
    fn default() -> Self {
        Self { base_ms: 2.0, bandwidth_bytes_per_s: 1.25e6, energy_nj_per_byte: 50.0, energy_fixed_nj: 1000.0 }
    }
}

/// Messages touching the global server travel the wide-area link; node to
/// node traffic inside a cluster uses the short-range peer link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub server: LinkCost,
    pub peer: LinkCost,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            server: LinkCost::default(),
            peer: LinkCost { base_ms: 0.2, bandwidth_bytes_per_s: 1.25e7, energy_nj_per_byte: 5.0, energy_fixed_nj: 100.0 },
        }
    }
}

impl CostModel {
    fn link(&self, m: &MessageRecord) -> &LinkCost {
        if m.src.is_server() || m.dst.is_server() {
            &self.server
        } else {
            &self.peer
        }
    }

    pub fn latency_ms(&self, m: &MessageRecord) -> f64 {
        self.link(m).latency_ms(m.payload_bytes)
    }

    pub fn energy_nj(&self, m: &MessageRecord) -> f64 {
        self.link(m).energy_nj(m.payload_bytes)
    }

    /// Summed (latency ms, energy nJ) over `messages`.
    pub fn totals<'a>(&self, messages: impl IntoIterator<Item = &'a MessageRecord>) -> (f64, f64) {
        messages.into_iter().fold((0.0, 0.0), |(l, e), m| (l + self.latency_ms(m), e + self.energy_nj(m)))
    }

    pub fn violations(&self) -> Vec<(String, String)> {
        let mut v = self.server.violations("cost.server");
        v.extend(self.peer.violations("cost.peer"));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultAction {
    Crash,
    Recover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEvent {
    pub round: u32,
    pub node: NodeId,
    pub action: FaultAction,
}

/// Scheduled crashes and recoveries, applied at the start of their round.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaultPlan(pub Vec<FaultEvent>);

impl FaultPlan {
    pub fn crash_all(round: u32, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        Self(nodes.into_iter().map(|node| FaultEvent { round, node, action: FaultAction::Crash }).collect())
    }

    /// Per node, rounds strictly increase and actions alternate starting
    /// with a crash.
    pub fn violations(&self, n_nodes: usize) -> Vec<(String, String)> {
        let mut v = Vec::new();
        let mut last: BTreeMap<NodeId, (u32, FaultAction)> = BTreeMap::new();
        let mut sorted: Vec<(usize, &FaultEvent)> = self.0.iter().enumerate().collect();
        sorted.sort_by_key(|(i, e)| (e.node, e.round, *i));
        for (i, e) in sorted {
            let field = format!("faults[{i}]");
            if e.node as usize >= n_nodes {
                v.push((field.clone(), format!("node {} outside fleet of {n_nodes}", e.node)));
            }
            if e.round == 0 {
                v.push((field.clone(), "rounds start at 1".into()));
            }
            match last.get(&e.node) {
                None if e.action == FaultAction::Recover => v.push((field, format!("node {} recovers before crashing", e.node))),
                Some(&(round, action)) if round >= e.round || action == e.action => {
                    v.push((field, format!("node {} events are not well ordered", e.node)))
                }
                _ => {}
            }
            last.insert(e.node, (e.round, e.action));
        }
        v
    }
}

/// Applies every fault scheduled for `round` to the liveness vector and
/// returns the events that fired.
pub fn apply_fault(plan: &FaultPlan, round: u32, up: &mut [bool]) -> Vec<FaultEvent> {
    let mut fired = Vec::new();
    for e in plan.0.iter().filter(|e| e.round == round) {
        if let Some(slot) = up.get_mut(e.node as usize) {
            *slot = e.action == FaultAction::Recover;
            fired.push(*e);
        }
    }
    fired
}

/// Synthetic device population: profiles for clustering and criteria for
/// driver election, both indexed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    pub profiles: Vec<NodeProfile>,
    pub criteria: DriverCriteria,
}

fn point_near(center: GeoPoint, radius_km: f64, rng: &mut impl Rng) -> GeoPoint {
    let r = radius_km * rng.random::<f64>().sqrt();
    let theta = rng.random::<f64>() * std::f64::consts::TAU;
    let km_per_deg = EARTH_RADIUS_KM.to_radians();
    let lat = (center.lat_deg + r * theta.cos() / km_per_deg).clamp(-89.9, 89.9);
    let lon = center.lon_deg + r * theta.sin() / (km_per_deg * center.lat_deg.to_radians().cos());
    let lon = if lon > 180.0 {
        lon - 360.0
    } else if lon <= -180.0 {
        lon + 360.0
    } else {
        lon
    };
    GeoPoint { lat_deg: lat, lon_deg: lon }
}

fn malignant_fraction<'a>(examples: impl IntoIterator<Item = &'a LabeledExample>) -> f64 {
    let (mut m, mut n) = (0usize, 0usize);
    for e in examples {
        n += 1;
        m += usize::from(e.label == Label::Malignant);
    }
    if n == 0 {
        0.0
    } else {
        m as f64 / n as f64
    }
}

/// Places nodes around regional centres, draws device metrics and computes
/// each node's profile and election criteria.
pub fn generate_fleet(cfg: &RunConfig, partitions: &[NodePartition]) -> Result<Fleet, SimError> {
    cfg.validate()?;
    let n = cfg.data.n_nodes;
    if partitions.len() != n {
        return Err(SimError::PartitionCount { expected: n, found: partitions.len() });
    }
    let weights = cfg.score_weights()?;
    let regions = cfg.fleet.regions.unwrap_or_else(|| cfg.clustering.k_for(n)).max(1);
    let f = &cfg.fleet;
    let mut rng = seeding::rng(cfg.seed, Stream::Fleet, 0, 0);
    let centres: Vec<GeoPoint> = (0..regions)
        .map(|_| GeoPoint {
            lat_deg: rng.random_range(f.lat_range[0]..=f.lat_range[1]),
            lon_deg: rng.random_range(f.lon_range[0]..=f.lon_range[1]),
        })
        .collect();

    let mut locations = Vec::with_capacity(n);
    let mut metrics = Vec::with_capacity(n);
    let mut extra = Vec::with_capacity(n);
    for node in 0..n {
        let mut r = seeding::rng(cfg.seed, Stream::Fleet, 1, node as u64);
        let centre = centres[r.random_range(0..regions)];
        locations.push(point_near(centre, f.region_radius_km, &mut r));
        metrics.push(crate::profiles::DeviceMetrics {
            computational_power: r.random_range(1.0..10.0),
            energy_efficiency: r.random_range(0.5..2.0),
            latency: r.random_range(5.0..120.0),
            network_bandwidth: r.random_range(5.0..100.0),
            concurrency_level: r.random_range(1.0..8.0),
            cpu_utilization: r.random_range(0.2..1.0),
            energy_consumption: r.random_range(0.5..2.0),
            network_efficiency: r.random_range(0.3..1.0),
        });
        // battery, reliability, trust
        extra.push([r.random_range(0.2..1.0), r.random_range(0.5..1.0), r.random_range(0.5..1.0)]);
    }

    let ranges = FleetRanges::from_metrics(&metrics).expect("fleet is non-empty");
    let schema = SchemaDescriptor::numeric(&FEATURE_NAMES)?;
    let profiles =
        (0..n).map(|i| build_profile(i as NodeId, &schema, metrics[i], locations[i], &ranges, &weights)).collect::<Result<Vec<_>, _>>()?;

    let global = malignant_fraction(partitions.iter().flat_map(|p| p.train.iter()));
    let bandwidth = Range::of(metrics.iter().map(|m| m.network_bandwidth)).expect("fleet is non-empty");
    let scores: Vec<[f64; CRITERIA]> = (0..n)
        .map(|i| {
            let representativeness = match &f.representativeness {
                Some(v) => v[i],
                None => 1.0 - (malignant_fraction(&partitions[i].train) - global).abs(),
            };
            let trust = f.trust.as_ref().map_or(extra[i][2], |v| v[i]);
            [
                profiles[i].compute_pi,
                bandwidth.unit(metrics[i].network_bandwidth),
                extra[i][0],
                extra[i][1],
                representativeness.clamp(0.0, 1.0),
                trust,
            ]
        })
        .collect();

    Ok(Fleet { profiles, criteria: DriverCriteria { weights: cfg.protocol.election_weights, scores } })
}

/// The server's one-shot clustering plus the initial driver of each cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Formation {
    pub assignment: ClusterAssignment,
    pub summary: ClusteringSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSummary {
    pub k: usize,
    pub objective: f64,
    pub separation: f64,
    pub iterations: usize,
}

pub fn form_fleet_clusters(cfg: &RunConfig, fleet: &Fleet) -> Result<Formation, SimError> {
    let features = build_cluster_features(&fleet.profiles);
    let k = cfg.clustering.k_for(features.len());
    let mix = cfg.clustering.distance_mix();
    let mut rng = seeding::rng(cfg.seed, Stream::Clustering, 0, 0);
    let outcome = form_clusters_traced(&features, k, &mix, &mut rng)?;
    let mut assignment = outcome.assignment.clone();
    for c in assignment.clusters.iter_mut() {
        c.driver = Some(elect_driver(&fleet.criteria, &c.members)?);
    }
    Ok(Formation {
        summary: ClusteringSummary {
            k,
            objective: outcome.objective(),
            separation: inter_cluster_separation(&features, &outcome.medoids, &mix),
            iterations: outcome.iterations,
        },
        assignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Scale,
    Baseline,
}

/// One row per cluster, shaped like the communication table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub cluster_id: usize,
    pub nodes: usize,
    pub rounds: u32,
    pub global_uploads: u64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: u32,
    pub global_uploads: u64,
    pub messages: u64,
    pub global_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: RunMode,
    pub seed: u64,
    pub nodes: usize,
    pub rounds: u32,
    pub rows: Vec<ClusterRow>,
    pub total_global_uploads: u64,
    pub global: Metrics,
    pub messages_by_kind: BTreeMap<MessageKind, u64>,
    pub total_messages: u64,
    pub total_bytes: u64,
    pub latency_ms: f64,
    pub energy_nj: f64,
    pub clustering: Option<ClusteringSummary>,
    pub driver_events: Vec<DriverEvent>,
    pub round_summaries: Vec<RoundSummary>,
    pub cluster_rounds: Vec<ClusterRound>,
}

impl RunReport {
    pub fn count(&self, kind: MessageKind) -> u64 {
        self.messages_by_kind.get(&kind).copied().unwrap_or(0)
    }
}

/// A finished run: the report plus the full message log and final global model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: RunReport,
    pub messages: Vec<MessageRecord>,
    pub global_model: ModelWeights,
}

fn check_partitions(cfg: &RunConfig, partitions: &[NodePartition]) -> Result<(), SimError> {
    cfg.validate()?;
    if partitions.len() != cfg.data.n_nodes {
        return Err(SimError::PartitionCount { expected: cfg.data.n_nodes, found: partitions.len() });
    }
    Ok(())
}

fn all_test(partitions: &[NodePartition]) -> Vec<LabeledExample> {
    partitions.iter().flat_map(|p| p.test.iter().cloned()).collect()
}

fn weight_dim(partitions: &[NodePartition]) -> usize {
    partitions.iter().find_map(|p| p.train.first().or(p.test.first())).map_or(FEATURE_COUNT, |e| e.features.len())
}

/// Weighted average of `(weights, weight)` pairs; `None` when the total weight is zero.
fn weighted_mean<'a>(items: impl IntoIterator<Item = (&'a ModelWeights, f64)>, dim: usize) -> Option<ModelWeights> {
    let mut out = ModelWeights::zeros(dim);
    let mut total = 0.0;
    for (m, c) in items {
        for (o, x) in out.w.iter_mut().zip(&m.w) {
            *o += c * x;
        }
        out.b += c * m.b;
        total += c;
    }
    if total <= 0.0 {
        return None;
    }
    for o in out.w.iter_mut() {
        *o /= total;
    }
    out.b /= total;
    Some(out)
}

/// Server-side fusion of cluster checkpoints: each cluster's latest
/// checkpoint weighted by how many checkpoints it has uploaded.
pub fn fuse_checkpoints(states: &[ClusterState], dim: usize) -> ModelWeights {
    weighted_mean(states.iter().filter_map(|s| s.latest_checkpoint().map(|c| (&c.weights, s.checkpoints.len() as f64))), dim)
        .unwrap_or_else(|| ModelWeights::zeros(dim))
}

fn tally(messages: &[MessageRecord]) -> (BTreeMap<MessageKind, u64>, u64) {
    let mut by_kind = BTreeMap::new();
    let mut bytes = 0u64;
    for m in messages {
        *by_kind.entry(m.kind).or_insert(0) += 1;
        bytes += m.payload_bytes as u64;
    }
    (by_kind, bytes)
}

fn uploads_from(messages: &[MessageRecord], members: &[NodeId]) -> u64 {
    messages
        .iter()
        .filter(|m| m.kind == MessageKind::GlobalUpload)
        .filter(|m| matches!(m.src, Endpoint::Node(n) if members.contains(&n)))
        .count() as u64
}

/// Clustered run: profiling, one-shot cluster formation, then `cfg.rounds`
/// protocol rounds across all clusters with faults and costs applied.
pub fn run_scale(cfg: &RunConfig, partitions: &[NodePartition], fleet: &Fleet) -> Result<RunOutcome, SimError> {
    check_partitions(cfg, partitions)?;
    let n = partitions.len();
    let dim = weight_dim(partitions);
    let mut messages = Vec::new();
    for node in 0..n as NodeId {
        messages.push(MessageRecord {
            round: 0,
            kind: MessageKind::ProfileUpload,
            src: Endpoint::Node(node),
            dst: Endpoint::Server,
            payload_bytes: PROFILE_BYTES,
        });
    }
    let formation = form_fleet_clusters(cfg, fleet)?;
    let mut driver_events = Vec::new();
    for c in &formation.assignment.clusters {
        for &m in &c.members {
            messages.push(MessageRecord {
                round: 0,
                kind: MessageKind::ClusterAssign,
                src: Endpoint::Server,
                dst: Endpoint::Node(m),
                payload_bytes: CLUSTER_ASSIGN_BYTES,
            });
        }
        driver_events.push(DriverEvent { round: 0, cluster_id: c.cluster_id, previous: None, elected: c.driver });
    }

    let init = ModelWeights::zeros(dim);
    let mut states: Vec<ClusterState> = formation
        .assignment
        .clusters
        .iter()
        .map(|c| ClusterState::new(c.cluster_id, c.members.clone(), c.driver, &init, partitions))
        .collect();

    let test = all_test(partitions);
    let mut up = vec![true; n];
    let mut round_summaries = Vec::with_capacity(cfg.rounds as usize);
    let mut cluster_rounds = Vec::new();
    for round in 1..=cfg.rounds {
        apply_fault(&cfg.faults, round, &mut up);
        let ctx = RoundContext {
            round,
            seed: cfg.seed,
            params: &cfg.protocol,
            training: &cfg.training,
            partitions,
            up: &up,
            criteria: &fleet.criteria,
        };
        let outcomes = exec::map_mut(cfg.parallelism, &mut states, |s| run_cluster_round(s, &ctx));
        let before = messages.len();
        for out in outcomes {
            let out = out?;
            messages.extend(out.messages);
            driver_events.extend(out.driver_event);
            cluster_rounds.push(out.summary);
        }
        let this_round = &messages[before..];
        round_summaries.push(RoundSummary {
            round,
            global_uploads: this_round.iter().filter(|m| m.kind == MessageKind::GlobalUpload).count() as u64,
            messages: this_round.len() as u64,
            global_accuracy: evaluate(&fuse_checkpoints(&states, dim), &test).accuracy,
        });
    }

    let global_model = fuse_checkpoints(&states, dim);
    let rows = states
        .iter()
        .map(|s| ClusterRow {
            cluster_id: s.cluster_id,
            nodes: s.members.len(),
            rounds: cfg.rounds,
            global_uploads: s.checkpoints.len() as u64,
            accuracy: s.latest_checkpoint().map(|c| c.cluster_accuracy),
        })
        .collect();
    let report = assemble(
        cfg,
        RunMode::Scale,
        n,
        rows,
        &global_model,
        &test,
        &messages,
        Some(formation.summary),
        driver_events,
        round_summaries,
        cluster_rounds,
    );
    Ok(RunOutcome { report, messages, global_model })
}

/// FedAvg baseline: every live node uploads every round and the server
/// broadcasts the sample-weighted average back. `groups` only shapes the
/// per-row breakdown of the report.
pub fn run_baseline_fl(cfg: &RunConfig, partitions: &[NodePartition], groups: Option<&ClusterAssignment>) -> Result<RunOutcome, SimError> {
    check_partitions(cfg, partitions)?;
    let n = partitions.len();
    let dim = weight_dim(partitions);
    let test = all_test(partitions);
    let mut global = ModelWeights::zeros(dim);
    let mut messages = Vec::new();
    let mut up = vec![true; n];
    let mut round_summaries = Vec::with_capacity(cfg.rounds as usize);
    let weight_bytes = global.payload_bytes();
    for round in 1..=cfg.rounds {
        apply_fault(&cfg.faults, round, &mut up);
        let live: Vec<NodeId> = (0..n as NodeId).filter(|&i| up[i as usize]).collect();
        let trained = exec::map(cfg.parallelism, &live, |&id| {
            let mut rng = seeding::rng(cfg.seed, Stream::Training, round as u64, id as u64);
            train_local(&global, &partitions[id as usize].train, &cfg.training, &mut rng)
        });
        let trained = trained.into_iter().collect::<Result<Vec<_>, _>>()?;
        let before = messages.len();
        for &id in &live {
            messages.push(MessageRecord {
                round,
                kind: MessageKind::GlobalUpload,
                src: Endpoint::Node(id),
                dst: Endpoint::Server,
                payload_bytes: weight_bytes,
            });
        }
        if let Some(avg) = weighted_mean(trained.iter().zip(&live).map(|(m, &id)| (m, partitions[id as usize].train.len() as f64)), dim) {
            global = avg;
        }
        for &id in &live {
            messages.push(MessageRecord {
                round,
                kind: MessageKind::ServerBroadcast,
                src: Endpoint::Server,
                dst: Endpoint::Node(id),
                payload_bytes: weight_bytes,
            });
        }
        round_summaries.push(RoundSummary {
            round,
            global_uploads: live.len() as u64,
            messages: (messages.len() - before) as u64,
            global_accuracy: evaluate(&global, &test).accuracy,
        });
    }

    let rows = match groups {
        Some(a) => a
            .clusters
            .iter()
            .map(|c| {
                let held: Vec<&LabeledExample> = c.members.iter().flat_map(|&m| partitions[m as usize].test.iter()).collect();
                ClusterRow {
                    cluster_id: c.cluster_id,
                    nodes: c.members.len(),
                    rounds: cfg.rounds,
                    global_uploads: uploads_from(&messages, &c.members),
                    accuracy: (!held.is_empty()).then(|| evaluate(&global, held).accuracy),
                }
            })
            .collect(),
        None => vec![ClusterRow {
            cluster_id: 0,
            nodes: n,
            rounds: cfg.rounds,
            global_uploads: uploads_from(&messages, &(0..n as NodeId).collect::<Vec<_>>()),
            accuracy: Some(evaluate(&global, &test).accuracy),
        }],
    };
    let report = assemble(cfg, RunMode::Baseline, n, rows, &global, &test, &messages, None, Vec::new(), round_summaries, Vec::new());
    Ok(RunOutcome { report, messages, global_model: global })
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    cfg: &RunConfig,
    mode: RunMode,
    nodes: usize,
    rows: Vec<ClusterRow>,
    global_model: &ModelWeights,
    test: &[LabeledExample],
    messages: &[MessageRecord],
    clustering: Option<ClusteringSummary>,
    driver_events: Vec<DriverEvent>,
    round_summaries: Vec<RoundSummary>,
    cluster_rounds: Vec<ClusterRound>,
) -> RunReport {
    let (messages_by_kind, total_bytes) = tally(messages);
    let (latency_ms, energy_nj) = cfg.cost.totals(messages);
    RunReport {
        mode,
        seed: cfg.seed,
        nodes,
        rounds: cfg.rounds,
        total_global_uploads: messages_by_kind.get(&MessageKind::GlobalUpload).copied().unwrap_or(0),
        rows,
        global: evaluate(global_model, test),
        messages_by_kind,
        total_messages: messages.len() as u64,
        total_bytes,
        latency_ms,
        energy_nj,
        clustering,
        driver_events,
        round_summaries,
        cluster_rounds,
    }
}

/// Partitions and synthetic fleet shared by both run modes, so paired runs
/// see identical data and devices.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub partitions: Vec<NodePartition>,
    pub fleet: Fleet,
}

impl Experiment {
    pub fn prepare(cfg: &RunConfig, data: &[LabeledExample]) -> Result<Self, PrepareError> {
        cfg.validate().map_err(|e| PrepareError::Sim(e.into()))?;
        let partitions = crate::data::partition(data, cfg.data.n_nodes, cfg.data.partition, cfg.data.test_fraction, cfg.seed)?;
        let fleet = generate_fleet(cfg, &partitions)?;
        Ok(Self { partitions, fleet })
    }

    pub fn formation(&self, cfg: &RunConfig) -> Result<Formation, SimError> {
        form_fleet_clusters(cfg, &self.fleet)
    }

    pub fn run_scale(&self, cfg: &RunConfig) -> Result<RunOutcome, SimError> {
        run_scale(cfg, &self.partitions, &self.fleet)
    }

    pub fn run_baseline(&self, cfg: &RunConfig) -> Result<RunOutcome, SimError> {
        let formation = self.formation(cfg)?;
        run_baseline_fl(cfg, &self.partitions, Some(&formation.assignment))
    }
}

#[derive(Debug, Error)]
pub enum PrepareError {
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// The document written as `report.json`: one report per mode that ran.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub scale: Option<RunReport>,
    pub baseline: Option<RunReport>,
}

pub const TABLE_HEADER: [&str; 7] = ["run", "nodes", "rounds", "updates_fl", "acc_fl", "updates_scale", "acc_scale"];

fn acc_cell(a: Option<f64>) -> String {
    a.map(|x| format!("{x:.4}")).unwrap_or_default()
}

impl ReportBundle {
    /// Table-shaped CSV: one row per cluster, then a `Total` row with the
    /// global model's accuracy.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TABLE_HEADER).expect("in-memory write");
        let shape = self.scale.as_ref().or(self.baseline.as_ref());
        let n_rows = shape.map_or(0, |r| r.rows.len());
        for i in 0..n_rows {
            let fl = self.baseline.as_ref().and_then(|r| r.rows.get(i));
            let sc = self.scale.as_ref().and_then(|r| r.rows.get(i));
            let any = sc.or(fl).expect("row exists in one report");
            w.write_record([
                format!("Cluster {}", any.cluster_id + 1),
                any.nodes.to_string(),
                any.rounds.to_string(),
                fl.map(|r| r.global_uploads.to_string()).unwrap_or_default(),
                acc_cell(fl.and_then(|r| r.accuracy)),
                sc.map(|r| r.global_uploads.to_string()).unwrap_or_default(),
                acc_cell(sc.and_then(|r| r.accuracy)),
            ])
            .expect("in-memory write");
        }
        if let Some(any) = shape {
            let fl = self.baseline.as_ref();
            let sc = self.scale.as_ref();
            w.write_record([
                "Total".to_string(),
                any.nodes.to_string(),
                any.rounds.to_string(),
                fl.map(|r| r.total_global_uploads.to_string()).unwrap_or_default(),
                acc_cell(fl.map(|r| r.global.accuracy)),
                sc.map(|r| r.total_global_uploads.to_string()).unwrap_or_default(),
                acc_cell(sc.map(|r| r.global.accuracy)),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(kind: MessageKind, src: Endpoint, dst: Endpoint, bytes: u32) -> MessageRecord {
        MessageRecord { round: 1, kind, src, dst, payload_bytes: bytes }
    }

    #[test]
    fn default_costs() {
        let c = CostModel::default();
        let up = msg(MessageKind::GlobalUpload, Endpoint::Node(0), Endpoint::Server, 248);
        assert!((c.latency_ms(&up) - (2.0 + 248.0 / 1250.0)).abs() < 1e-12);
        assert!((c.energy_nj(&up) - (50.0 * 248.0 + 1000.0)).abs() < 1e-12);
        let peer = msg(MessageKind::PeerExchange, Endpoint::Node(0), Endpoint::Node(1), 248);
        assert!(c.latency_ms(&peer) < c.latency_ms(&up));
    }

    #[test]
    fn costs_grow_with_messages() {
        let c = CostModel::default();
        let mut log = Vec::new();
        let mut last = c.totals(&log);
        for i in 0..50u32 {
            let kind = if i % 3 == 0 { MessageKind::GlobalUpload } else { MessageKind::PeerExchange };
            let dst = if i % 3 == 0 { Endpoint::Server } else { Endpoint::Node(i + 1) };
            log.push(msg(kind, Endpoint::Node(i), dst, i * 7));
            let now = c.totals(&log);
            assert!(now.0 >= last.0 && now.1 >= last.1);
            last = now;
        }
    }

    #[test]
    fn empty_plan_changes_nothing() {
        let mut up = vec![true; 4];
        assert!(apply_fault(&FaultPlan::default(), 3, &mut up).is_empty());
        assert_eq!(up, vec![true; 4]);
    }

    #[test]
    fn crash_and_recover() {
        let plan = FaultPlan(vec![
            FaultEvent { round: 2, node: 1, action: FaultAction::Crash },
            FaultEvent { round: 4, node: 1, action: FaultAction::Recover },
        ]);
        let mut up = vec![true; 3];
        apply_fault(&plan, 2, &mut up);
        assert_eq!(up, vec![true, false, true]);
        apply_fault(&plan, 3, &mut up);
        assert_eq!(up, vec![true, false, true]);
        apply_fault(&plan, 4, &mut up);
        assert_eq!(up, vec![true; 3]);
        assert!(plan.violations(3).is_empty());
    }

    #[test]
    fn fault_plan_ordering_is_checked() {
        let bad = FaultPlan(vec![
            FaultEvent { round: 2, node: 0, action: FaultAction::Recover },
            FaultEvent { round: 3, node: 1, action: FaultAction::Crash },
            FaultEvent { round: 3, node: 1, action: FaultAction::Crash },
            FaultEvent { round: 1, node: 9, action: FaultAction::Crash },
        ]);
        assert_eq!(bad.violations(4).len(), 3);
    }

    #[test]
    fn fusion_weights_by_checkpoint_count() {
        use crate::protocol::CheckpointRecord;
        let parts = vec![NodePartition { node_id: 0, train: vec![], test: vec![] }; 2];
        let mut a = ClusterState::new(0, vec![0], Some(0), &ModelWeights::zeros(1), &parts);
        let mut b = ClusterState::new(1, vec![1], Some(1), &ModelWeights::zeros(1), &parts);
        let ck =
            |c, w: f64| CheckpointRecord { cluster_id: c, round: 1, weights: ModelWeights { w: vec![w], b: w }, cluster_accuracy: 1.0 };
        a.checkpoints = vec![ck(0, 9.0), ck(0, 1.0), ck(0, 1.0)];
        b.checkpoints = vec![ck(1, 5.0)];
        let fused = fuse_checkpoints(&[a, b], 1);
        assert_eq!(fused.w, vec![2.0]);
        assert_eq!(fused.b, 2.0);
        assert_eq!(fuse_checkpoints(&[], 1), ModelWeights::zeros(1));
    }
}
