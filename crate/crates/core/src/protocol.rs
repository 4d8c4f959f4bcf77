//! Per-cluster round engine: local training, peer weight exchange, driver
//! consensus, checkpoint-gated upload, driver election and heartbeat-based
//! failover.

use crate::data::{LabeledExample, NodePartition};
use crate::model::{evaluate, train_local, ModelError, ModelWeights, TrainConfig};
use crate::profiles::weighted_sum;
use crate::seeding::{self, Stream};
use crate::simnet::{Endpoint, MessageKind, MessageRecord};
use crate::NodeId;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CRITERIA: usize = 6;
pub const CRITERIA_NAMES: [&str; CRITERIA] =
    ["computational_capacity", "network_connectivity", "battery_level", "reliability", "data_representativeness", "trust"];

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("weight dimension mismatch: {expected} vs {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot aggregate an empty cluster")]
    EmptyCluster,
    #[error("no alive members to elect from")]
    NoAliveMembers,
    #[error("no criteria recorded for node {0}")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-node election criteria in `[0, 1]` (indexed by node id) and the
/// weight given to each criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverCriteria {
    pub weights: [f64; CRITERIA],
    pub scores: Vec<[f64; CRITERIA]>,
}

impl DriverCriteria {
    pub fn score(&self, node: NodeId) -> Result<f64, ProtocolError> {
        let row = self.scores.get(node as usize).ok_or(ProtocolError::UnknownNode(node))?;
        Ok(weighted_sum(row, &self.weights))
    }
}

/// Weighted argmax over `alive`; ties go to the lowest node id.
pub fn elect_driver(criteria: &DriverCriteria, alive: &[NodeId]) -> Result<NodeId, ProtocolError> {
    let mut sorted = alive.to_vec();
    sorted.sort_unstable();
    let mut best: Option<(NodeId, f64)> = None;
    for node in sorted {
        let s = criteria.score(node)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((node, s));
        }
    }
    best.map(|(n, _)| n).ok_or(ProtocolError::NoAliveMembers)
}

/// Up to `k_peers` distinct candidates other than `node`, chosen by a
/// shuffle seeded on `(round, node)`.
pub fn select_peers(candidates: &[NodeId], node: NodeId, k_peers: usize, round: u32, seed: u64) -> Vec<NodeId> {
    let mut pool: Vec<NodeId> = candidates.iter().copied().filter(|&c| c != node).collect();
    pool.sort_unstable();
    pool.dedup();
    pool.shuffle(&mut seeding::rng(seed, Stream::Peers, round as u64, node as u64));
    pool.truncate(k_peers);
    pool
}

fn check_dims<'a>(expected: usize, ws: impl IntoIterator<Item = &'a ModelWeights>) -> Result<(), ProtocolError> {
    for w in ws {
        if w.dim() != expected {
            return Err(ProtocolError::DimensionMismatch { expected, found: w.dim() });
        }
    }
    Ok(())
}

fn mean_of(items: &[&ModelWeights]) -> ModelWeights {
    let dim = items[0].dim();
    let n = items.len() as f64;
    let mut out = ModelWeights::zeros(dim);
    for m in items {
        for (o, x) in out.w.iter_mut().zip(&m.w) {
            *o += x;
        }
        out.b += m.b;
    }
    for o in out.w.iter_mut() {
        *o /= n;
    }
    out.b /= n;
    out
}

/// Unweighted mean of a node's own weights and those it pulled from peers.
pub fn peer_exchange_update(own: &ModelWeights, received: &[&ModelWeights]) -> Result<ModelWeights, ProtocolError> {
    check_dims(own.dim(), received.iter().copied())?;
    if received.is_empty() {
        return Ok(own.clone());
    }
    let mut all = Vec::with_capacity(received.len() + 1);
    all.push(own);
    all.extend_from_slice(received);
    Ok(mean_of(&all))
}

/// Per-coordinate mean of every member's post-exchange weights.
pub fn driver_consensus_aggregate(updated: &[&ModelWeights]) -> Result<ModelWeights, ProtocolError> {
    let first = updated.first().ok_or(ProtocolError::EmptyCluster)?;
    check_dims(first.dim(), updated.iter().copied())?;
    Ok(mean_of(updated))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointPolicy {
    pub min_improvement: f64,
    pub max_gap: u32,
}

impl Default for CheckpointPolicy {
    fn default() -> Self {
        Self { min_improvement: 0.005, max_gap: 5 }
    }
}

/// Upload when nothing has been uploaded yet, when accuracy improved by at
/// least `min_improvement`, or when the last upload is `max_gap` rounds old.
pub fn should_checkpoint(last_uploaded: Option<f64>, current: f64, rounds_since_upload: u32, policy: &CheckpointPolicy) -> bool {
    match last_uploaded {
        None => true,
        Some(last) => current - last >= policy.min_improvement || rounds_since_upload >= policy.max_gap,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub cluster_id: usize,
    pub round: u32,
    pub weights: ModelWeights,
    pub cluster_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HealthStatus {
    Alive,
    Suspect,
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthThresholds {
    pub suspect: u32,
    pub dead: u32,
}

impl Default for HealthThresholds {
    fn default() -> Self {
        Self { suspect: 2, dead: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthState {
    pub last_heartbeat_round: Option<u32>,
    pub missed: u32,
    pub status: HealthStatus,
}

impl Default for HealthState {
    fn default() -> Self {
        Self { last_heartbeat_round: None, missed: 0, status: HealthStatus::Alive }
    }
}

impl HealthState {
    pub fn record_heartbeat(&mut self, round: u32) {
        self.last_heartbeat_round = Some(round);
        self.missed = 0;
        self.status = HealthStatus::Alive;
    }

    pub fn record_miss(&mut self, t: &HealthThresholds) {
        self.missed += 1;
        self.status = if self.missed >= t.dead {
            HealthStatus::Dead
        } else if self.missed >= t.suspect {
            HealthStatus::Suspect
        } else {
            HealthStatus::Alive
        };
    }
}

/// A change of driver, either at formation or after the previous driver
/// was declared dead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverEvent {
    pub round: u32,
    pub cluster_id: usize,
    pub previous: Option<NodeId>,
    pub elected: Option<NodeId>,
}

/// Heartbeat bookkeeping for one round: updates every member's health from
/// whether it was up, then replaces a dead or missing driver.
pub fn check_health(
    state: &mut ClusterState,
    round: u32,
    up: &[bool],
    thresholds: &HealthThresholds,
    criteria: &DriverCriteria,
) -> Result<Option<DriverEvent>, ProtocolError> {
    for (i, &m) in state.members.iter().enumerate() {
        if up[m as usize] {
            state.health[i].record_heartbeat(round);
        } else {
            state.health[i].record_miss(thresholds);
        }
    }
    let driver_dead = match state.driver {
        None => true,
        Some(d) => state.health_of(d).status == HealthStatus::Dead,
    };
    if !driver_dead {
        return Ok(None);
    }
    let alive = state.alive_members();
    let elected = if alive.is_empty() { None } else { Some(elect_driver(criteria, &alive)?) };
    if elected == state.driver {
        return Ok(None);
    }
    let event = DriverEvent { round, cluster_id: state.cluster_id, previous: state.driver, elected };
    state.driver = elected;
    Ok(Some(event))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    pub k_peers: usize,
    pub min_improvement: f64,
    pub max_gap: u32,
    pub suspect_threshold: u32,
    pub dead_threshold: u32,
    pub election_weights: [f64; CRITERIA],
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            k_peers: 3,
            min_improvement: CheckpointPolicy::default().min_improvement,
            max_gap: CheckpointPolicy::default().max_gap,
            suspect_threshold: 2,
            dead_threshold: 3,
            election_weights: [1.0 / CRITERIA as f64; CRITERIA],
        }
    }
}

impl ProtocolParams {
    pub fn checkpoint(&self) -> CheckpointPolicy {
        CheckpointPolicy { min_improvement: self.min_improvement, max_gap: self.max_gap }
    }

    pub fn thresholds(&self) -> HealthThresholds {
        HealthThresholds { suspect: self.suspect_threshold, dead: self.dead_threshold }
    }
}

/// Mutable state of one cluster across rounds. Per-member vectors are
/// aligned with `members`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub cluster_id: usize,
    pub members: Vec<NodeId>,
    pub driver: Option<NodeId>,
    pub start: Vec<ModelWeights>,
    pub health: Vec<HealthState>,
    pub test_data: Vec<LabeledExample>,
    pub last_uploaded_accuracy: Option<f64>,
    pub rounds_since_upload: u32,
    pub checkpoints: Vec<CheckpointRecord>,
}

impl ClusterState {
    pub fn new(cluster_id: usize, members: Vec<NodeId>, driver: Option<NodeId>, init: &ModelWeights, partitions: &[NodePartition]) -> Self {
        let test_data = members.iter().flat_map(|&m| partitions[m as usize].test.iter().cloned()).collect();
        Self {
            cluster_id,
            start: vec![init.clone(); members.len()],
            health: vec![HealthState::default(); members.len()],
            members,
            driver,
            test_data,
            last_uploaded_accuracy: None,
            rounds_since_upload: 0,
            checkpoints: Vec::new(),
        }
    }

    fn index_of(&self, node: NodeId) -> usize {
        self.members.iter().position(|&m| m == node).expect("node is a member")
    }

    pub fn health_of(&self, node: NodeId) -> &HealthState {
        &self.health[self.index_of(node)]
    }

    pub fn alive_members(&self) -> Vec<NodeId> {
        self.members.iter().zip(&self.health).filter(|(_, h)| h.status == HealthStatus::Alive).map(|(&m, _)| m).collect()
    }

    pub fn latest_checkpoint(&self) -> Option<&CheckpointRecord> {
        self.checkpoints.last()
    }
}

/// Read-only inputs shared by every cluster in a round.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub round: u32,
    pub seed: u64,
    pub params: &'a ProtocolParams,
    pub training: &'a TrainConfig,
    pub partitions: &'a [NodePartition],
    /// Ground-truth liveness by node id.
    pub up: &'a [bool],
    pub criteria: &'a DriverCriteria,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRound {
    pub round: u32,
    pub cluster_id: usize,
    pub driver: Option<NodeId>,
    pub participants: usize,
    pub accuracy: Option<f64>,
    pub uploaded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRoundOutcome {
    pub summary: ClusterRound,
    pub messages: Vec<MessageRecord>,
    pub driver_event: Option<DriverEvent>,
    /// Peers whose weights each participant actually consumed.
    pub exchanges: Vec<(NodeId, Vec<NodeId>)>,
}

fn node(n: NodeId) -> Endpoint {
    Endpoint::Node(n)
}

/// Runs one protocol round for a cluster.
pub fn run_cluster_round(state: &mut ClusterState, ctx: &RoundContext<'_>) -> Result<ClusterRoundOutcome, ProtocolError> {
    let round = ctx.round;
    let weight_bytes = state.start.first().map_or(0, ModelWeights::payload_bytes);
    let mut messages = Vec::new();
    let mut msg = |kind, src, dst, payload_bytes| messages.push(MessageRecord { round, kind, src, dst, payload_bytes });

    let previous_driver = state.driver;
    for &m in &state.members {
        if ctx.up[m as usize] {
            let dst = match previous_driver {
                Some(d) if d != m => node(d),
                _ => Endpoint::Server,
            };
            msg(MessageKind::Heartbeat, node(m), dst, crate::simnet::HEARTBEAT_BYTES);
        }
    }
    let driver_event = check_health(state, round, ctx.up, &ctx.params.thresholds(), ctx.criteria)?;

    let participants: Vec<usize> = (0..state.members.len()).filter(|&i| ctx.up[state.members[i] as usize]).collect();

    let mut trained: Vec<Option<ModelWeights>> = vec![None; state.members.len()];
    for &i in &participants {
        let id = state.members[i];
        let mut rng = seeding::rng(ctx.seed, Stream::Training, round as u64, id as u64);
        trained[i] = Some(train_local(&state.start[i], &ctx.partitions[id as usize].train, ctx.training, &mut rng)?);
    }

    let alive = state.alive_members();
    let mut updated: Vec<Option<ModelWeights>> = vec![None; state.members.len()];
    let mut exchanges = Vec::with_capacity(participants.len());
    for &i in &participants {
        let id = state.members[i];
        let peers = select_peers(&alive, id, ctx.params.k_peers, round, ctx.seed);
        let mut got = Vec::new();
        let mut from = Vec::new();
        for p in peers {
            if let Some(w) = trained[state.index_of(p)].as_ref() {
                msg(MessageKind::PeerExchange, node(p), node(id), weight_bytes);
                got.push(w);
                from.push(p);
            }
        }
        updated[i] = Some(peer_exchange_update(trained[i].as_ref().expect("participant trained"), &got)?);
        exchanges.push((id, from));
    }

    let driver = state.driver;
    let driver_up = driver.is_some_and(|d| ctx.up[d as usize]);
    if let Some(d) = driver {
        for &i in &participants {
            let id = state.members[i];
            if id != d {
                msg(MessageKind::MemberToDriver, node(id), node(d), weight_bytes);
            }
        }
    }

    state.rounds_since_upload += 1;
    let mut accuracy = None;
    let mut uploaded = false;
    if driver_up && !participants.is_empty() {
        let d = driver.expect("driver is up");
        let inputs: Vec<&ModelWeights> = participants.iter().map(|&i| updated[i].as_ref().expect("updated")).collect();
        let consensus = driver_consensus_aggregate(&inputs)?;
        let acc = evaluate(&consensus, &state.test_data).accuracy;
        accuracy = Some(acc);
        if should_checkpoint(state.last_uploaded_accuracy, acc, state.rounds_since_upload, &ctx.params.checkpoint()) {
            msg(MessageKind::GlobalUpload, node(d), Endpoint::Server, weight_bytes);
            state.checkpoints.push(CheckpointRecord {
                cluster_id: state.cluster_id,
                round,
                weights: consensus.clone(),
                cluster_accuracy: acc,
            });
            state.last_uploaded_accuracy = Some(acc);
            state.rounds_since_upload = 0;
            uploaded = true;
        }
        for &i in &participants {
            let id = state.members[i];
            if id != d {
                msg(MessageKind::DriverBroadcast, node(d), node(id), weight_bytes);
            }
            state.start[i] = consensus.clone();
        }
    } else {
        // driver unreachable: members carry their exchanged weights forward
        for &i in &participants {
            state.start[i] = updated[i].take().expect("updated");
        }
    }

    Ok(ClusterRoundOutcome {
        summary: ClusterRound { round, cluster_id: state.cluster_id, driver, participants: participants.len(), accuracy, uploaded },
        messages,
        driver_event,
        exchanges,
    })
}
