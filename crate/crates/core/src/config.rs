//! Run configuration: one TOML file with a section per component.

use crate::clustering::DistanceMix;
use crate::data::PartitionMode;
use crate::exec::Parallelism;
use crate::model::TrainConfig;
use crate::profiles::{RawScoreWeights, ScoreWeights};
use crate::protocol::{ProtocolParams, CRITERIA_NAMES};
use crate::simnet::{CostModel, FaultPlan};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("{} violation(s):\n{}", .0.len(), .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
}

/// One failed check, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub n_nodes: usize,
    pub partition: PartitionMode,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { path: PathBuf::from("data/wdbc.data"), n_nodes: 100, partition: PartitionMode::Iid, test_fraction: 0.2 }
    }
}

/// Synthetic placement of nodes around regional centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    /// Number of regional centres; defaults to the cluster count.
    pub regions: Option<usize>,
    pub region_radius_km: f64,
    pub lat_range: [f64; 2],
    pub lon_range: [f64; 2],
    /// Per-node trust scores in [0, 1]; drawn at random when absent.
    pub trust: Option<Vec<f64>>,
    /// Per-node data representativeness in [0, 1]; derived from label mix when absent.
    pub representativeness: Option<Vec<f64>>,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            regions: None,
            region_radius_km: 150.0,
            lat_range: [30.0, 48.0],
            lon_range: [-122.0, -72.0],
            trust: None,
            representativeness: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    /// Cluster count; defaults to one per ten nodes.
    pub k: Option<usize>,
    /// Weights of data similarity, performance index and geography.
    pub mix: [f64; 3],
    pub geo_scale_km: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        let m = DistanceMix::default();
        Self { k: None, mix: [m.w_ds, m.w_pi, m.w_gp], geo_scale_km: m.geo_scale_km }
    }
}

impl ClusteringConfig {
    pub fn distance_mix(&self) -> DistanceMix {
        DistanceMix { w_ds: self.mix[0], w_pi: self.mix[1], w_gp: self.mix[2], geo_scale_km: self.geo_scale_km }
    }

    pub fn k_for(&self, nodes: usize) -> usize {
        self.k.unwrap_or_else(|| crate::clustering::default_k(nodes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub rounds: u32,
    pub output_dir: Option<PathBuf>,
    pub parallelism: Parallelism,
    pub data: DataConfig,
    pub fleet: FleetConfig,
    pub scores: RawScoreWeights,
    pub clustering: ClusteringConfig,
    pub protocol: ProtocolParams,
    pub training: TrainConfig,
    pub cost: CostModel,
    pub faults: FaultPlan,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            rounds: 30,
            output_dir: None,
            parallelism: Parallelism::default(),
            data: DataConfig::default(),
            fleet: FleetConfig::default(),
            scores: RawScoreWeights::default(),
            clustering: ClusteringConfig::default(),
            protocol: ProtocolParams::default(),
            training: TrainConfig::default(),
            cost: CostModel::default(),
            faults: FaultPlan::default(),
        }
    }
}

fn check(out: &mut Vec<Violation>, ok: bool, field: &str, message: impl Into<String>) {
    if !ok {
        out.push(Violation { field: field.to_string(), message: message.into() });
    }
}

fn finite_pos(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads a config file; a relative dataset path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.data.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
        }
        Ok(cfg)
    }

    pub fn score_weights(&self) -> Result<ScoreWeights, ConfigError> {
        ScoreWeights::try_from(self.scores.clone())
            .map_err(|e| ConfigError::Invalid(vec![Violation { field: "scores".into(), message: e.to_string() }]))
    }

    /// Every invariant check; an empty list means the run may start.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let d = &self.data;
        check(&mut v, d.n_nodes >= 1, "data.n_nodes", "must be at least 1");
        check(&mut v, (0.0..1.0).contains(&d.test_fraction), "data.test_fraction", format!("must lie in [0, 1), got {}", d.test_fraction));

        let f = &self.fleet;
        check(&mut v, f.regions != Some(0), "fleet.regions", "must be positive");
        check(&mut v, f.region_radius_km.is_finite() && f.region_radius_km >= 0.0, "fleet.region_radius_km", "must be non-negative");
        check(
            &mut v,
            f.lat_range[0] <= f.lat_range[1] && f.lat_range[0] >= -85.0 && f.lat_range[1] <= 85.0,
            "fleet.lat_range",
            "must be an ordered range within [-85, 85]",
        );
        check(
            &mut v,
            f.lon_range[0] <= f.lon_range[1] && f.lon_range[0] > -175.0 && f.lon_range[1] < 175.0,
            "fleet.lon_range",
            "must be an ordered range within (-175, 175)",
        );
        for (field, values) in [("fleet.trust", &f.trust), ("fleet.representativeness", &f.representativeness)] {
            if let Some(values) = values {
                check(&mut v, values.len() == d.n_nodes, field, format!("needs one value per node ({}), got {}", d.n_nodes, values.len()));
                check(&mut v, values.iter().all(|x| (0.0..=1.0).contains(x)), field, "values must lie in [0, 1]");
            }
        }

        if let Err(e) = ScoreWeights::try_from(self.scores.clone()) {
            v.push(Violation { field: "scores".into(), message: e.to_string() });
        }

        let c = &self.clustering;
        if let Some(k) = c.k {
            check(&mut v, k >= 1 && k <= d.n_nodes, "clustering.k", format!("must lie in [1, n_nodes = {}], got {k}", d.n_nodes));
        }
        check(
            &mut v,
            c.mix.iter().all(|x| x.is_finite() && *x >= 0.0) && (c.mix.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
            "clustering.mix",
            format!("weights must be >= 0 and sum to 1, got {:?}", c.mix),
        );
        check(&mut v, finite_pos(c.geo_scale_km), "clustering.geo_scale_km", "must be positive");

        let p = &self.protocol;
        check(&mut v, p.min_improvement.is_finite() && p.min_improvement >= 0.0, "protocol.min_improvement", "must be non-negative");
        check(&mut v, p.max_gap >= 1, "protocol.max_gap", "must be at least 1");
        check(&mut v, p.suspect_threshold >= 1, "protocol.suspect_threshold", "must be at least 1");
        check(
            &mut v,
            p.suspect_threshold < p.dead_threshold,
            "protocol.dead_threshold",
            format!("must exceed suspect_threshold ({} vs {})", p.dead_threshold, p.suspect_threshold),
        );
        let ew = &p.election_weights;
        check(&mut v, ew.iter().all(|x| x.is_finite() && *x >= 0.0), "protocol.election_weights", "weights must be >= 0");
        let sum: f64 = ew.iter().sum();
        check(
            &mut v,
            (sum - 1.0).abs() <= 1e-9,
            "protocol.election_weights",
            format!("must sum to 1 over {:?}, got {sum}", CRITERIA_NAMES),
        );

        for (field, msg) in self.training.violations() {
            v.push(Violation { field, message: msg });
        }
        for (field, msg) in self.cost.violations() {
            v.push(Violation { field, message: msg });
        }
        for (field, msg) in self.faults.violations(d.n_nodes) {
            v.push(Violation { field, message: msg });
        }
        v
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}
