//! Deterministic, seedable simulator of a clustered federated-learning
//! architecture.
//!
//! Nodes compute schema and performance scores locally, the global server
//! groups them into clusters by data similarity, performance and geographic
//! proximity, and each cluster trains with peer weight exchange plus a
//! driver-side consensus step. Drivers gate uploads to the server with a
//! checkpoint policy and are re-elected when heartbeats stop. Every
//! simulated transmission is logged so communication cost can be compared
//! against a plain FedAvg baseline.

pub mod cli;
pub mod clustering;
pub mod config;
pub mod data;
pub mod exec;
pub mod geo;
pub mod model;
pub mod profiles;
pub mod protocol;
pub mod seeding;
pub mod simnet;

pub use clustering::{ClusterAssignment, ClusterFeature};
pub use config::RunConfig;
pub use data::{Label, LabeledExample, NodePartition};
pub use exec::Parallelism;
pub use geo::GeoPoint;
pub use model::{Metrics, ModelWeights, TrainConfig};
pub use profiles::{DeviceMetrics, NodeProfile, SchemaDescriptor, ScoreWeights};
pub use simnet::{Experiment, MessageKind, MessageRecord, ReportBundle, RunOutcome, RunReport};

/// Identifier of a simulated client node.
pub type NodeId = u32;
