//! Simulation engine for personalized federated learning with attention-based
//! client selection.
//!
//! Clients hold flat parameter vectors. Each round the server measures cosine
//! similarity between participating models, drops pairs below a per-round
//! quantile threshold, and hands every client a similarity-weighted average of
//! its neighbours as the starting point for local SGD. FedAvg, a FedAMP-style
//! variant and local-only training share the same round machinery so they can
//! be compared seed-for-seed.

pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod federated;
pub mod model;
pub mod rng;
pub mod similarity;

pub use config::{DatasetConfig, ExperimentConfig, ModelConfig};
pub use data::{ClientShard, LabeledDataset, PartitionConfig, PartitionScheme};
pub use diagnostics::{AssumptionProbe, StationarityTrace, TraceRecord};
pub use error::{Error, Result};
pub use experiment::{run_experiment, AlgorithmSummary, MetricsSeries, RoundRecord, SeedRun};
pub use federated::{
    AlgoConfig, Algorithm, FederatedState, IntermediateRule, LocalObjective, QuadraticObjective, RoundOutcome,
    ShardObjective, StepSchedule,
};
pub use model::{Activation, Batch, ModelKind, ModelSpec, ParamVector};
pub use similarity::{AttentionWeights, SimilarityMatrix};
