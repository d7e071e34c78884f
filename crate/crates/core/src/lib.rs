//! Diagnosis of shared-infrastructure ("maintenance") versus single-premise
//! ("service") faults from periodically collected cable-device telemetry.
//!
//! The pipeline for one fiber node runs, per look-back window:
//!
//! 1. [`preprocess`]: duplicate collapsing, missing-point inference and
//!    pairwise alignment of irregular collection timestamps;
//! 2. [`features`]: Pearson similarity on SNR and Tx power, Hamming
//!    similarity on the missing-collection bitmap;
//! 3. [`cluster`]: average-linkage agglomeration stopped at a per-feature
//!    similarity threshold;
//! 4. [`detect`]: per-device threshold rules and cluster flagging;
//! 5. [`diagnose`]: cluster-size classification into maintenance or service.
//!
//! Hyper-parameters are tuned from trouble-ticket statistics in [`tune`],
//! results are scored in [`eval`], and [`synth`] produces labeled synthetic
//! fiber nodes for every experiment.

pub mod cluster;
pub mod detect;
pub mod diagnose;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod preprocess;
pub mod synth;
pub mod train;
pub mod tune;

pub use cluster::{agglomerate, dbscan_partition, Clusterer, Clustering, Dendrogram, Linkage, Partition};
pub use detect::{DetectionThresholds, DeviceAnomaly, Direction, MetricThreshold};
pub use diagnose::{
    diagnose_fnode, run_batch, run_reactive, Diagnosis, Label, PreparedFNode, ReactiveVerdict,
    WindowAnalysis,
};
pub use error::{Error, Result};
pub use eval::{rand_index, PairConfusion, RandScore};
pub use features::{hamming_similarity, pearson, SimilarityMatrix};
pub use model::{
    Feature, FeatureMap, FNodeDataset, HyperParams, Metric, Metrics, TelemetryPoint,
    TelemetrySeries, Ticket, TicketKind, SECONDS_PER_DAY, SECONDS_PER_HOUR,
};
pub use preprocess::{Alignment, Epoch, EpochGrid, EpochParams};
pub use synth::{GroundTruth, SynthConfig, SynthOutput};
pub use tune::{TicketStats, Trr};
