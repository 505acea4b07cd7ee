//! Optimization and evaluation: the mean-Euclidean loss, Adam/AdamW, the
//! plateau learning-rate schedule, early stopping, error metrics, inference
//! latency and ablation sweeps.

mod ablation;
mod bench;
mod fit;
mod loss;
mod metrics;
mod optim;
mod schedule;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::datagen::{DatasetManifest, Provenance};
use crate::gnn::GnnError;

pub use ablation::{ablation_table, ablation_variants, run_ablation, AblationAxis, AblationData, AblationRow, AblationVariant};
pub use bench::{benchmark_inference, LatencyReport, MIN_REPEATS};
pub use fit::{mean_loss, train_model, EpochRecord, TrainConfig, TrainOutcome};
pub use loss::{loss_mean_euclidean, mean_euclidean, SQRT_GUARD};
pub use metrics::{
    evaluate, prepare_features, EvalOptions, MetricsReport, ModelPredictor, OraclePredictor, Predictor,
    ZeroPredictor,
};
pub use optim::{AdamConfig, OptimizerKind, OptimizerState};
pub use schedule::{EarlyStopping, PlateauScheduler, StopDecision};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("prediction shape {pred:?} does not match label shape {labels:?}")]
    ShapeMismatch { pred: Vec<usize>, labels: Vec<usize> },
    #[error("non-finite gradient for parameter {name}")]
    NonFiniteGradient { name: String },
    #[error("non-finite loss in epoch {epoch} on {split} sample (selection {}, direction {}, step {})",
        .provenance.selection, .provenance.direction, .provenance.time_step)]
    NonFiniteLoss {
        epoch: usize,
        split: &'static str,
        provenance: Provenance,
    },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("benchmark needs at least {MIN_REPEATS} repeats, got {0}")]
    TooFewRepeats(usize),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// SHA-256 of the manifest's canonical JSON encoding.
pub fn manifest_sha256(manifest: &DatasetManifest) -> [u8; 32] {
    let bytes = serde_json::to_vec(manifest).expect("manifest serializes");
    Sha256::digest(&bytes).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
