//! Optimization loop: per-epoch SGD over the training split, the optional
//! VSCT pass, class-balanced sampling and top-k evaluation.

mod config;
mod metrics;
mod sampler;
mod trainer;
mod vsct;

pub use config::{TauBase, TrainConfig, VsctConfig};
pub use metrics::{
    evaluate, evaluate_prepared, per_class_accuracy, predict_logits, prepare_input, prepare_inputs, score_logits,
    ClassAccuracy, Evaluation, PerClassAccuracy, THREADS_ENV,
};
pub use sampler::{balanced_sampler, BalancedSampler};
pub use trainer::{train, EpochStats, Trainer};
pub use vsct::{build_vsct_minibatch, select_worst_classes, vsct_class_count, vsct_step, VsctOutcome, CEIL_SLACK};

use thiserror::Error;

use crate::diffcore::DiffError;
use crate::model::ModelError;
use crate::preprocess::PreprocessError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dataset is empty")]
    EmptyData,
    #[error("class {class} ({gloss:?}) has no training samples")]
    EmptyClass { class: usize, gloss: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

impl From<DiffError> for TrainError {
    fn from(e: DiffError) -> Self {
        TrainError::Model(ModelError::Diff(e))
    }
}

#[cfg(test)]
mod tests;
