//! The retrieval network, SIOP-neighbourhood tasks, meta-pretraining and
//! region adaptation.

use thiserror::Error;

pub mod mlp;
pub mod optim;
pub mod region;
pub mod task;
pub mod train;

pub use mlp::{Batch, InputTransform, MlpParams, HIDDEN, RRS_OFFSET};
pub use optim::{Adam, Optimizer, OptimizerKind};
pub use region::{RegionDataset, RegionRecord};
pub use task::{Task, TaskSampler};
pub use train::{
    assign_folds, cross_validate, initial_params, inner_adapt, meta_loss, meta_pretrain, region_adapt, sampler_for, AdaptConfig, AdaptOutcome, CvResult, EpochLog,
    PretrainOutcome, ResumeState, TrainConfig,
};

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite {what}")]
    NonFinite { what: String },
    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}
