//! Synthetic data generation: PCA-compressed SIOP features, a Dirichlet-process
//! Gaussian mixture over them, and forward simulation of the sampled states.

use thiserror::Error;

use crate::bio_optics::OpticsError;
use crate::siop::LibraryError;

pub mod dataset;
pub mod dpgmm;
pub mod features;
pub mod pca;

pub use dataset::{generate_dataset, Generated, GmmArtifact, SynthConfig, SyntheticDataset, SyntheticRecord};
pub use dpgmm::{fit_dpgmm, sample_features, DpGmmConfig, GmmComponent, GmmFit, GmmModel};
pub use features::{Clamps, FeatureSpace, FEATURE_DIM};
pub use pca::{fit_pca, PcaBasis, N_COMPONENTS};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("{name} must be positive to take its logarithm, got {value}")]
    NonPositiveConcentration { name: &'static str, value: f64 },
    #[error("covariance of component {component} is not positive definite even after jitter")]
    NotPositiveDefinite { component: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error("{0}")]
    Io(String),
}
