//! Retrieval metrics, distribution comparison, forward-model sensitivity,
//! colour, and a band-ratio reference model.

use thiserror::Error;

pub mod baseline;
pub mod chroma;
pub mod efast;
pub mod fidelity;
pub mod ks;
pub mod metrics;

pub use baseline::{BandRatioModel, BandRatioSet, DEFAULT_BANDS};
pub use chroma::{chromaticity, Chromaticity, CieTables};
pub use fidelity::{compare as compare_fidelity, FidelityReport, FIDELITY_PAIRS, FIDELITY_VARIABLES};
pub use efast::{efast, forward_sensitivity, library_defaults, EfastConfig, Indices, ParamRange, SensitivityResult, PARAM_NAMES};
pub use ks::{ks_statistic, KsResult};
pub use metrics::{retrieval_metrics, RetrievalMetrics};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} valid values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("empty sample")]
    Empty,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}
