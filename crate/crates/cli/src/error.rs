use bgcmeta_core::analysis::AnalysisError;
use bgcmeta_core::bio_optics::OpticsError;
use bgcmeta_core::meta::MetaError;
use bgcmeta_core::siop::LibraryError;
use bgcmeta_core::synth::SynthError;
use thiserror::Error;

/// Failures grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, missing or malformed input files.
    #[error("{0}")]
    Input(String),
    /// Training or fitting diverged, degenerate data.
    #[error("{0}")]
    Numerical(String),
    /// Anything else, e.g. an unwritable output directory.
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Input(m) => CliError::Input(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
            CliError::Other(m) => CliError::Other(format!("{what}: {m}")),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::NonFinite(_) | SynthError::NotPositiveDefinite { .. } => CliError::Numerical(e.to_string()),
            SynthError::Optics(o) => o.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<OpticsError> for CliError {
    fn from(e: OpticsError) -> Self {
        match e {
            OpticsError::NonPositiveDenominator(_)
            | OpticsError::AlbedoRange { .. }
            | OpticsError::InterfaceSingularity { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<LibraryError> for CliError {
    fn from(e: LibraryError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<MetaError> for CliError {
    fn from(e: MetaError) -> Self {
        match e {
            MetaError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Degenerate(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}
