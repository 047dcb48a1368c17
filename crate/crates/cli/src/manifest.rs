use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, label: String) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
        Ok(Self { path: label, sha256: Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect() })
    }
}

/// Provenance of one command run, written as `manifest_<command>.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn write(
        out_dir: &Path,
        command: &str,
        config_hash: String,
        seed: u64,
        inputs: &[&Path],
        outputs: &[&Path],
    ) -> Result<(), CliError> {
        let m = Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash,
            seed,
            inputs: inputs.iter().map(|p| FileDigest::of(p, p.display().to_string())).collect::<Result<_, _>>()?,
            outputs: outputs
                .iter()
                .map(|p| FileDigest::of(p, p.file_name().unwrap_or_default().to_string_lossy().into_owned()))
                .collect::<Result<_, _>>()?,
        };
        io::write_json(&out_dir.join(format!("manifest_{command}.json")), &m)
    }
}
