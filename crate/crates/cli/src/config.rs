use std::path::{Path, PathBuf};

use bgcmeta_core::analysis::{EfastConfig, ParamRange, DEFAULT_BANDS};
use bgcmeta_core::meta::{AdaptConfig, TrainConfig};
use bgcmeta_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "BGCMETA_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub output_dir: PathBuf,
    pub library: Option<PathBuf>,
    pub water_iops: Option<PathBuf>,
    pub cie_tables: Option<PathBuf>,
    pub region: Option<PathBuf>,
    /// Synthetic dataset read by `pretrain`; defaults to the one `synth`
    /// writes into the output directory.
    pub synthetic: Option<PathBuf>,
    /// Model read by `adapt` and `predict`.
    pub model: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            library: None,
            water_iops: None,
            cie_tables: None,
            region: None,
            synthetic: None,
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub efast: EfastConfig,
    /// TSS, DOC, TChl-a bounds; library min/max when absent.
    pub ranges: Option<[ParamRange; 3]>,
    pub temp: f64,
    pub sal: f64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self { efast: EfastConfig::default(), ranges: None, temp: 22.0, sal: 35.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub adapt: AdaptConfig,
    pub cv: CvConfig,
    pub sensitivity: SensitivityConfig,
    /// Band-ratio reference model wavelengths (numerator, denominator).
    pub baseline_bands: [(f64, f64); 3],
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            adapt: AdaptConfig::default(),
            cv: CvConfig::default(),
            sensitivity: SensitivityConfig::default(),
            baseline_bands: DEFAULT_BANDS,
        }
    }
}

impl PipelineConfig {
    /// Reads `path`, or the file named by [`CONFIG_ENV`], or falls back to
    /// defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let path = path.map(Path::to_path_buf).or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let input = |e: String| CliError::Input(format!("config: {e}"));
        if self.synth.k == 0 {
            return Err(input("synth.k must be positive".into()));
        }
        if !(self.synth.noise >= 0.0 && self.synth.noise < 1.0) {
            return Err(input("synth.noise must lie in [0, 1)".into()));
        }
        self.train.validate().map_err(|e| input(e.to_string()))?;
        self.adapt.validate().map_err(|e| input(e.to_string()))?;
        if self.cv.folds < 2 {
            return Err(input("cv.folds must be at least 2".into()));
        }
        self.sensitivity.efast.validate().map_err(|e| input(e.to_string()))?;
        let s = &self.sensitivity;
        if !(-2.0..=40.0).contains(&s.temp) || !(0.0..=42.0).contains(&s.sal) {
            return Err(input("sensitivity temp/sal out of range".into()));
        }
        if let Some(r) = &s.ranges {
            if r.iter().any(|r| !(r.lo > 0.0 && r.hi >= r.lo && r.hi.is_finite())) {
                return Err(input("sensitivity ranges must be positive and ordered".into()));
            }
        }
        for (num, den) in self.baseline_bands {
            if !(400.0..=700.0).contains(&num) || !(400.0..=700.0).contains(&den) || num == den {
                return Err(input("baseline bands must be two distinct wavelengths in 400..700 nm".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.train.seed = seed;
        self.cv.seed = seed;
        self.sensitivity.efast.seed = seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_hash_is_stable() {
        let c = PipelineConfig::default();
        let json = serde_json::to_string_pretty(&c).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        let mut d = c.clone();
        d.set_seed(9);
        assert_ne!(d.hash(), c.hash());
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_and_unknown_keys() {
        let c: PipelineConfig = serde_json::from_str(r#"{"synth": {"k": 50}, "cv": {"folds": 5}}"#).unwrap();
        assert_eq!(c.synth.k, 50);
        assert_eq!(c.cv.folds, 5);
        assert_eq!(c.train, TrainConfig::default());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"synht": {}}"#).is_err());
    }

    #[test]
    fn validation() {
        let mut c = PipelineConfig::default();
        c.cv.folds = 1;
        assert!(matches!(c.validate(), Err(CliError::Input(_))));
        let mut c = PipelineConfig::default();
        c.baseline_bands[0] = (800.0, 550.0);
        assert!(c.validate().is_err());
    }
}
