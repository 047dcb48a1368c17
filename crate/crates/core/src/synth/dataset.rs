//! Fit, sample, invert, simulate: the synthetic BGC / R_rs dataset.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dpgmm::{fit_dpgmm, record_rng, DpGmmConfig, GmmModel};
use super::features::{FeatureSpace, N_SCORES, SCORE_OFFSET};
use super::SynthError;
use crate::bio_optics::{BgcState, ForwardModel, SiopSet};
use crate::siop::SpectralLibrary;
use crate::spectral::{Spectrum, WavelengthGrid, N_BANDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Number of records to draw.
    pub k: usize,
    pub seed: u64,
    /// Multiplicative Gaussian noise on R_rs, as a fraction of the signal.
    /// Zero disables it.
    pub noise: f64,
    pub gmm: DpGmmConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { k: 10_000, seed: 0, noise: 0.0, gmm: DpGmmConfig::default() }
    }
}

/// One synthetic sample. SIOP spectra are kept as their 20 PCA scores and
/// rebuilt on demand through the feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecord {
    pub bgc: BgcState,
    pub scores: Vec<f64>,
    pub rrs: Spectrum,
}

impl SyntheticRecord {
    pub fn siops(&self, features: &FeatureSpace) -> Result<SiopSet, SynthError> {
        features.siops_from_scores(&self.scores)
    }

    /// `log₁₀[TSS, DOC, TChl-a]`.
    pub fn log_targets(&self) -> [f64; 3] {
        self.bgc.concentrations().map(f64::log10)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticDataset {
    pub records: Vec<SyntheticRecord>,
}

/// Everything `synth` writes to `gmm.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmArtifact {
    pub config: SynthConfig,
    pub features: FeatureSpace,
    pub model: GmmModel,
    pub elbo: Vec<f64>,
    pub converged: bool,
}

/// Output of [`generate_dataset`].
#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: SyntheticDataset,
    pub artifact: GmmArtifact,
}

const NOISE_STREAM: u64 = 1 << 63;

/// Simulates one record from a sampled feature vector.
pub fn simulate_record(
    v: &[f64],
    features: &FeatureSpace,
    forward: &ForwardModel,
    noise: f64,
    seed: u64,
    k: u64,
) -> Result<SyntheticRecord, SynthError> {
    let (bgc, siops) = features.invert(v)?;
    let mut rrs = forward.simulate(&bgc, &siops)?;
    if noise > 0.0 {
        let mut rng = record_rng(seed, k | NOISE_STREAM);
        rrs = Spectrum::new(
            rrs.values().iter().map(|r| (r * (1.0 + noise * rng.sample::<f64, _>(StandardNormal))).max(0.0)).collect(),
        )
        .expect("finite");
    }
    let scores = v[SCORE_OFFSET..SCORE_OFFSET + N_SCORES].to_vec();
    Ok(SyntheticRecord { bgc, scores, rrs })
}

/// Full pipeline: fit the feature space and mixture on `library`, draw
/// `config.k` feature vectors, map them back and run the forward model.
pub fn generate_dataset(
    library: &SpectralLibrary,
    forward: &ForwardModel,
    config: &SynthConfig,
) -> Result<Generated, SynthError> {
    let features = FeatureSpace::fit(library)?;
    let matrix = features.assemble_library(library)?;
    let gmm_config = DpGmmConfig { seed: config.seed, ..config.gmm.clone() };
    let fit = fit_dpgmm(&matrix, &gmm_config)?;
    log::info!(
        "mixture fit: {} active components, {} iterations, converged={}",
        fit.model.components.len(),
        fit.iterations,
        fit.converged
    );
    let draws = fit.model.sample(config.k, config.seed)?;
    let records = draws
        .par_iter()
        .enumerate()
        .map(|(k, v)| simulate_record(v, &features, forward, config.noise, config.seed, k as u64))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Generated {
        dataset: SyntheticDataset { records },
        artifact: GmmArtifact {
            config: config.clone(),
            features,
            model: fit.model,
            elbo: fit.elbo,
            converged: fit.converged,
        },
    })
}

fn csv_err(e: impl std::fmt::Display) -> SynthError {
    SynthError::Io(format!("synthetic csv: {e}"))
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = ["k", "tss", "doc", "tchla", "temp", "sal"].iter().map(|s| s.to_string()).collect();
        for fam in super::features::SIOP_FAMILIES {
            h.extend((1..=super::N_COMPONENTS).map(|j| format!("{fam}_pc{j}")));
        }
        h.extend(WavelengthGrid.wavelengths().map(|nm| format!("rrs_{nm}")));
        h
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SynthError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::header()).map_err(csv_err)?;
        for (k, r) in self.records.iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend([r.bgc.tss, r.bgc.doc, r.bgc.tchla, r.bgc.temp, r.bgc.sal].iter().map(|v| v.to_string()));
            row.extend(r.scores.iter().map(|v| v.to_string()));
            row.extend(r.rrs.values().iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(csv_err)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SynthError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if header != Self::header() {
            return Err(SynthError::Io("synthetic csv: unexpected header".into()));
        }
        let mut records = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let v: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|s| s.parse::<f64>().map_err(|e| csv_err(format!("row {}: {e}", row + 1))))
                .collect::<Result<_, _>>()?;
            let bgc = BgcState { tss: v[0], doc: v[1], tchla: v[2], temp: v[3], sal: v[4] };
            let scores = v[5..5 + N_SCORES].to_vec();
            let rrs = Spectrum::new(v[5 + N_SCORES..5 + N_SCORES + N_BANDS].to_vec()).map_err(csv_err)?;
            records.push(SyntheticRecord { bgc, scores, rrs });
        }
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::LibraryMixture;

    fn small(k: usize, seed: u64) -> Generated {
        let lib = LibraryMixture::standard().generate(80, 21);
        generate_dataset(&lib, &ForwardModel::bundled(), &SynthConfig { k, seed, ..Default::default() }).unwrap()
    }

    #[test]
    fn smoke_ten_records() {
        let g = small(10, 3);
        assert_eq!(g.dataset.len(), 10);
        for r in &g.dataset.records {
            assert!(r.bgc.tss > 0.0 && r.bgc.doc > 0.0 && r.bgc.tchla > 0.0);
            assert!((-2.0..=40.0).contains(&r.bgc.temp));
            assert!((0.0..=42.0).contains(&r.bgc.sal));
            r.siops(&g.artifact.features).unwrap().validate().unwrap();
            assert!(r.rrs.values().iter().all(|v| v.is_finite() && *v >= 0.0));
        }
        g.artifact.model.validate().unwrap();
    }

    #[test]
    fn stored_rrs_matches_forward() {
        let g = small(40, 4);
        let fwd = ForwardModel::bundled();
        for r in &g.dataset.records {
            let siops = r.siops(&g.artifact.features).unwrap();
            assert_eq!(fwd.simulate(&r.bgc, &siops).unwrap(), r.rrs);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(small(30, 5).dataset, small(30, 5).dataset);
        assert_ne!(small(30, 5).dataset, small(30, 6).dataset);
    }

    #[test]
    fn noise_is_seeded_and_bounded() {
        let lib = LibraryMixture::standard().generate(80, 21);
        let cfg = SynthConfig { k: 20, seed: 8, noise: 0.05, ..Default::default() };
        let a = generate_dataset(&lib, &ForwardModel::bundled(), &cfg).unwrap();
        let b = generate_dataset(&lib, &ForwardModel::bundled(), &cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let clean = generate_dataset(&lib, &ForwardModel::bundled(), &SynthConfig { noise: 0.0, ..cfg }).unwrap();
        let mut rel = Vec::new();
        for (n, c) in a.dataset.records.iter().zip(&clean.dataset.records) {
            assert_eq!(n.bgc, c.bgc);
            rel.extend(n.rrs.values().iter().zip(c.rrs.values()).map(|(x, y)| x / y - 1.0));
        }
        let sd = (rel.iter().map(|v| v * v).sum::<f64>() / rel.len() as f64).sqrt();
        assert!((sd - 0.05).abs() < 0.005, "{sd}");
    }

    #[test]
    fn csv_round_trip() {
        let g = small(5, 9);
        let mut buf = Vec::new();
        g.dataset.write_csv(&mut buf).unwrap();
        let back = SyntheticDataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, g.dataset);
        let json = serde_json::to_string(&g.artifact).unwrap();
        let art: GmmArtifact = serde_json::from_str(&json).unwrap();
        assert_eq!(art, g.artifact);
    }
}
