//! The 25-dimensional feature space the mixture model is fitted in:
//!
//! `[log₁₀TSS, log₁₀DOC, log₁₀TChl-a, 5×a*_d, 5×a*_y, 5×a*_ph, 5×b*_bp, T, S]`
//!
//! where each block of five is the PCA scores of the log₁₀ SIOP spectrum.

use serde::{Deserialize, Serialize};

use super::pca::{fit_pca, PcaBasis, N_COMPONENTS};
use super::SynthError;
use crate::bio_optics::{BgcState, SiopSet, TEMP_RANGE};
use crate::siop::SpectralLibrary;
use crate::spectral::Spectrum;

/// `5 + 4·P`.
pub const FEATURE_DIM: usize = 5 + 4 * N_COMPONENTS;
/// Number of SIOP score entries.
pub const N_SCORES: usize = 4 * N_COMPONENTS;
/// Index of the first SIOP score in a feature vector.
pub const SCORE_OFFSET: usize = 3;
pub const TEMP_INDEX: usize = FEATURE_DIM - 2;
pub const SAL_INDEX: usize = FEATURE_DIM - 1;

/// SIOP values are floored here before taking log₁₀, so measured zeros
/// (e.g. NAP absorption at the red end) stay finite.
pub const LOG_FLOOR: f64 = 1e-9;

pub const SIOP_FAMILIES: [&str; 4] = ["a_d", "a_y", "a_ph", "b_bp"];

/// Clamp ranges applied when mapping sampled features back to physical space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clamps {
    pub temp: (f64, f64),
    pub sal: (f64, f64),
}

impl Default for Clamps {
    fn default() -> Self {
        Self { temp: TEMP_RANGE, sal: (0.0, 42.0) }
    }
}

/// One PCA basis per SIOP family, in the order a*_d, a*_y, a*_ph, b*_bp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub bases: [PcaBasis; 4],
    pub clamps: Clamps,
}

fn log_spectrum(s: &Spectrum) -> Spectrum {
    s.map(|v| v.max(LOG_FLOOR).log10())
}

impl FeatureSpace {
    /// Fits the four bases on the library's derived SIOPs.
    pub fn fit(library: &SpectralLibrary) -> Result<Self, SynthError> {
        let siops = library.siops()?;
        let fit_family = |pick: fn(&SiopSet) -> &Spectrum| {
            let logs: Vec<Spectrum> = siops.iter().map(|s| log_spectrum(pick(s))).collect();
            fit_pca(&logs, N_COMPONENTS)
        };
        Ok(Self {
            bases: [
                fit_family(|s| &s.a_d_star)?,
                fit_family(|s| &s.a_y_star)?,
                fit_family(|s| &s.a_ph_star)?,
                fit_family(|s| &s.b_bp_star)?,
            ],
            clamps: Clamps::default(),
        })
    }

    /// PCA scores of a SIOP set (20 values).
    pub fn siop_scores(&self, siops: &SiopSet) -> Vec<f64> {
        self.bases.iter().zip(siops.families()).flat_map(|(b, s)| b.project(&log_spectrum(s))).collect()
    }

    /// Feature vector of one sample.
    pub fn assemble(&self, bgc: &BgcState, siops: &SiopSet) -> Result<Vec<f64>, SynthError> {
        for (name, v) in [("TSS", bgc.tss), ("DOC", bgc.doc), ("TChl-a", bgc.tchla)] {
            if !(v > 0.0) {
                return Err(SynthError::NonPositiveConcentration { name, value: v });
            }
        }
        let mut f = Vec::with_capacity(FEATURE_DIM);
        f.extend([bgc.tss.log10(), bgc.doc.log10(), bgc.tchla.log10()]);
        f.extend(self.siop_scores(siops));
        f.extend([bgc.temp, bgc.sal]);
        Ok(f)
    }

    /// Feature matrix of a library, one row per record.
    pub fn assemble_library(&self, library: &SpectralLibrary) -> Result<Vec<Vec<f64>>, SynthError> {
        library.records.iter().map(|r| self.assemble(&r.bgc(), &r.siops()?)).collect()
    }

    /// Rebuilds SIOP spectra from 20 scores.
    pub fn siops_from_scores(&self, scores: &[f64]) -> Result<SiopSet, SynthError> {
        if scores.len() != N_SCORES {
            return Err(SynthError::Dimension { expected: N_SCORES, got: scores.len() });
        }
        let spectra: Vec<Spectrum> = self
            .bases
            .iter()
            .zip(scores.chunks(N_COMPONENTS))
            .map(|(b, s)| {
                let log = b.reconstruct(s)?;
                Spectrum::new(log.values().iter().map(|v| 10f64.powf(*v)).collect())
                    .map_err(|_| SynthError::NonFinite("SIOP spectrum overflow"))
            })
            .collect::<Result<_, _>>()?;
        let [a_d_star, a_y_star, a_ph_star, b_bp_star]: [Spectrum; 4] = spectra.try_into().unwrap();
        Ok(SiopSet { a_d_star, a_y_star, a_ph_star, b_bp_star })
    }

    /// Maps a feature vector back to physical space. Temperature and salinity
    /// are clamped; draws are never rejected.
    pub fn invert(&self, v: &[f64]) -> Result<(BgcState, SiopSet), SynthError> {
        if v.len() != FEATURE_DIM {
            return Err(SynthError::Dimension { expected: FEATURE_DIM, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SynthError::NonFinite("feature vector"));
        }
        let conc = |x: f64| {
            let c = 10f64.powf(x);
            if c > 0.0 && c.is_finite() {
                Ok(c)
            } else {
                Err(SynthError::NonFinite("concentration out of floating-point range"))
            }
        };
        let bgc = BgcState {
            tss: conc(v[0])?,
            doc: conc(v[1])?,
            tchla: conc(v[2])?,
            temp: v[TEMP_INDEX].clamp(self.clamps.temp.0, self.clamps.temp.1),
            sal: v[SAL_INDEX].clamp(self.clamps.sal.0, self.clamps.sal.1),
        };
        let siops = self.siops_from_scores(&v[SCORE_OFFSET..SCORE_OFFSET + N_SCORES])?;
        Ok((bgc, siops))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::LibraryMixture;

    fn library() -> SpectralLibrary {
        LibraryMixture::standard().generate(60, 5)
    }

    #[test]
    fn layout_and_log_scaling() {
        let lib = library();
        let fs = FeatureSpace::fit(&lib).unwrap();
        let mut rec = lib.records[0].clone();
        rec.tss = 10.0;
        rec.a_d = rec.a_d.scale(10.0 / lib.records[0].tss);
        rec.b_bp_550 *= 10.0 / lib.records[0].tss;
        let f = fs.assemble(&rec.bgc(), &rec.siops().unwrap()).unwrap();
        assert_eq!(f.len(), 25);
        assert!((f[0] - 1.0).abs() < 1e-15);
        assert_eq!(f[TEMP_INDEX], rec.temp);
        assert_eq!(f[SAL_INDEX], rec.sal);
    }

    #[test]
    fn mean_siops_have_zero_scores() {
        let fs = FeatureSpace::fit(&library()).unwrap();
        let mean = fs.siops_from_scores(&[0.0; N_SCORES]).unwrap();
        // Zero scores give 10^(mean log spectrum) ...
        for (b, s) in fs.bases.iter().zip(mean.families()) {
            for (m, v) in b.mean.iter().zip(s.values()) {
                assert!((10f64.powf(*m) - v).abs() <= 1e-12 * v);
            }
        }
        // ... and that spectrum projects back onto zero scores.
        assert!(fs.siop_scores(&mean).iter().all(|s| s.abs() < 1e-9));
    }

    #[test]
    fn library_features_finite() {
        let lib = library();
        let fs = FeatureSpace::fit(&lib).unwrap();
        let m = fs.assemble_library(&lib).unwrap();
        assert_eq!(m.len(), lib.len());
        assert!(m.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn invert_examples_and_round_trip() {
        let lib = library();
        let fs = FeatureSpace::fit(&lib).unwrap();
        let mut v = fs.assemble_library(&lib).unwrap()[3].clone();
        v[0] = 1.0;
        let (bgc, siops) = fs.invert(&v).unwrap();
        assert!((bgc.tss - 10.0).abs() < 1e-12);
        let back = fs.assemble(&bgc, &siops).unwrap();
        assert!(v.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-9), "{v:?} vs {back:?}");

        let mut wild = v.clone();
        wild[SAL_INDEX] = 55.0;
        wild[TEMP_INDEX] = -9.0;
        let (b, _) = fs.invert(&wild).unwrap();
        assert_eq!(b.sal, 42.0);
        assert_eq!(b.temp, -2.0);

        wild[4] = f64::NAN;
        assert!(fs.invert(&wild).is_err());
        assert!(fs.invert(&v[..24]).is_err());
    }

    #[test]
    fn nonpositive_concentration_rejected() {
        let lib = library();
        let fs = FeatureSpace::fit(&lib).unwrap();
        let mut b = lib.records[0].bgc();
        b.doc = 0.0;
        assert!(matches!(
            fs.assemble(&b, &lib.records[0].siops().unwrap()),
            Err(SynthError::NonPositiveConcentration { name: "DOC", .. })
        ));
    }
}
