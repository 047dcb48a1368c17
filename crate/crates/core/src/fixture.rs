//! Synthetic stand-in for a measured spectral library.
//!
//! Records are drawn from a known mixture of three water types (clear
//! marine, coastal, river-influenced estuarine). Concentrations are
//! log-normal and mutually correlated within a type, salinity falls as
//! concentrations rise, and the IOP spectra follow the usual parametric
//! shapes: exponential NAP and CDOM absorption, a power-law particulate
//! backscatter, and phytoplankton absorption with blue and red chlorophyll
//! peaks.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::siop::{LibraryRecord, SpectralLibrary};
use crate::spectral::Spectrum;
use crate::synth::dpgmm::record_rng;

/// One water type of the generating mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterType {
    pub name: String,
    pub weight: f64,
    /// Mean log₁₀ of TSS (mg/L), DOC (mg/L), TChl-a (µg/L).
    pub log_mean: [f64; 3],
    pub log_sd: [f64; 3],
    /// Share of each concentration's variance carried by a common factor.
    pub shared: f64,
    pub temp: (f64, f64),
    pub sal: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryMixture {
    pub types: Vec<WaterType>,
    /// Median mass-specific a_y(440), b_bp(550), a_d(440), a_ph(440).
    pub siop_median: [f64; 4],
    /// Log₁₀ spread of the mass-specific coefficients.
    pub siop_log_sd: f64,
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

impl LibraryMixture {
    pub fn standard() -> Self {
        let wt = |name: &str, weight, log_mean, temp, sal| WaterType {
            name: name.into(),
            weight,
            log_mean,
            log_sd: [0.3, 0.2, 0.3],
            shared: 0.6,
            temp,
            sal,
        };
        Self {
            types: vec![
                wt("marine", 0.45, [0.0, -0.05, -0.25], (25.0, 3.5), (35.5, 1.5)),
                wt("coastal", 0.35, [0.55, 0.2, 0.15], (25.0, 4.0), (30.0, 3.0)),
                wt("estuarine", 0.20, [1.25, 0.6, 0.6], (23.0, 4.5), (12.0, 7.0)),
            ],
            siop_median: [0.23, 0.0077, 0.03, 0.06],
            siop_log_sd: 0.2,
        }
    }

    /// Draws `n` records. Record `i` only depends on `(seed, i)`.
    pub fn generate(&self, n: usize, seed: u64) -> SpectralLibrary {
        let records = (0..n).map(|i| self.record(seed, i as u64)).collect();
        SpectralLibrary::new(records).expect("fixture records are valid")
    }

    fn record(&self, seed: u64, i: u64) -> LibraryRecord {
        let mut rng = record_rng(seed, i);
        let total: f64 = self.types.iter().map(|t| t.weight).sum();
        let mut u = rng.random::<f64>() * total;
        let t = self
            .types
            .iter()
            .find(|t| {
                u -= t.weight;
                u < 0.0
            })
            .unwrap_or(self.types.last().unwrap());

        let common = normal(&mut rng);
        let own = (1.0 - t.shared * t.shared).sqrt();
        let mut conc = [0.0; 3];
        for j in 0..3 {
            let z = t.shared * common + own * normal(&mut rng);
            conc[j] = 10f64.powf(t.log_mean[j] + t.log_sd[j] * z);
        }
        let [tss, doc, tchla] = conc;
        let temp = (t.temp.0 + t.temp.1 * normal(&mut rng)).clamp(12.0, 32.0);
        // Fresher water where the common factor is high.
        let sal = (t.sal.0 + t.sal.1 * (0.7 * normal(&mut rng) - 0.7 * common)).clamp(0.08, 39.5);

        let mut specific = [0.0; 4];
        for (s, m) in specific.iter_mut().zip(self.siop_median) {
            *s = m * 10f64.powf(self.siop_log_sd * normal(&mut rng));
        }
        let [ay_star, bbp_star, ad_star, aph_star] = specific;

        let s_y = (0.0165 + 0.002 * normal(&mut rng)).clamp(0.010, 0.025);
        let s_bbp = (1.0 + 0.3 * normal(&mut rng)).clamp(0.0, 2.2);
        let s_d = (0.0115 + 0.0015 * normal(&mut rng)).clamp(0.007, 0.016);
        let a_d_440 = tss * ad_star;
        let a_d = Spectrum::from_fn(|nm| a_d_440 * (-s_d * (nm - 440.0)).exp());

        let blue = 438.0 + 2.0 * normal(&mut rng);
        let red = 675.0 + 1.5 * normal(&mut rng);
        let red_ratio = (0.45 + 0.08 * normal(&mut rng)).clamp(0.25, 0.7);
        let shoulder = (0.45 + 0.1 * normal(&mut rng)).clamp(0.2, 0.7);
        let shape = |nm: f64| {
            let g = |c: f64, w: f64| (-(nm - c).powi(2) / (2.0 * w * w)).exp();
            g(blue, 22.0) + shoulder * g(488.0, 18.0) + 0.12 * g(590.0, 30.0) + red_ratio * g(red, 11.0) + 0.02
        };
        let norm = shape(440.0);
        let a_ph_440 = tchla * aph_star;
        let a_ph = Spectrum::from_fn(|nm| a_ph_440 * shape(nm) / norm);

        LibraryRecord {
            temp,
            sal,
            tss,
            doc,
            tchla,
            a_y_440: doc * ay_star,
            s_y,
            b_bp_550: tss * bbp_star,
            s_bbp,
            a_d,
            a_ph,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siop::CORRELATION_VARIABLES;
    use crate::stats::median;

    #[test]
    fn ranges_resemble_a_coastal_library() {
        let lib = LibraryMixture::standard().generate(247, 1);
        assert_eq!(lib.len(), 247);
        let col = |f: fn(&LibraryRecord) -> f64| lib.records.iter().map(f).collect::<Vec<_>>();
        let tss = median(&col(|r| r.tss));
        let sal = median(&col(|r| r.sal));
        assert!((1.0..6.0).contains(&tss), "{tss}");
        assert!((28.0..37.0).contains(&sal), "{sal}");
        let m = lib.correlation_matrix().unwrap();
        let idx = |n: &str| CORRELATION_VARIABLES.iter().position(|v| *v == n).unwrap();
        assert!(m[idx("TSS")][idx("a_d(440)")].unwrap() > 0.6);
        assert!(m[idx("DOC")][idx("a_y(440)")].unwrap() > 0.5);
        assert!(m[idx("S")][idx("TSS")].unwrap() < -0.3);
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let a = LibraryMixture::standard().generate(30, 7);
        let b = LibraryMixture::standard().generate(40, 7);
        assert_eq!(a.records, b.records[..30]);
    }

    #[test]
    fn phytoplankton_peaks_in_place() {
        let lib = LibraryMixture::standard().generate(20, 3);
        for r in &lib.records {
            let argmax = |lo: f64, hi: f64| {
                (lo as usize..=hi as usize).max_by(|&a, &b| r.a_ph.at_nm(a as f64).total_cmp(&r.a_ph.at_nm(b as f64))).unwrap()
            };
            assert!((425..=450).contains(&argmax(400.0, 500.0)));
            assert!((665..=685).contains(&argmax(620.0, 700.0)));
        }
    }
}
