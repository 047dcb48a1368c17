//! Log-log band-ratio regression, the usual empirical retrieval.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::spectral::Spectrum;

/// `(numerator, denominator)` wavelengths for TSS, DOC and TChl-a.
pub const DEFAULT_BANDS: [(f64, f64); 3] = [(650.0, 550.0), (440.0, 555.0), (700.0, 675.0)];

/// `log₁₀ y = c0 + c1 · log₁₀(R_rs(num) / R_rs(den))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRatioModel {
    pub num_nm: f64,
    pub den_nm: f64,
    pub c0: f64,
    pub c1: f64,
}

fn log_ratio(rrs: &Spectrum, num: f64, den: f64) -> Result<f64, AnalysisError> {
    let (a, b) = (rrs.at_nm(num), rrs.at_nm(den));
    if !(b > 0.0) || !(a > 0.0) {
        return Err(AnalysisError::Degenerate(format!("non-positive reflectance at {num}/{den} nm")));
    }
    Ok((a / b).log10())
}

impl BandRatioModel {
    pub fn fit(spectra: &[Spectrum], values: &[f64], bands: (f64, f64)) -> Result<Self, AnalysisError> {
        if spectra.len() != values.len() {
            return Err(AnalysisError::Length(spectra.len(), values.len()));
        }
        if spectra.len() < 3 {
            return Err(AnalysisError::TooFew { needed: 3, got: spectra.len() });
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(AnalysisError::Degenerate(format!("non-positive target {v}")));
        }
        let x: Vec<f64> = spectra.iter().map(|s| log_ratio(s, bands.0, bands.1)).collect::<Result<_, _>>()?;
        let y: Vec<f64> = values.iter().map(|v| v.log10()).collect();
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        if !(sxx > 1e-24 * n) {
            return Err(AnalysisError::Degenerate("band ratio is constant across records".into()));
        }
        let c1 = sxy / sxx;
        Ok(Self { num_nm: bands.0, den_nm: bands.1, c0: my - c1 * mx, c1 })
    }

    pub fn predict(&self, rrs: &Spectrum) -> Result<f64, AnalysisError> {
        Ok(10f64.powf(self.c0 + self.c1 * log_ratio(rrs, self.num_nm, self.den_nm)?))
    }
}

/// One band-ratio model per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRatioSet {
    pub models: [BandRatioModel; 3],
}

impl BandRatioSet {
    pub fn fit(spectra: &[Spectrum], bgc: &[[f64; 3]], bands: &[(f64, f64); 3]) -> Result<Self, AnalysisError> {
        let fit = |j: usize| {
            let v: Vec<f64> = bgc.iter().map(|b| b[j]).collect();
            BandRatioModel::fit(spectra, &v, bands[j])
        };
        Ok(Self { models: [fit(0)?, fit(1)?, fit(2)?] })
    }

    pub fn predict(&self, rrs: &Spectrum) -> Result<[f64; 3], AnalysisError> {
        Ok([self.models[0].predict(rrs)?, self.models[1].predict(rrs)?, self.models[2].predict(rrs)?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectra(ratios: &[f64]) -> Vec<Spectrum> {
        ratios.iter().map(|r| Spectrum::from_fn(|nm| if nm == 650.0 { 0.01 * r } else { 0.01 })).collect()
    }

    #[test]
    fn recovers_exact_law() {
        let ratios = [0.3, 0.7, 1.1, 2.0, 4.5];
        let y: Vec<f64> = ratios.iter().map(|r: &f64| 10f64.powf(0.4 + 1.7 * r.log10())).collect();
        let m = BandRatioModel::fit(&spectra(&ratios), &y, (650.0, 550.0)).unwrap();
        assert!((m.c0 - 0.4).abs() < 1e-6 && (m.c1 - 1.7).abs() < 1e-6, "{m:?}");
        let s = &spectra(&[3.0])[0];
        assert!((m.predict(s).unwrap() / 10f64.powf(0.4 + 1.7 * 3f64.log10()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        let s = spectra(&[1.0, 1.0, 1.0]);
        assert!(matches!(BandRatioModel::fit(&s, &[1.0, 2.0, 3.0], (650.0, 550.0)), Err(AnalysisError::Degenerate(_))));
        assert!(BandRatioModel::fit(&s[..2], &[1.0, 2.0], (650.0, 550.0)).is_err());
        let zero = vec![Spectrum::zeros(); 3];
        assert!(BandRatioModel::fit(&zero, &[1.0, 2.0, 3.0], (650.0, 550.0)).is_err());
    }
}
