//! Principal components of a block of (log-scaled) spectra.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::spectral::{Spectrum, N_BANDS};

/// Number of retained components per SIOP family.
pub const N_COMPONENTS: usize = 5;

/// Mean spectrum plus the leading left singular vectors of the mean-centred
/// data matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `components[j]` is the j-th unit-norm principal direction (length 301).
    pub components: Vec<Vec<f64>>,
    /// Variance of the scores along each component (denominator N − 1),
    /// non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaBasis {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// `Uᵀ (x − mean)`.
    pub fn project(&self, spectrum: &Spectrum) -> Vec<f64> {
        self.project_values(spectrum.values())
    }

    pub fn project_values(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.mean.len(), "spectrum length does not match the basis");
        self.components
            .iter()
            .map(|u| u.iter().zip(values).zip(&self.mean).map(|((u, x), m)| u * (x - m)).sum())
            .collect()
    }

    /// `mean + U · scores`.
    pub fn reconstruct(&self, scores: &[f64]) -> Result<Spectrum, SynthError> {
        if scores.len() != self.n_components() {
            return Err(SynthError::Dimension { expected: self.n_components(), got: scores.len() });
        }
        let mut v = self.mean.clone();
        for (u, &s) in self.components.iter().zip(scores) {
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi += s * ui;
            }
        }
        Spectrum::new(v).map_err(|_| SynthError::NonFinite("reconstructed spectrum"))
    }
}

/// Fits a `p`-component basis to `spectra` via SVD of the mean-centred
/// 301 × N matrix. Each component's largest-magnitude element is positive.
pub fn fit_pca(spectra: &[Spectrum], p: usize) -> Result<PcaBasis, SynthError> {
    let n = spectra.len();
    if n < p {
        return Err(SynthError::TooFewSamples { needed: p, got: n });
    }
    let mut mean = vec![0.0; N_BANDS];
    for s in spectra {
        for (m, v) in mean.iter_mut().zip(s.values()) {
            *m += v / n as f64;
        }
    }
    let centred = DMatrix::from_fn(N_BANDS, n, |i, j| spectra[j][i] - mean[i]);
    let svd = centred.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let denom = (n.max(2) - 1) as f64;
    let mut components = Vec::with_capacity(p);
    let mut explained_variance = Vec::with_capacity(p);
    for &k in order.iter().take(p) {
        let mut col: Vec<f64> = u.column(k).iter().copied().collect();
        let pivot = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(col);
        explained_variance.push(svd.singular_values[k].powi(2) / denom);
    }
    Ok(PcaBasis { mean, components, explained_variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spectra(n: usize, seed: u64) -> Vec<Spectrum> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (a, b, c): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
                Spectrum::from_fn(|nm| {
                    let x = (nm - 400.0) / 300.0;
                    a * (-3.0 * x).exp() + b * (6.0 * x).sin() + c * x * x + 0.05 * rng.random::<f64>()
                })
            })
            .collect()
    }

    fn recon_error(basis: &PcaBasis, spectra: &[Spectrum]) -> f64 {
        spectra
            .iter()
            .map(|s| {
                let r = basis.reconstruct(&basis.project(s)).unwrap();
                s.values().iter().zip(r.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn components_orthonormal_and_sorted() {
        let spectra = random_spectra(40, 1);
        let b = fit_pca(&spectra, 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = b.components[i].iter().zip(&b.components[j]).map(|(x, y)| x * y).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-10);
            }
            let pivot = b.components[i].iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(pivot > 0.0);
        }
        assert!(b.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rank_one_data() {
        let shape = Spectrum::from_fn(|nm| (-(nm - 500.0).powi(2) / 2000.0).exp());
        let base = Spectrum::from_fn(|nm| nm / 700.0);
        let spectra: Vec<Spectrum> = (0..10).map(|k| base.zip_map(&shape, |b, s| b + (k as f64 - 3.0) * s)).collect();
        let basis = fit_pca(&spectra, 5).unwrap();
        assert!(basis.explained_variance[0] > 1.0);
        for v in &basis.explained_variance[1..] {
            assert!(v.abs() < 1e-20);
        }
        for s in &spectra {
            let scores = basis.project(s);
            let one = basis.reconstruct(&[scores[0], 0.0, 0.0, 0.0, 0.0]).unwrap();
            assert!(s.values().iter().zip(one.values()).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn more_components_never_hurt() {
        let spectra = random_spectra(30, 2);
        let e5 = recon_error(&fit_pca(&spectra, 5).unwrap(), &spectra);
        let e1 = recon_error(&fit_pca(&spectra, 1).unwrap(), &spectra);
        assert!(e5 <= e1);
    }

    #[test]
    fn project_reconstruct_identities() {
        let b = fit_pca(&random_spectra(20, 3), 5).unwrap();
        let scores = vec![0.3, -1.2, 0.05, 2.0, -0.7];
        let back = b.project(&b.reconstruct(&scores).unwrap());
        assert!(scores.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-10));
        let mean = Spectrum::new(b.mean.clone()).unwrap();
        assert!(b.project(&mean).iter().all(|s| s.abs() < 1e-12));
        assert_eq!(b.reconstruct(&[0.0; 5]).unwrap().values(), b.mean.as_slice());
        assert!(matches!(b.reconstruct(&[0.0; 4]), Err(SynthError::Dimension { .. })));
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(fit_pca(&random_spectra(4, 4), 5), Err(SynthError::TooFewSamples { .. })));
    }
}
