//! Extended Fourier amplitude sensitivity test.
//!
//! Each parameter in turn is driven at the high frequency `ω = (N−1)/(2M)`
//! along a periodic search curve while the others move at low
//! complementary frequencies. First-order indices come from the output
//! power at `ω` and its first `M` harmonics; total indices from one minus
//! the power at frequencies up to `ω/2`.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::bio_optics::{BgcState, ForwardModel, SiopSet};
use crate::siop::SpectralLibrary;
use crate::spectral::{Spectrum, WavelengthGrid};
use crate::stats::median;
use crate::synth::dpgmm::record_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EfastConfig {
    /// Points per search curve; odd.
    pub samples: usize,
    /// Number of harmonics counted towards the first-order index.
    pub interference: usize,
    /// Seeds the random phase shifts of the curves.
    pub seed: u64,
}

impl Default for EfastConfig {
    fn default() -> Self {
        Self { samples: 1025, interference: 4, seed: 0 }
    }
}

impl EfastConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.samples % 2 == 0 || self.samples < 65 {
            return Err(AnalysisError::Config("EFAST sample count must be odd and at least 65".into()));
        }
        if self.interference == 0 || self.max_frequency() < 2 * self.interference {
            return Err(AnalysisError::Config("EFAST interference factor too large for the sample count".into()));
        }
        Ok(())
    }

    pub fn max_frequency(&self) -> usize {
        (self.samples - 1) / (2 * self.interference)
    }

    /// Low frequencies for the `k − 1` parameters that are not being driven.
    pub fn complementary_frequencies(&self, k: usize) -> Vec<usize> {
        let m = (self.max_frequency() / (2 * self.interference)).max(1);
        match k.saturating_sub(1) {
            0 => vec![],
            1 => vec![1],
            n if n <= m => (0..n).map(|i| 1 + (i * (m - 1)) / (n - 1)).collect(),
            n => (0..n).map(|i| 1 + i % m).collect(),
        }
    }
}

/// First-order and total indices, `[parameter][output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Indices {
    pub s1: Vec<Vec<f64>>,
    pub st: Vec<Vec<f64>>,
}

/// Indices of a vector-valued `model` over the unit cube `[0, 1]^k`.
pub fn efast<F>(k: usize, model: F, cfg: &EfastConfig) -> Result<Indices, AnalysisError>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    cfg.validate()?;
    if k == 0 {
        return Err(AnalysisError::Config("no parameters".into()));
    }
    let n = cfg.samples;
    let omega = cfg.max_frequency();
    let others = cfg.complementary_frequencies(k);
    let cos_t: Vec<f64> = (0..n).map(|r| (2.0 * PI * r as f64 / n as f64).cos()).collect();
    let sin_t: Vec<f64> = (0..n).map(|r| (2.0 * PI * r as f64 / n as f64).sin()).collect();

    let mut s1 = Vec::with_capacity(k);
    let mut st = Vec::with_capacity(k);
    for driven in 0..k {
        let mut freqs = others.clone();
        freqs.insert(driven, omega);
        let mut rng = record_rng(cfg.seed, driven as u64);
        let phase: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        let outputs: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let s = 2.0 * PI * j as f64 / n as f64;
                let x: Vec<f64> =
                    freqs.iter().zip(&phase).map(|(&w, &p)| 0.5 + (w as f64 * s + p).sin().asin() / PI).collect();
                model(&x)
            })
            .collect();
        let n_out = outputs[0].len();
        if outputs.iter().any(|o| o.len() != n_out) {
            return Err(AnalysisError::Degenerate("model output length varies".into()));
        }
        let power = |y: &[f64], p: usize| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in y.iter().enumerate() {
                let r = (p * j) % n;
                re += v * cos_t[r];
                im -= v * sin_t[r];
            }
            (re * re + im * im) / (n * n) as f64
        };
        let (a, b): (Vec<f64>, Vec<f64>) = (0..n_out)
            .into_par_iter()
            .map(|o| {
                let y: Vec<f64> = outputs.iter().map(|r| r[o]).collect();
                let mean = y.iter().sum::<f64>() / n as f64;
                let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                if !(var > 0.0) {
                    return (0.0, 0.0);
                }
                let d1: f64 = 2.0 * (1..=cfg.interference).map(|q| power(&y, q * omega)).sum::<f64>();
                let dc: f64 = 2.0 * (1..=omega / 2).map(|p| power(&y, p)).sum::<f64>();
                (d1 / var, 1.0 - dc / var)
            })
            .unzip();
        s1.push(a);
        st.push(b);
    }
    Ok(Indices { s1, st })
}

/// Log-uniform sampling bounds of one concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    fn at(&self, u: f64) -> f64 {
        (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp()
    }
}

pub const PARAM_NAMES: [&str; 3] = ["TSS", "DOC", "TChl-a"];

/// Per-wavelength indices of the forward model with respect to TSS, DOC
/// and TChl-a.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    /// `[parameter][band]`.
    pub s1: Vec<Vec<f64>>,
    pub st: Vec<Vec<f64>>,
}

impl SensitivityResult {
    pub fn param_index(name: &str) -> Option<usize> {
        PARAM_NAMES.iter().position(|p| *p == name)
    }

    pub fn st_spectrum(&self, param: usize) -> Spectrum {
        Spectrum::new(self.st[param].clone()).expect("finite indices")
    }

    /// Columns `wavelength_nm,param,s1,st`, one row per band and parameter.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AnalysisError> {
        let err = |e: csv::Error| AnalysisError::Io(format!("sensitivity csv: {e}"));
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["wavelength_nm", "param", "s1", "st"]).map_err(err)?;
        for (b, nm) in WavelengthGrid.wavelengths().enumerate() {
            for (p, name) in PARAM_NAMES.iter().enumerate() {
                w.write_record([nm.to_string(), name.to_string(), self.s1[p][b].to_string(), self.st[p][b].to_string()])
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|e| AnalysisError::Io(e.to_string()))
    }
}

/// Library min/max of each concentration and per-band median SIOPs.
pub fn library_defaults(library: &SpectralLibrary) -> Result<([ParamRange; 3], SiopSet), AnalysisError> {
    if library.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut ranges = [ParamRange { lo: f64::INFINITY, hi: f64::NEG_INFINITY }; 3];
    for r in &library.records {
        for (range, v) in ranges.iter_mut().zip([r.tss, r.doc, r.tchla]) {
            range.lo = range.lo.min(v);
            range.hi = range.hi.max(v);
        }
    }
    let siops = library.siops().map_err(|e| AnalysisError::Degenerate(e.to_string()))?;
    let band_median = |f: fn(&SiopSet) -> &Spectrum| {
        Spectrum::new(
            (0..WavelengthGrid.len())
                .map(|b| median(&siops.iter().map(|s| f(s).values()[b]).collect::<Vec<_>>()))
                .collect(),
        )
        .expect("finite medians")
    };
    let med = SiopSet {
        a_d_star: band_median(|s| &s.a_d_star),
        a_y_star: band_median(|s| &s.a_y_star),
        a_ph_star: band_median(|s| &s.a_ph_star),
        b_bp_star: band_median(|s| &s.b_bp_star),
    };
    Ok((ranges, med))
}

/// EFAST on R_rs with SIOPs, temperature and salinity held fixed.
pub fn forward_sensitivity(
    forward: &ForwardModel,
    siops: &SiopSet,
    ranges: &[ParamRange; 3],
    temp: f64,
    sal: f64,
    cfg: &EfastConfig,
) -> Result<SensitivityResult, AnalysisError> {
    if ranges.iter().any(|r| !(r.lo > 0.0 && r.hi >= r.lo && r.hi.is_finite())) {
        return Err(AnalysisError::Config("ranges must be positive and ordered".into()));
    }
    let idx = efast(
        3,
        |x| {
            let c: Vec<f64> = ranges.iter().zip(x).map(|(r, u)| r.at(*u)).collect();
            let bgc = BgcState { tss: c[0], doc: c[1], tchla: c[2], temp, sal };
            forward.simulate(&bgc, siops).map(Spectrum::into_values).unwrap_or_else(|_| vec![f64::NAN; WavelengthGrid.len()])
        },
        cfg,
    )?;
    if idx.s1.iter().chain(&idx.st).flatten().any(|v| !v.is_finite()) {
        return Err(AnalysisError::Degenerate("forward model failed inside the parameter ranges".into()));
    }
    let Indices { mut s1, mut st } = idx;
    for (p, r) in ranges.iter().enumerate() {
        if r.hi == r.lo {
            s1[p].iter_mut().for_each(|v| *v = 0.0);
            st[p].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(SensitivityResult { s1, st })
}
