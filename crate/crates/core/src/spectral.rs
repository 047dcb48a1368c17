//! Fixed 400–700 nm wavelength grid and the [`Spectrum`] value type.
//!
//! Every spectral quantity in the crate (reflectance, absorption, backscatter,
//! mass-specific coefficients, colour-matching functions) lives on the same
//! 1 nm grid, so array shapes never need to be checked beyond construction.

use std::io::{Read, Write};
use std::ops::Index;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// First wavelength of the grid (nm).
pub const START_NM: f64 = 400.0;
/// Last wavelength of the grid (nm).
pub const END_NM: f64 = 700.0;
/// Grid spacing (nm).
pub const STEP_NM: f64 = 1.0;
/// Number of bands on the grid.
pub const N_BANDS: usize = 301;

/// Largest gap (nm) between the raw data and either end of the grid that
/// [`resample`] will fill by nearest-value extension.
pub const MAX_EDGE_GAP_NM: f64 = 20.0;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("spectrum needs {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite value at band {index} ({wavelength_nm} nm)")]
    NonFinite { index: usize, wavelength_nm: f64 },
    #[error("need at least 2 raw samples to resample, got {0}")]
    TooFewSamples(usize),
    #[error("raw wavelengths must be strictly increasing (at position {0})")]
    Unsorted(usize),
    #[error("raw data covers {first_nm}..{last_nm} nm; more than {MAX_EDGE_GAP_NM} nm missing at an edge of 400..700 nm")]
    Coverage { first_nm: f64, last_nm: f64 },
    #[error("wavelength {0} nm is not on the 400..700 nm / 1 nm grid")]
    OffGrid(f64),
    #[error("spectrum csv: {0}")]
    Csv(String),
}

/// The 400–700 nm, 1 nm wavelength grid.
///
/// The grid is a global constant, so this is a zero-sized marker; two grids
/// always compare equal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WavelengthGrid;

impl WavelengthGrid {
    pub const fn len(&self) -> usize {
        N_BANDS
    }

    pub const fn is_empty(&self) -> bool {
        false
    }

    /// Wavelength (nm) of band `index`.
    pub fn wavelength(&self, index: usize) -> f64 {
        START_NM + index as f64 * STEP_NM
    }

    /// Band index of an on-grid wavelength.
    pub fn index_of(&self, wavelength_nm: f64) -> Option<usize> {
        let pos = (wavelength_nm - START_NM) / STEP_NM;
        let rounded = pos.round();
        if (pos - rounded).abs() > 1e-9 || rounded < 0.0 || rounded >= N_BANDS as f64 {
            return None;
        }
        Some(rounded as usize)
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..N_BANDS).map(move |i| self.wavelength(i))
    }

    /// Inclusive index range covering `[lo_nm, hi_nm]`, clipped to the grid.
    pub fn band_range(&self, lo_nm: f64, hi_nm: f64) -> std::ops::RangeInclusive<usize> {
        let lo = ((lo_nm - START_NM) / STEP_NM).ceil().max(0.0) as usize;
        let hi = (((hi_nm - START_NM) / STEP_NM).floor() as isize).clamp(0, N_BANDS as isize - 1) as usize;
        lo..=hi
    }
}

/// Values on the standard grid. Units are carried by context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self, SpectralError> {
        if values.len() != N_BANDS {
            return Err(SpectralError::Length { expected: N_BANDS, got: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite { index, wavelength_nm: WavelengthGrid.wavelength(index) });
        }
        Ok(Self { values })
    }

    pub fn constant(value: f64) -> Self {
        assert!(value.is_finite());
        Self { values: vec![value; N_BANDS] }
    }

    pub fn zeros() -> Self {
        Self::constant(0.0)
    }

    /// Builds a spectrum by evaluating `f` at every grid wavelength (nm).
    ///
    /// Panics if `f` returns a non-finite value; use [`Spectrum::new`] for
    /// fallible construction.
    pub fn from_fn(mut f: impl FnMut(f64) -> f64) -> Self {
        let values: Vec<f64> = WavelengthGrid.wavelengths().map(&mut f).collect();
        Self::new(values).expect("spectrum function produced a non-finite value")
    }

    pub fn grid(&self) -> WavelengthGrid {
        WavelengthGrid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at an on-grid wavelength. Panics when off-grid.
    pub fn at_nm(&self, wavelength_nm: f64) -> f64 {
        let i = WavelengthGrid
            .index_of(wavelength_nm)
            .unwrap_or_else(|| panic!("{wavelength_nm} nm is off the grid"));
        self.values[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (WavelengthGrid.wavelength(i), v))
    }

    /// Elementwise map. Panics if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.values.iter().map(|&v| f(v)).collect()).expect("non-finite spectrum value")
    }

    /// Elementwise combination of two spectra.
    pub fn zip_map(&self, other: &Spectrum, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::new(self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
            .expect("non-finite spectrum value")
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Reads the `wavelength_nm,value` interchange format. Rows may arrive at
    /// any resolution; they are resampled onto the grid.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SpectralError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers().map_err(|e| SpectralError::Csv(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "wavelength_nm" || &headers[1] != "value" {
            return Err(SpectralError::Csv(format!("expected header `wavelength_nm,value`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut raw = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| SpectralError::Csv(e.to_string()))?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| SpectralError::Csv(format!("row {}: {e}", row + 1)));
            raw.push((parse(&rec[0])?, parse(&rec[1])?));
        }
        resample(&raw, WavelengthGrid)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SpectralError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| SpectralError::Csv(e.to_string());
        wtr.write_record(["wavelength_nm", "value"]).map_err(err)?;
        for (nm, v) in self.iter() {
            wtr.write_record([format!("{nm}"), format!("{v}")]).map_err(err)?;
        }
        wtr.flush().map_err(|e| SpectralError::Csv(e.to_string()))
    }
}

impl Index<usize> for Spectrum {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.values[index]
    }
}

impl TryFrom<Vec<f64>> for Spectrum {
    type Error = SpectralError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<Spectrum> for Vec<f64> {
    fn from(s: Spectrum) -> Self {
        s.values
    }
}

/// Linearly interpolates `(wavelength, value)` pairs onto `grid`.
///
/// Grid points outside the raw range take the nearest raw value. Up to
/// [`MAX_EDGE_GAP_NM`] may be missing at either end.
pub fn resample(raw: &[(f64, f64)], grid: WavelengthGrid) -> Result<Spectrum, SpectralError> {
    if raw.len() < 2 {
        return Err(SpectralError::TooFewSamples(raw.len()));
    }
    for (i, w) in raw.windows(2).enumerate() {
        if !(w[1].0 > w[0].0) {
            return Err(SpectralError::Unsorted(i + 1));
        }
    }
    if let Some(index) = raw.iter().position(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(SpectralError::NonFinite { index, wavelength_nm: raw[index].0 });
    }
    let (first, last) = (raw[0].0, raw[raw.len() - 1].0);
    if first - START_NM > MAX_EDGE_GAP_NM || END_NM - last > MAX_EDGE_GAP_NM {
        return Err(SpectralError::Coverage { first_nm: first, last_nm: last });
    }

    let mut values = Vec::with_capacity(grid.len());
    let mut seg = 0;
    for nm in grid.wavelengths() {
        let v = if nm <= first {
            raw[0].1
        } else if nm >= last {
            raw[raw.len() - 1].1
        } else {
            while raw[seg + 1].0 <= nm {
                seg += 1;
            }
            let (x0, y0) = raw[seg];
            let (x1, y1) = raw[seg + 1];
            let t = (nm - x0) / (x1 - x0);
            y0 + t * (y1 - y0)
        };
        values.push(v);
    }
    Spectrum::new(values)
}

/// Trapezoidal quadrature of `s(λ)·w(λ) dλ` over the grid.
///
/// Both spectra share the fixed grid by construction, so there is no
/// mismatch case to report.
pub fn integrate(s: &Spectrum, w: &Spectrum) -> f64 {
    let f: Vec<f64> = s.values.iter().zip(&w.values).map(|(a, b)| a * b).collect();
    let interior: f64 = f[1..N_BANDS - 1].iter().sum();
    STEP_NM * (interior + 0.5 * (f[0] + f[N_BANDS - 1]))
}
