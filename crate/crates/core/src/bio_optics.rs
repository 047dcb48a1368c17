//! Bio-optical forward model: constituent concentrations and mass-specific
//! inherent optical properties in, above-water remote-sensing reflectance out.
//!
//! The chain is
//!
//! ```text
//! a   = a_w(T, S) + TSS·a*_d + DOC·a*_y + TChl-a·a*_ph
//! b_b = b_bw(S) + TSS·b*_bp
//! u   = b_b / (a + b_b)
//! r_rs = g0·u + g1·u²                 (below the surface)
//! R_rs = 0.52·r_rs / (1 − 1.7·r_rs)   (above the surface)
//! ```
//!
//! All wavelengths are in nanometres.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{Spectrum, WavelengthGrid, N_BANDS};

/// Reference temperature of the water absorption table (°C).
pub const T_REF: f64 = 22.0;
/// Valid water temperature range (°C).
pub const TEMP_RANGE: (f64, f64) = (-2.0, 40.0);

const BUNDLED_WATER_IOPS: &str = include_str!("../data/water_iops.csv");

#[derive(Debug, Error, PartialEq)]
pub enum OpticsError {
    #[error("{name} must be non-negative, got {value}")]
    NegativeConcentration { name: &'static str, value: f64 },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("salinity must be non-negative, got {0}")]
    NegativeSalinity(f64),
    #[error("temperature {0} °C outside [-2, 40]")]
    TemperatureRange(f64),
    #[error("{name} has a negative value at {wavelength_nm} nm")]
    NegativeSpectrum { name: &'static str, wavelength_nm: f64 },
    #[error("non-positive a + b_b at {0} nm")]
    NonPositiveDenominator(f64),
    #[error("albedo u = {value} outside [0, 1) at {wavelength_nm} nm")]
    AlbedoRange { value: f64, wavelength_nm: f64 },
    #[error("subsurface reflectance {value} at {wavelength_nm} nm reaches the interface singularity 1/{k_q}")]
    InterfaceSingularity { value: f64, wavelength_nm: f64, k_q: f64 },
    #[error("water IOP table: {0}")]
    Table(String),
}

/// Pure-water absorption reference plus its temperature and salinity
/// correction spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterIopTables {
    /// Absorption of pure water at [`T_REF`] (m⁻¹).
    pub a_w_ref: Spectrum,
    /// Temperature correction (m⁻¹ °C⁻¹).
    pub psi_t: Spectrum,
    /// Salinity correction per salinity unit (m⁻¹).
    pub psi_s: Spectrum,
    pub t_ref: f64,
}

impl WaterIopTables {
    pub fn new(a_w_ref: Spectrum, psi_t: Spectrum, psi_s: Spectrum) -> Result<Self, OpticsError> {
        if let Some((nm, _)) = a_w_ref.iter().find(|&(_, v)| v < 0.0) {
            return Err(OpticsError::NegativeSpectrum { name: "a_w_ref", wavelength_nm: nm });
        }
        Ok(Self { a_w_ref, psi_t, psi_s, t_ref: T_REF })
    }

    /// The tables shipped with the crate: Pope & Fry pure-water absorption with
    /// approximate temperature/salinity coefficient spectra, on the 1 nm grid.
    pub fn bundled() -> Self {
        Self::read_csv(BUNDLED_WATER_IOPS.as_bytes()).expect("bundled water_iops.csv is valid")
    }

    /// Reads `wavelength_nm,a_w_ref,psi_T,psi_S`. Rows at any spacing are
    /// resampled onto the grid.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, OpticsError> {
        let table = |e: &dyn std::fmt::Display| OpticsError::Table(e.to_string());
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers().map_err(|e| table(&e))?.clone();
        let expected = ["wavelength_nm", "a_w_ref", "psi_T", "psi_S"];
        if headers.iter().ne(expected.iter().copied()) {
            return Err(OpticsError::Table(format!("expected header `{}`", expected.join(","))));
        }
        let mut cols: [Vec<(f64, f64)>; 3] = Default::default();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| table(&e))?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| OpticsError::Table(format!("row {}: {e}", row + 1)))?;
            for (c, col) in cols.iter_mut().enumerate() {
                col.push((vals[0], vals[c + 1]));
            }
        }
        let [a, t, s] = cols.map(|c| crate::spectral::resample(&c, WavelengthGrid).map_err(|e| table(&e)));
        Self::new(a?, t?, s?)
    }
}

/// Biogeochemical state of a water sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BgcState {
    /// Total suspended solids (mg/L).
    pub tss: f64,
    /// Dissolved organic carbon (mg/L).
    pub doc: f64,
    /// Total chlorophyll-a (µg/L).
    pub tchla: f64,
    /// Water temperature (°C).
    pub temp: f64,
    /// Salinity (unitless).
    pub sal: f64,
}

impl BgcState {
    /// Validating constructor: concentrations strictly positive, salinity
    /// non-negative, temperature within [`TEMP_RANGE`].
    pub fn new(tss: f64, doc: f64, tchla: f64, temp: f64, sal: f64) -> Result<Self, OpticsError> {
        for (name, value) in [("TSS", tss), ("DOC", doc), ("TChl-a", tchla)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(OpticsError::NonPositive { name, value });
            }
        }
        let state = Self { tss, doc, tchla, temp, sal };
        state.check_ancillary()?;
        Ok(state)
    }

    fn check_ancillary(&self) -> Result<(), OpticsError> {
        if !(self.sal >= 0.0) {
            return Err(OpticsError::NegativeSalinity(self.sal));
        }
        if !(self.temp >= TEMP_RANGE.0 && self.temp <= TEMP_RANGE.1) {
            return Err(OpticsError::TemperatureRange(self.temp));
        }
        Ok(())
    }

    fn check_nonnegative(&self) -> Result<(), OpticsError> {
        for (name, value) in [("TSS", self.tss), ("DOC", self.doc), ("TChl-a", self.tchla)] {
            if !(value >= 0.0) {
                return Err(OpticsError::NegativeConcentration { name, value });
            }
        }
        Ok(())
    }

    /// `[TSS, DOC, TChl-a]`.
    pub fn concentrations(&self) -> [f64; 3] {
        [self.tss, self.doc, self.tchla]
    }
}

/// Mass-specific inherent optical properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiopSet {
    /// Non-algal particle absorption per unit TSS (m² g⁻¹).
    pub a_d_star: Spectrum,
    /// CDOM absorption per unit DOC (m² g⁻¹).
    pub a_y_star: Spectrum,
    /// Phytoplankton absorption per unit TChl-a (m² mg⁻¹).
    pub a_ph_star: Spectrum,
    /// Particulate backscatter per unit TSS (m² g⁻¹).
    pub b_bp_star: Spectrum,
}

impl SiopSet {
    pub fn zeros() -> Self {
        Self {
            a_d_star: Spectrum::zeros(),
            a_y_star: Spectrum::zeros(),
            a_ph_star: Spectrum::zeros(),
            b_bp_star: Spectrum::zeros(),
        }
    }

    pub fn families(&self) -> [&Spectrum; 4] {
        [&self.a_d_star, &self.a_y_star, &self.a_ph_star, &self.b_bp_star]
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        let names = ["a_d_star", "a_y_star", "a_ph_star", "b_bp_star"];
        for (name, s) in names.into_iter().zip(self.families()) {
            if let Some((nm, _)) = s.iter().find(|&(_, v)| v < 0.0) {
                return Err(OpticsError::NegativeSpectrum { name, wavelength_nm: nm });
            }
        }
        Ok(())
    }
}

/// Coefficients of the quadratic reflectance approximation and the air–water
/// interface correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrsConstants {
    pub g0: f64,
    pub g1: f64,
    pub k_up: f64,
    pub k_q: f64,
}

impl RrsConstants {
    pub const STANDARD: Self = Self { g0: 0.082, g1: 0.17, k_up: 0.52, k_q: 1.7 };
}

impl Default for RrsConstants {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// Water absorption corrected for temperature and salinity, clamped at zero.
pub fn water_absorption(temp: f64, sal: f64, tables: &WaterIopTables) -> Spectrum {
    let dt = temp - tables.t_ref;
    Spectrum::from_fn(|nm| {
        let i = WavelengthGrid.index_of(nm).unwrap();
        (tables.a_w_ref[i] + dt * tables.psi_t[i] + sal * tables.psi_s[i]).max(0.0)
    })
}

/// Total absorption of the water column.
pub fn total_absorption(bgc: &BgcState, siops: &SiopSet, tables: &WaterIopTables) -> Result<Spectrum, OpticsError> {
    bgc.check_nonnegative()?;
    let a_w = water_absorption(bgc.temp, bgc.sal, tables);
    let a = Spectrum::from_fn(|nm| {
        let i = WavelengthGrid.index_of(nm).unwrap();
        a_w[i] + bgc.tss * siops.a_d_star[i] + bgc.doc * siops.a_y_star[i] + bgc.tchla * siops.a_ph_star[i]
    });
    Ok(a)
}

/// Pure seawater backscatter.
pub fn water_backscatter(sal: f64) -> Spectrum {
    let sal_factor = 1.0 + 0.3 * sal / 37.0;
    Spectrum::from_fn(|nm| 1.38 * (nm / 500.0).powf(-4.32) * sal_factor * 1e-4)
}

/// Total backscatter: water plus particles.
pub fn total_backscatter(bgc: &BgcState, siops: &SiopSet) -> Result<Spectrum, OpticsError> {
    if !(bgc.tss >= 0.0) {
        return Err(OpticsError::NegativeConcentration { name: "TSS", value: bgc.tss });
    }
    if !(bgc.sal >= 0.0) {
        return Err(OpticsError::NegativeSalinity(bgc.sal));
    }
    Ok(water_backscatter(bgc.sal).zip_map(&siops.b_bp_star, |bw, bp| bw + bgc.tss * bp))
}

/// Backscattering albedo `u = b_b / (a + b_b)`.
pub fn albedo_u(a: &Spectrum, b_b: &Spectrum) -> Result<Spectrum, OpticsError> {
    let mut u = Vec::with_capacity(N_BANDS);
    for ((nm, ai), (_, bi)) in a.iter().zip(b_b.iter()) {
        let denom = ai + bi;
        if !(denom > 0.0) {
            return Err(OpticsError::NonPositiveDenominator(nm));
        }
        u.push(bi / denom);
    }
    Ok(Spectrum::new(u).expect("finite albedo"))
}

/// Subsurface remote-sensing reflectance.
pub fn subsurface_rrs(u: &Spectrum, c: &RrsConstants) -> Result<Spectrum, OpticsError> {
    if let Some((nm, v)) = u.iter().find(|&(_, v)| !(0.0..1.0).contains(&v)) {
        return Err(OpticsError::AlbedoRange { value: v, wavelength_nm: nm });
    }
    Ok(u.map(|u| c.g0 * u + c.g1 * u * u))
}

/// Above-water remote-sensing reflectance (sr⁻¹).
pub fn above_water_rrs(r_rs: &Spectrum, c: &RrsConstants) -> Result<Spectrum, OpticsError> {
    if let Some((nm, v)) = r_rs.iter().find(|&(_, v)| v * c.k_q >= 1.0) {
        return Err(OpticsError::InterfaceSingularity { value: v, wavelength_nm: nm, k_q: c.k_q });
    }
    Ok(r_rs.map(|r| c.k_up * r / (1.0 - c.k_q * r)))
}

/// The full forward model.
pub fn forward(bgc: &BgcState, siops: &SiopSet, tables: &WaterIopTables) -> Result<Spectrum, OpticsError> {
    forward_with(bgc, siops, tables, &RrsConstants::STANDARD)
}

pub fn forward_with(
    bgc: &BgcState,
    siops: &SiopSet,
    tables: &WaterIopTables,
    c: &RrsConstants,
) -> Result<Spectrum, OpticsError> {
    bgc.check_ancillary()?;
    let a = total_absorption(bgc, siops, tables)?;
    let b_b = total_backscatter(bgc, siops)?;
    let u = albedo_u(&a, &b_b)?;
    let r_rs = subsurface_rrs(&u, c)?;
    above_water_rrs(&r_rs, c)
}

/// A forward model bound to its water tables, for repeated evaluation.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub tables: WaterIopTables,
    pub constants: RrsConstants,
}

impl ForwardModel {
    pub fn new(tables: WaterIopTables) -> Self {
        Self { tables, constants: RrsConstants::STANDARD }
    }

    pub fn bundled() -> Self {
        Self::new(WaterIopTables::bundled())
    }

    pub fn simulate(&self, bgc: &BgcState, siops: &SiopSet) -> Result<Spectrum, OpticsError> {
        forward_with(bgc, siops, &self.tables, &self.constants)
    }
}
