//! CIE 1931 chromaticity of a reflectance spectrum.

use std::io::Read;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::spectral::{integrate, resample, Spectrum, WavelengthGrid};

/// 2° colour-matching functions and the D65 illuminant on the standard grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CieTables {
    pub xbar: Spectrum,
    pub ybar: Spectrum,
    pub zbar: Spectrum,
    pub d65: Spectrum,
}

const BUNDLED: &str = include_str!("../../data/cie1931_d65.csv");

impl CieTables {
    pub fn bundled() -> Self {
        Self::read_csv(BUNDLED.as_bytes()).expect("bundled CIE tables are valid")
    }

    /// Columns `wavelength_nm,xbar,ybar,zbar,d65`, resampled onto the grid.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, AnalysisError> {
        let err = |e: String| AnalysisError::Io(format!("CIE tables: {e}"));
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers().map_err(|e| err(e.to_string()))?.iter().map(str::to_string).collect();
        if header != ["wavelength_nm", "xbar", "ybar", "zbar", "d65"] {
            return Err(err("expected columns wavelength_nm,xbar,ybar,zbar,d65".into()));
        }
        let mut cols: [Vec<(f64, f64)>; 4] = Default::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| err(format!("row {}: {e}", i + 1))))
                .collect::<Result<_, _>>()?;
            for (c, x) in cols.iter_mut().zip(&v[1..]) {
                c.push((v[0], *x));
            }
        }
        let [x, y, z, d] = cols.map(|c| resample(&c, WavelengthGrid).map_err(|e| err(e.to_string())));
        Ok(Self { xbar: x?, ybar: y?, zbar: z?, d65: d? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chromaticity {
    pub x: f64,
    pub y: f64,
}

/// `(X, Y) / (X + Y + Z)` with tristimulus values integrated over the grid.
pub fn chromaticity(rrs: &Spectrum, tables: &CieTables, illuminant: &Spectrum) -> Result<Chromaticity, AnalysisError> {
    if rrs.min() < 0.0 {
        return Err(AnalysisError::Degenerate("negative reflectance".into()));
    }
    let lit = rrs.zip_map(illuminant, |r, e| r * e);
    let xyz = [&tables.xbar, &tables.ybar, &tables.zbar].map(|cmf| integrate(&lit, cmf));
    let sum: f64 = xyz.iter().sum();
    if !(sum > 0.0) {
        return Err(AnalysisError::Degenerate("spectrum has no visible signal".into()));
    }
    Ok(Chromaticity { x: xyz[0] / sum, y: xyz[1] / sum })
}
