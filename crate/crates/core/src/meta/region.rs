//! Regional in situ data: timestamped BGC measurements with matching R_rs.

use std::io::{Read, Write};

use super::MetaError;
use crate::spectral::{Spectrum, WavelengthGrid, N_BANDS};

#[derive(Debug, Clone, PartialEq)]
pub struct RegionRecord {
    pub timestamp: String,
    /// `[TSS, DOC, TChl-a]`, linear units.
    pub bgc: [f64; 3],
    pub rrs: Spectrum,
}

impl RegionRecord {
    pub fn log_targets(&self) -> [f64; 3] {
        self.bgc.map(f64::log10)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionDataset {
    pub records: Vec<RegionRecord>,
}

fn csv_err(e: impl std::fmt::Display) -> MetaError {
    MetaError::Io(format!("region csv: {e}"))
}

impl RegionDataset {
    pub fn new(records: Vec<RegionRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn spectra(&self) -> impl Iterator<Item = &Spectrum> {
        self.records.iter().map(|r| &r.rrs)
    }

    pub fn log_targets(&self) -> Vec<[f64; 3]> {
        self.records.iter().map(RegionRecord::log_targets).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self { records: idx.iter().map(|&i| self.records[i].clone()).collect() }
    }

    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = ["timestamp", "tss", "doc", "tchla"].iter().map(|s| s.to_string()).collect();
        h.extend(WavelengthGrid.wavelengths().map(|nm| format!("rrs_{nm}")));
        h
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MetaError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::header()).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![r.timestamp.clone()];
            row.extend(r.bgc.iter().chain(r.rrs.values()).map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(csv_err)
    }

    /// Concentrations must be positive and finite since training happens on
    /// their logarithms.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, MetaError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if header != Self::header() {
            return Err(MetaError::Io(format!(
                "region csv: expected columns timestamp,tss,doc,tchla and {N_BANDS} rrs_* columns"
            )));
        }
        let mut records = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| csv_err(format!("row {row}: {e}")))?;
            let v: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>().map_err(|e| csv_err(format!("row {row}: {e}"))))
                .collect::<Result<_, _>>()?;
            let bgc = [v[0], v[1], v[2]];
            if let Some(bad) = bgc.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
                return Err(csv_err(format!("row {row}: concentration {bad} is not positive")));
            }
            let rrs = Spectrum::new(v[3..].to_vec()).map_err(|e| csv_err(format!("row {row}: {e}")))?;
            records.push(RegionRecord { timestamp: rec[0].to_string(), bgc, rrs });
        }
        Ok(Self { records })
    }
}
