//! CSV tables exchanged by the commands.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use bgcmeta_core::bio_optics::{BgcState, SiopSet};
use bgcmeta_core::spectral::{Spectrum, WavelengthGrid};
use serde::Serialize;

use crate::error::CliError;

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn rrs_columns() -> Vec<String> {
    WavelengthGrid.wavelengths().map(|nm| format!("rrs_{nm}")).collect()
}

struct Table {
    path: String,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, CliError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(open(path)?);
        let p = path.display().to_string();
        let headers = rdr
            .headers()
            .map_err(|e| CliError::Input(format!("{p}: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let rows = rdr
            .records()
            .enumerate()
            .map(|(i, r)| r.map_err(|e| CliError::Input(format!("{p}: row {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?;
        Ok(Self { path: p, headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Input(format!("{}: missing column `{name}`", self.path)))
    }

    fn columns(&self, names: &[String]) -> Result<Vec<usize>, CliError> {
        names.iter().map(|n| self.column(n)).collect()
    }

    fn number(&self, row: usize, col: usize) -> Result<f64, CliError> {
        let raw = self.rows[row].get(col).unwrap_or("").trim();
        raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
            CliError::Input(format!("{}: row {}: column `{}`: `{raw}` is not a finite number", self.path, row + 1, self.headers[col]))
        })
    }

    fn spectrum(&self, row: usize, cols: &[usize]) -> Result<Spectrum, CliError> {
        let v = cols.iter().map(|&c| self.number(row, c)).collect::<Result<Vec<_>, _>>()?;
        Spectrum::new(v).map_err(|e| CliError::Input(format!("{}: row {}: {e}", self.path, row + 1)))
    }

    /// Values of an `id` or `timestamp` column, else 1-based row numbers.
    fn ids(&self) -> Vec<String> {
        match self.headers.iter().position(|h| h == "id" || h == "timestamp") {
            Some(c) => self.rows.iter().map(|r| r.get(c).unwrap_or("").to_string()).collect(),
            None => (1..=self.rows.len()).map(|i| i.to_string()).collect(),
        }
    }
}

/// Spectra with identifiers, from any CSV holding all `rrs_<nm>` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RrsTable {
    pub ids: Vec<String>,
    pub spectra: Vec<Spectrum>,
}

impl RrsTable {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let t = Table::read(path)?;
        let cols = t.columns(&rrs_columns())?;
        let spectra = (0..t.rows.len()).map(|i| t.spectrum(i, &cols)).collect::<Result<_, _>>()?;
        Ok(Self { ids: t.ids(), spectra })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(create(path)?);
        let err = |e: csv::Error| CliError::Other(format!("{}: {e}", path.display()));
        let mut header = vec!["id".to_string()];
        header.extend(rrs_columns());
        w.write_record(&header).map_err(err)?;
        for (id, s) in self.ids.iter().zip(&self.spectra) {
            let mut row = vec![id.clone()];
            row.extend(s.values().iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::Other(e.to_string()))
    }
}

/// `[TSS, DOC, TChl-a]` rows from any CSV with `tss,doc,tchla` columns.
pub fn read_bgc(path: &Path) -> Result<(Vec<String>, Vec<[f64; 3]>), CliError> {
    let t = Table::read(path)?;
    let cols = t.columns(&["tss".into(), "doc".into(), "tchla".into()])?;
    let rows = (0..t.rows.len())
        .map(|i| Ok([t.number(i, cols[0])?, t.number(i, cols[1])?, t.number(i, cols[2])?]))
        .collect::<Result<_, CliError>>()?;
    Ok((t.ids(), rows))
}

pub fn write_bgc(path: &Path, ids: &[String], rows: &[[f64; 3]]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| CliError::Other(format!("{}: {e}", path.display()));
    w.write_record(["id", "tss", "doc", "tchla"]).map_err(err)?;
    for (id, r) in ids.iter().zip(rows) {
        w.write_record([id.clone(), r[0].to_string(), r[1].to_string(), r[2].to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Other(e.to_string()))
}

pub const SIOP_PREFIXES: [&str; 4] = ["a_d_star", "a_y_star", "a_ph_star", "b_bp_star"];

/// Forward-model inputs: `tss,doc,tchla,temp,sal` and the four SIOP spectra
/// as `a_d_star_<nm>`, `a_y_star_<nm>`, `a_ph_star_<nm>`, `b_bp_star_<nm>`.
pub fn read_forward_inputs(path: &Path) -> Result<(Vec<String>, Vec<(BgcState, SiopSet)>), CliError> {
    let t = Table::read(path)?;
    let scalars = t.columns(&["tss", "doc", "tchla", "temp", "sal"].map(String::from))?;
    let blocks: Vec<Vec<usize>> = SIOP_PREFIXES
        .iter()
        .map(|p| t.columns(&WavelengthGrid.wavelengths().map(|nm| format!("{p}_{nm}")).collect::<Vec<_>>()))
        .collect::<Result<_, _>>()?;
    let rows = (0..t.rows.len())
        .map(|i| {
            let s: Vec<f64> = scalars.iter().map(|&c| t.number(i, c)).collect::<Result<_, _>>()?;
            let spec = |b: usize| t.spectrum(i, &blocks[b]);
            let bgc = BgcState { tss: s[0], doc: s[1], tchla: s[2], temp: s[3], sal: s[4] };
            let siops = SiopSet { a_d_star: spec(0)?, a_y_star: spec(1)?, a_ph_star: spec(2)?, b_bp_star: spec(3)? };
            Ok((bgc, siops))
        })
        .collect::<Result<_, CliError>>()?;
    Ok((t.ids(), rows))
}

pub fn forward_input_header() -> Vec<String> {
    let mut h: Vec<String> = ["id", "tss", "doc", "tchla", "temp", "sal"].map(String::from).to_vec();
    for p in SIOP_PREFIXES {
        h.extend(WavelengthGrid.wavelengths().map(|nm| format!("{p}_{nm}")));
    }
    h
}
