//! The bio-optical spectral library: measured IOPs per water sample,
//! mass-specific IOPs derived from them, and descriptive statistics.

use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bio_optics::{BgcState, SiopSet};
use crate::spectral::{Spectrum, WavelengthGrid, N_BANDS};
use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum LibraryError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("library is empty")]
    Empty,
    #[error("need at least {needed} records, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("library csv: {0}")]
    Csv(String),
}

/// One water sample of the spectral library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryRecord {
    pub temp: f64,
    pub sal: f64,
    pub tss: f64,
    pub doc: f64,
    pub tchla: f64,
    /// CDOM absorption at 440 nm (m⁻¹).
    pub a_y_440: f64,
    /// CDOM spectral slope (nm⁻¹).
    pub s_y: f64,
    /// Particulate backscatter at 550 nm (m⁻¹).
    pub b_bp_550: f64,
    /// Particulate backscatter spectral slope (unitless).
    pub s_bbp: f64,
    /// Non-algal particle absorption (m⁻¹).
    pub a_d: Spectrum,
    /// Phytoplankton absorption (m⁻¹).
    pub a_ph: Spectrum,
}

impl LibraryRecord {
    pub fn validate(&self) -> Result<(), LibraryError> {
        for (name, value) in [("tss", self.tss), ("doc", self.doc), ("tchla", self.tchla), ("s_y", self.s_y)] {
            if !(value > 0.0) {
                return Err(LibraryError::NonPositive { name, value });
            }
        }
        for (name, value) in [("a_y_440", self.a_y_440), ("b_bp_550", self.b_bp_550), ("sal", self.sal)] {
            if !(value >= 0.0) {
                return Err(LibraryError::Negative { name, value });
            }
        }
        for (name, s) in [("a_d", &self.a_d), ("a_ph", &self.a_ph)] {
            if s.min() < 0.0 {
                return Err(LibraryError::Negative { name, value: s.min() });
            }
        }
        Ok(())
    }

    pub fn bgc(&self) -> BgcState {
        BgcState { tss: self.tss, doc: self.doc, tchla: self.tchla, temp: self.temp, sal: self.sal }
    }

    /// Mass-specific IOPs of this record.
    pub fn siops(&self) -> Result<SiopSet, LibraryError> {
        Ok(SiopSet {
            a_d_star: derive_nap_siop(&self.a_d, self.tss)?,
            a_y_star: derive_cdom_siop(self.a_y_440, self.s_y, self.doc)?,
            a_ph_star: derive_ph_siop(&self.a_ph, self.tchla)?,
            b_bp_star: derive_bbp_siop(self.b_bp_550, self.s_bbp, self.tss)?,
        })
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), LibraryError> {
    if value > 0.0 {
        Ok(())
    } else {
        Err(LibraryError::NonPositive { name, value })
    }
}

/// `a*_y(λ) = a_y(440)·exp(−S_y·(λ − 440)) / DOC`.
pub fn derive_cdom_siop(a_y_440: f64, s_y: f64, doc: f64) -> Result<Spectrum, LibraryError> {
    positive("doc", doc)?;
    Ok(Spectrum::from_fn(|nm| a_y_440 * (-s_y * (nm - 440.0)).exp() / doc))
}

/// `b*_bp(λ) = b_bp(550)·(λ/550)^(−S_bbp) / TSS`.
pub fn derive_bbp_siop(b_bp_550: f64, s_bbp: f64, tss: f64) -> Result<Spectrum, LibraryError> {
    positive("tss", tss)?;
    Ok(Spectrum::from_fn(|nm| b_bp_550 * (nm / 550.0).powf(-s_bbp) / tss))
}

/// `a*_d(λ) = a_d(λ) / TSS`.
pub fn derive_nap_siop(a_d: &Spectrum, tss: f64) -> Result<Spectrum, LibraryError> {
    positive("tss", tss)?;
    Ok(a_d.map(|v| v / tss))
}

/// `a*_ph(λ) = a_ph(λ) / TChl-a`.
pub fn derive_ph_siop(a_ph: &Spectrum, tchla: f64) -> Result<Spectrum, LibraryError> {
    positive("tchla", tchla)?;
    Ok(a_ph.map(|v| v / tchla))
}

/// Columns summarised by [`SpectralLibrary::summary_stats`].
pub const SUMMARY_VARIABLES: [&str; 9] = ["T", "S", "TSS", "DOC", "TChl-a", "a*_y(440)", "b*_bp(550)", "a*_d(440)", "a*_ph(440)"];

/// Columns of [`SpectralLibrary::correlation_matrix`].
pub const CORRELATION_VARIABLES: [&str; 9] = ["T", "S", "TSS", "DOC", "TChl-a", "a_y(440)", "b_bp(550)", "a_d(440)", "a_ph(440)"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation (denominator N).
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, var) = stats::mean_var(values);
        Some(Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            median: stats::median(values),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std: var.sqrt(),
        })
    }
}

/// Pearson correlations over [`CORRELATION_VARIABLES`]. `None` marks entries
/// involving a zero-variance column.
pub type CorrelationMatrix = [[Option<f64>; 9]; 9];

/// An ingested spectral library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralLibrary {
    pub records: Vec<LibraryRecord>,
}

impl SpectralLibrary {
    pub fn new(records: Vec<LibraryRecord>) -> Result<Self, LibraryError> {
        for r in &records {
            r.validate()?;
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn siops(&self) -> Result<Vec<SiopSet>, LibraryError> {
        self.records.iter().map(LibraryRecord::siops).collect()
    }

    /// Min/median/max/mean/std for each of [`SUMMARY_VARIABLES`].
    pub fn summary_stats(&self) -> Result<Vec<(&'static str, Summary)>, LibraryError> {
        if self.is_empty() {
            return Err(LibraryError::Empty);
        }
        let siops = self.siops()?;
        let i440 = WavelengthGrid.index_of(440.0).unwrap();
        let i550 = WavelengthGrid.index_of(550.0).unwrap();
        let columns: [Vec<f64>; 9] = [
            self.records.iter().map(|r| r.temp).collect(),
            self.records.iter().map(|r| r.sal).collect(),
            self.records.iter().map(|r| r.tss).collect(),
            self.records.iter().map(|r| r.doc).collect(),
            self.records.iter().map(|r| r.tchla).collect(),
            siops.iter().map(|s| s.a_y_star[i440]).collect(),
            siops.iter().map(|s| s.b_bp_star[i550]).collect(),
            siops.iter().map(|s| s.a_d_star[i440]).collect(),
            siops.iter().map(|s| s.a_ph_star[i440]).collect(),
        ];
        Ok(SUMMARY_VARIABLES.iter().zip(columns.iter()).map(|(&n, c)| (n, Summary::of(c).unwrap())).collect())
    }

    /// Raw (not log) values of the nine correlation variables, one column each.
    pub fn correlation_columns(&self) -> [Vec<f64>; 9] {
        let i440 = WavelengthGrid.index_of(440.0).unwrap();
        [
            self.records.iter().map(|r| r.temp).collect(),
            self.records.iter().map(|r| r.sal).collect(),
            self.records.iter().map(|r| r.tss).collect(),
            self.records.iter().map(|r| r.doc).collect(),
            self.records.iter().map(|r| r.tchla).collect(),
            self.records.iter().map(|r| r.a_y_440).collect(),
            self.records.iter().map(|r| r.b_bp_550).collect(),
            self.records.iter().map(|r| r.a_d[i440]).collect(),
            self.records.iter().map(|r| r.a_ph[i440]).collect(),
        ]
    }

    pub fn correlation_matrix(&self) -> Result<CorrelationMatrix, LibraryError> {
        if self.len() < 3 {
            return Err(LibraryError::TooFew { needed: 3, got: self.len() });
        }
        Ok(correlation_matrix(&self.correlation_columns()))
    }

    /// Reads `library.csv`. Rows with missing or unparsable fields are dropped
    /// with a warning; rows that parse but break record invariants are errors.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, LibraryError> {
        let csv_err = |e: csv::Error| LibraryError::Csv(e.to_string());
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| LibraryError::Csv(format!("missing column `{name}`")))
        };
        let scalar_cols: Vec<usize> = SCALAR_COLUMNS.iter().map(|n| col(n)).collect::<Result<_, _>>()?;
        let block = |prefix: &str| -> Result<Vec<usize>, LibraryError> {
            WavelengthGrid.wavelengths().map(|nm| col(&format!("{prefix}_{nm}"))).collect()
        };
        let a_d_cols = block("a_d")?;
        let a_ph_cols = block("a_ph")?;

        let mut records = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let get = |i: usize| rec.get(i).and_then(|s| s.trim().parse::<f64>().ok()).filter(|v| v.is_finite());
            let scalars: Option<Vec<f64>> = scalar_cols.iter().map(|&i| get(i)).collect();
            let a_d: Option<Vec<f64>> = a_d_cols.iter().map(|&i| get(i)).collect();
            let a_ph: Option<Vec<f64>> = a_ph_cols.iter().map(|&i| get(i)).collect();
            let (Some(s), Some(a_d), Some(a_ph)) = (scalars, a_d, a_ph) else {
                warn!("library.csv row {}: missing or non-numeric field, record dropped", row + 1);
                continue;
            };
            let record = LibraryRecord {
                temp: s[0],
                sal: s[1],
                tss: s[2],
                doc: s[3],
                tchla: s[4],
                a_y_440: s[5],
                s_y: s[6],
                b_bp_550: s[7],
                s_bbp: s[8],
                a_d: Spectrum::new(a_d).expect("length checked"),
                a_ph: Spectrum::new(a_ph).expect("length checked"),
            };
            record.validate().map_err(|e| LibraryError::Csv(format!("row {}: {e}", row + 1)))?;
            records.push(record);
        }
        Ok(Self { records })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), LibraryError> {
        let csv_err = |e: csv::Error| LibraryError::Csv(e.to_string());
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = SCALAR_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend(WavelengthGrid.wavelengths().map(|nm| format!("a_d_{nm}")));
        header.extend(WavelengthGrid.wavelengths().map(|nm| format!("a_ph_{nm}")));
        wtr.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row: Vec<String> = [r.temp, r.sal, r.tss, r.doc, r.tchla, r.a_y_440, r.s_y, r.b_bp_550, r.s_bbp]
                .iter()
                .map(|v| v.to_string())
                .collect();
            row.extend(r.a_d.values().iter().map(|v| v.to_string()));
            row.extend(r.a_ph.values().iter().map(|v| v.to_string()));
            debug_assert_eq!(row.len(), 9 + 2 * N_BANDS);
            wtr.write_record(&row).map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| LibraryError::Csv(e.to_string()))
    }
}

const SCALAR_COLUMNS: [&str; 9] = ["temp", "sal", "tss", "doc", "tchla", "a_y_440", "s_y", "b_bp_550", "s_bbp"];

/// Pairwise Pearson correlations of equally long columns.
pub fn correlation_matrix<const D: usize>(columns: &[Vec<f64>; D]) -> [[Option<f64>; D]; D] {
    let mut m = [[None; D]; D];
    for i in 0..D {
        for j in i..D {
            let r = stats::pearson(&columns[i], &columns[j]);
            m[i][j] = r;
            m[j][i] = r;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(tss: f64, doc: f64, tchla: f64) -> LibraryRecord {
        LibraryRecord {
            temp: 24.0,
            sal: 33.0,
            tss,
            doc,
            tchla,
            a_y_440: 0.5,
            s_y: 0.018,
            b_bp_550: 0.05,
            s_bbp: 1.0,
            a_d: Spectrum::from_fn(|nm| 0.2 * (-0.011 * (nm - 440.0)).exp()),
            a_ph: Spectrum::from_fn(|nm| 0.05 + 0.04 * (-((nm - 440.0) / 30.0).powi(2)).exp()),
        }
    }

    #[test]
    fn cdom_examples() {
        let s = derive_cdom_siop(0.5, 0.018, 2.0).unwrap();
        assert_eq!(s.at_nm(440.0), 0.25);
        assert!((s.at_nm(500.0) - 0.25 * (-1.08f64).exp()).abs() < 1e-15);
        assert!((s.at_nm(500.0) - 0.08490).abs() < 1e-5);
        let flat = derive_cdom_siop(0.5, 0.0, 2.0).unwrap();
        assert!(flat.values().iter().all(|&v| v == 0.25));
        assert!(derive_cdom_siop(0.5, 0.018, 0.0).is_err());
    }

    #[test]
    fn bbp_examples() {
        let s = derive_bbp_siop(0.05, 1.0, 5.0).unwrap();
        assert_eq!(s.at_nm(550.0), 0.01);
        assert!((s.at_nm(440.0) - 0.0125).abs() < 1e-15);
        assert!(derive_bbp_siop(0.05, 0.0, 5.0).unwrap().values().iter().all(|&v| v == 0.01));
        assert!(derive_bbp_siop(0.05, 1.0, -1.0).is_err());
    }

    #[test]
    fn nap_and_ph_examples() {
        let a = Spectrum::from_fn(|nm| nm / 1000.0);
        assert_eq!(derive_nap_siop(&a, 1.0).unwrap(), a);
        assert_eq!(derive_ph_siop(&a, 1.0).unwrap(), a);
        assert!(derive_nap_siop(&Spectrum::constant(0.3), 10.0).unwrap().values().iter().all(|&v| (v - 0.03).abs() < 1e-15));
        assert!(derive_ph_siop(&Spectrum::constant(0.14), 2.0).unwrap().values().iter().all(|&v| (v - 0.07).abs() < 1e-15));
        assert!(derive_nap_siop(&a, 0.0).is_err());
        assert!(derive_ph_siop(&a, -2.0).is_err());
    }

    #[test]
    fn summary_single_record() {
        let lib = SpectralLibrary::new(vec![record(3.0, 1.0, 1.0)]).unwrap();
        for (_, s) in lib.summary_stats().unwrap() {
            assert_eq!(s.min, s.median);
            assert_eq!(s.max, s.mean);
            assert_eq!(s.std, 0.0);
        }
        assert_eq!(SpectralLibrary::new(vec![]).unwrap().summary_stats(), Err(LibraryError::Empty));
    }

    #[test]
    fn summary_population_std() {
        let s = Summary::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.median, 2.0);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn correlation_examples() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        assert!((stats::pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(stats::pearson(&x, &vec![2.0; 50]), None);

        // Independent uniform columns: |r| stays well inside 0.1 at n = 1000.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cols: [Vec<f64>; 4] = std::array::from_fn(|_| (0..1000).map(|_| rng.random::<f64>()).collect());
        let m = correlation_matrix(&cols);
        for i in 0..4 {
            assert!((m[i][i].unwrap() - 1.0).abs() < 1e-12);
            for j in 0..4 {
                if i != j {
                    assert!(m[i][j].unwrap().abs() < 0.1);
                }
            }
        }
    }

    #[test]
    fn library_correlation_matrix_shape() {
        let lib = SpectralLibrary::new((1..=6).map(|i| record(i as f64, 1.0 + (i % 3) as f64, 0.5 * i as f64)).collect()).unwrap();
        let m = lib.correlation_matrix().unwrap();
        // T is constant in this fixture.
        assert!(m[0].iter().all(Option::is_none));
        for i in 1..9 {
            for j in 0..9 {
                assert_eq!(m[i][j], m[j][i]);
                if let Some(r) = m[i][j] {
                    assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
                }
            }
        }
        assert!((m[2][2].unwrap() - 1.0).abs() < 1e-12);
        assert!(SpectralLibrary::new(vec![record(1.0, 1.0, 1.0)]).unwrap().correlation_matrix().is_err());
    }

    #[test]
    fn csv_round_trip_and_dropped_rows() {
        let lib = SpectralLibrary::new(vec![record(2.0, 1.5, 0.7), record(9.0, 3.0, 4.0)]).unwrap();
        let mut buf = Vec::new();
        lib.write_csv(&mut buf).unwrap();
        assert_eq!(SpectralLibrary::read_csv(buf.as_slice()).unwrap(), lib);

        // Blank out one field of the second row: it is dropped, not imputed.
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut fields: Vec<&str> = lines[2].split(',').collect();
        fields[3] = "";
        lines[2] = fields.join(",");
        let back = SpectralLibrary::read_csv(lines.join("\n").as_bytes()).unwrap();
        assert_eq!(back.len(), 1);
    }

    proptest! {
        #[test]
        fn derived_siops_round_trip(tss in 0.1f64..70.0, doc in 0.2f64..15.0, tchla in 0.05f64..23.0,
                                    a_y_440 in 0.0f64..3.0, s_y in 0.005f64..0.03,
                                    b_bp_550 in 0.0f64..0.5, s_bbp in 0.0f64..2.0) {
            let mut r = record(tss, doc, tchla);
            r.a_y_440 = a_y_440;
            r.s_y = s_y;
            r.b_bp_550 = b_bp_550;
            r.s_bbp = s_bbp;
            let s = r.siops().unwrap();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs().max(1e-300);
            for i in 0..N_BANDS {
                let nm = WavelengthGrid.wavelength(i);
                prop_assert!(close(s.a_d_star[i] * tss, r.a_d[i]));
                prop_assert!(close(s.a_ph_star[i] * tchla, r.a_ph[i]));
                prop_assert!(close(s.a_y_star[i] * doc, a_y_440 * (-s_y * (nm - 440.0)).exp()));
                prop_assert!(close(s.b_bp_star[i] * tss, b_bp_550 * (nm / 550.0).powf(-s_bbp)));
            }
        }

        #[test]
        fn summary_is_permutation_invariant(mut v in prop::collection::vec(-100.0f64..100.0, 1..60), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let a = Summary::of(&v).unwrap();
            v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = Summary::of(&v).unwrap();
            prop_assert_eq!(a.min, b.min);
            prop_assert_eq!(a.median, b.median);
            prop_assert_eq!(a.max, b.max);
            prop_assert!((a.mean - b.mean).abs() < 1e-9);
            prop_assert!((a.std - b.std).abs() < 1e-9);
        }
    }
}
