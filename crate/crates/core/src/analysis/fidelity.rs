//! How closely a synthetic dataset reproduces the library it was fit to.

use serde::{Deserialize, Serialize};

use super::ks::{ks_statistic, KsResult};
use super::AnalysisError;
use crate::bio_optics::SiopSet;
use crate::siop::SpectralLibrary;
use crate::spectral::WavelengthGrid;
use crate::stats::pearson;
use crate::synth::{FeatureSpace, SyntheticDataset};

/// Concentrations and IOP magnitudes compared between the two datasets.
pub const FIDELITY_VARIABLES: [&str; 7] = ["TSS", "DOC", "TChl-a", "a_d(440)", "b_bp(550)", "a_y(440)", "a_ph(440)"];

/// Variable pairs whose Pearson correlation should survive synthesis.
pub const FIDELITY_PAIRS: [(&str, &str); 9] = [
    ("TSS", "DOC"),
    ("TSS", "TChl-a"),
    ("DOC", "TChl-a"),
    ("TSS", "a_d(440)"),
    ("TSS", "b_bp(550)"),
    ("a_d(440)", "b_bp(550)"),
    ("DOC", "a_y(440)"),
    ("TChl-a", "a_ph(440)"),
    ("a_y(440)", "a_ph(440)"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalComparison {
    pub variable: String,
    pub ks: KsResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub r_library: Option<f64>,
    pub r_synthetic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// KS on log₁₀ TSS, DOC, TChl-a.
    pub marginals: Vec<MarginalComparison>,
    pub pairs: Vec<PairComparison>,
}

fn columns(bgc: [f64; 3], siops: &SiopSet) -> [f64; 7] {
    let i440 = WavelengthGrid.index_of(440.0).expect("on grid");
    let i550 = WavelengthGrid.index_of(550.0).expect("on grid");
    let [tss, doc, chl] = bgc;
    [
        tss,
        doc,
        chl,
        tss * siops.a_d_star.values()[i440],
        tss * siops.b_bp_star.values()[i550],
        doc * siops.a_y_star.values()[i440],
        chl * siops.a_ph_star.values()[i440],
    ]
}

fn table_library(library: &SpectralLibrary) -> Result<Vec<[f64; 7]>, AnalysisError> {
    library
        .records
        .iter()
        .map(|r| {
            let s = r.siops().map_err(|e| AnalysisError::Degenerate(e.to_string()))?;
            Ok(columns([r.tss, r.doc, r.tchla], &s))
        })
        .collect()
}

fn table_synthetic(data: &SyntheticDataset, features: &FeatureSpace) -> Result<Vec<[f64; 7]>, AnalysisError> {
    data.records
        .iter()
        .map(|r| {
            let s = r.siops(features).map_err(|e| AnalysisError::Degenerate(e.to_string()))?;
            Ok(columns(r.bgc.concentrations(), &s))
        })
        .collect()
}

pub fn compare(
    library: &SpectralLibrary,
    data: &SyntheticDataset,
    features: &FeatureSpace,
) -> Result<FidelityReport, AnalysisError> {
    if library.is_empty() || data.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let lib = table_library(library)?;
    let syn = table_synthetic(data, features)?;
    let col = |t: &[[f64; 7]], j: usize| t.iter().map(|r| r[j]).collect::<Vec<_>>();
    let idx = |name: &str| FIDELITY_VARIABLES.iter().position(|v| *v == name).expect("known variable");
    let marginals = (0..3)
        .map(|j| {
            let log = |v: Vec<f64>| v.into_iter().map(f64::log10).collect::<Vec<_>>();
            Ok(MarginalComparison {
                variable: FIDELITY_VARIABLES[j].to_string(),
                ks: ks_statistic(&log(col(&lib, j)), &log(col(&syn, j)))?,
            })
        })
        .collect::<Result<_, AnalysisError>>()?;
    let pairs = FIDELITY_PAIRS
        .iter()
        .map(|(a, b)| PairComparison {
            a: a.to_string(),
            b: b.to_string(),
            r_library: pearson(&col(&lib, idx(a)), &col(&lib, idx(b))),
            r_synthetic: pearson(&col(&syn, idx(a)), &col(&syn, idx(b))),
        })
        .collect();
    Ok(FidelityReport { marginals, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bio_optics::ForwardModel;
    use crate::fixture::LibraryMixture;
    use crate::synth::{generate_dataset, SynthConfig};

    #[test]
    fn report_shape_and_self_consistency() {
        let lib = LibraryMixture::standard().generate(80, 5);
        let g = generate_dataset(&lib, &ForwardModel::bundled(), &SynthConfig { k: 400, seed: 1, ..Default::default() })
            .unwrap();
        let rep = compare(&lib, &g.dataset, &g.artifact.features).unwrap();
        assert_eq!(rep.marginals.len(), 3);
        assert_eq!(rep.pairs.len(), 9);
        for m in &rep.marginals {
            assert!((0.0..=1.0).contains(&m.ks.d));
        }
        for p in &rep.pairs {
            assert!(p.r_library.unwrap().abs() <= 1.0 && p.r_synthetic.unwrap().abs() <= 1.0);
        }
    }
}
