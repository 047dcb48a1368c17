//! Accuracy metrics computed on log₁₀ values.

use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub variable: String,
    /// Pairs used.
    pub n: usize,
    /// Pairs dropped because one side was not a positive finite number.
    pub n_excluded: usize,
    /// Missing when the measured logs have zero variance.
    pub r2: Option<f64>,
    /// Multiplicative factors, `10^(·)` of the log-space statistic.
    pub bias: f64,
    pub rmse: f64,
    pub mae: f64,
}

impl RetrievalMetrics {
    pub fn named(mut self, variable: &str) -> Self {
        self.variable = variable.to_string();
        self
    }
}

pub fn retrieval_metrics(pred: &[f64], meas: &[f64]) -> Result<RetrievalMetrics, AnalysisError> {
    if pred.len() != meas.len() {
        return Err(AnalysisError::Length(pred.len(), meas.len()));
    }
    let ok = |v: f64| v.is_finite() && v > 0.0;
    let pairs: Vec<(f64, f64)> =
        pred.iter().zip(meas).filter(|(p, m)| ok(**p) && ok(**m)).map(|(p, m)| (p.log10(), m.log10())).collect();
    let n = pairs.len();
    if n < 2 {
        return Err(AnalysisError::TooFew { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean_meas = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let ss_tot: f64 = pairs.iter().map(|p| (p.1 - mean_meas).powi(2)).sum();
    let ss_res: f64 = pairs.iter().map(|p| (p.1 - p.0).powi(2)).sum();
    let diff_mean = pairs.iter().map(|p| p.0 - p.1).sum::<f64>() / nf;
    let abs_mean = pairs.iter().map(|p| (p.0 - p.1).abs()).sum::<f64>() / nf;
    Ok(RetrievalMetrics {
        variable: String::new(),
        n,
        n_excluded: pred.len() - n,
        r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
        bias: 10f64.powf(diff_mean),
        rmse: 10f64.powf((ss_res / nf).sqrt()),
        mae: 10f64.powf(abs_mean),
    })
}
