use bgcmeta_core::meta::{AdaptConfig, MlpParams, ResumeState, TrainConfig, RRS_OFFSET};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub sizes: Vec<usize>,
    pub hidden_activation: String,
    pub output_activation: String,
    pub input_offset: f64,
    pub outputs: Vec<String>,
}

impl Architecture {
    pub fn describe(params: &MlpParams) -> Self {
        Self {
            sizes: params.sizes.clone(),
            hidden_activation: "tanh".into(),
            output_activation: "linear".into(),
            input_offset: RRS_OFFSET,
            outputs: ["log10_tss", "log10_doc", "log10_tchla"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationInfo {
    pub config: AdaptConfig,
    pub records: usize,
    pub best_iteration: usize,
    pub best_loss: f64,
}

/// Contents of `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub architecture: Architecture,
    pub params: MlpParams,
    pub seed: u64,
    pub train: TrainConfig,
    pub best_meta_loss: f64,
    pub final_meta_loss: f64,
    /// Present on pretrained models so training can be continued.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume: Option<ResumeState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptation: Option<AdaptationInfo>,
}
