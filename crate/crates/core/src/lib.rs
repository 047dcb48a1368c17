//! Physics-aware meta-learning for retrieving TSS, DOC and chlorophyll-a
//! from hyperspectral remote-sensing reflectance.
//!
//! The pipeline runs a bio-optical forward model over states sampled from a
//! mixture fitted to a spectral library, meta-pretrains a small MLP on the
//! resulting synthetic dataset, and fine-tunes it per region.

pub mod analysis;
pub mod bio_optics;
pub mod fixture;
pub mod meta;
pub mod siop;
pub mod spectral;
pub mod stats;
pub mod synth;
