//! Command-line pipeline: synthetic data generation, meta-pretraining,
//! region adaptation, prediction and analysis.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod model_file;

pub use config::{PipelineConfig, CONFIG_ENV};
pub use error::CliError;
pub use model_file::ModelFile;

#[derive(Debug, Parser)]
#[command(name = "bgcmeta", version, about = "Meta-learned water-quality retrieval from hyperspectral reflectance")]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Overrides `paths.output_dir`.
    #[arg(long, short = 'o', global = true)]
    pub output_dir: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives byte-reproducible output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Illuminant {
    D65,
    EqualEnergy,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic stand-in spectral library drawn from a known mixture.
    Fixture {
        #[arg(long, default_value_t = 247)]
        records: usize,
        #[arg(long = "fixture-seed", default_value_t = 1)]
        fixture_seed: u64,
    },
    /// Run the forward model on rows of concentrations and SIOP spectra.
    Simulate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Fit the mixture to the library and draw a synthetic dataset.
    Synth {
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Meta-pretrain the base model on the synthetic dataset.
    Pretrain {
        #[arg(long)]
        synthetic: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        tasks: Option<usize>,
        /// Continue from the training state saved in a model file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Cross-validate and fine-tune the base model on a region dataset.
    Adapt {
        #[arg(long)]
        region: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Predict concentrations from R_rs spectra.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
    },
    /// Accuracy metrics of predicted against measured concentrations.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        meas: PathBuf,
    },
    /// EFAST sensitivity of the forward model to TSS, DOC and TChl-a.
    Sensitivity {
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// CIE 1931 chromaticity of R_rs spectra.
    Chroma {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Illuminant::D65)]
        illuminant: Illuminant,
    },
}

/// Loads the configuration, applies flag overrides and runs the command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(dir) = cli.output_dir {
        cfg.paths.output_dir = dir;
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(cfg, cli.command))
}
