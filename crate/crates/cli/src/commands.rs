use std::path::{Path, PathBuf};

use bgcmeta_core::analysis::{
    chromaticity, compare_fidelity, forward_sensitivity, library_defaults, retrieval_metrics, BandRatioSet,
    CieTables, RetrievalMetrics,
};
use bgcmeta_core::bio_optics::{ForwardModel, WaterIopTables};
use bgcmeta_core::fixture::LibraryMixture;
use bgcmeta_core::meta::{
    cross_validate, initial_params, meta_pretrain, region_adapt, CvResult, MlpParams, RegionDataset,
};
use bgcmeta_core::siop::SpectralLibrary;
use bgcmeta_core::spectral::Spectrum;
use bgcmeta_core::synth::{generate_dataset, SyntheticDataset};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::io::{self, RrsTable};
use crate::manifest::Manifest;
use crate::model_file::{AdaptationInfo, Architecture, ModelFile};
use crate::{Command, Illuminant};

const VARIABLES: [&str; 3] = ["TSS", "DOC", "TChl-a"];
const PREDICT_CHUNK: usize = 256;

pub fn dispatch(mut cfg: PipelineConfig, command: Command) -> Result<(), CliError> {
    match &command {
        Command::Synth { library, k, noise } => {
            set(&mut cfg.paths.library, library);
            cfg.synth.k = k.unwrap_or(cfg.synth.k);
            cfg.synth.noise = noise.unwrap_or(cfg.synth.noise);
        }
        Command::Pretrain { synthetic, epochs, tasks, .. } => {
            set(&mut cfg.paths.synthetic, synthetic);
            cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
            cfg.train.tasks = tasks.unwrap_or(cfg.train.tasks);
        }
        Command::Adapt { region, model, folds, iterations } => {
            set(&mut cfg.paths.region, region);
            set(&mut cfg.paths.model, model);
            cfg.cv.folds = folds.unwrap_or(cfg.cv.folds);
            cfg.adapt.iterations = iterations.unwrap_or(cfg.adapt.iterations);
        }
        Command::Predict { model, .. } => set(&mut cfg.paths.model, model),
        Command::Sensitivity { library, samples } => {
            set(&mut cfg.paths.library, library);
            cfg.sensitivity.efast.samples = samples.unwrap_or(cfg.sensitivity.efast.samples);
        }
        _ => {}
    }
    cfg.validate()?;
    let out = cfg.paths.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| CliError::Other(format!("{}: {e}", out.display())))?;
    let ctx = Ctx { cfg, out };
    match command {
        Command::Fixture { records, fixture_seed } => ctx.fixture(records, fixture_seed),
        Command::Simulate { input } => ctx.simulate(&input),
        Command::Synth { .. } => ctx.synth(),
        Command::Pretrain { resume, .. } => ctx.pretrain(resume.as_deref()),
        Command::Adapt { .. } => ctx.adapt(),
        Command::Predict { input, .. } => ctx.predict(&input),
        Command::Evaluate { pred, meas } => ctx.evaluate(&pred, &meas),
        Command::Sensitivity { .. } => ctx.sensitivity(),
        Command::Chroma { input, illuminant } => ctx.chroma(&input, illuminant),
    }
}

fn set(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| CliError::Input(format!("no {what} given (flag or config paths.{what})")))
}

struct Ctx {
    cfg: PipelineConfig,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn manifest(&self, command: &str, seed: u64, inputs: &[&Path], outputs: &[&Path]) -> Result<(), CliError> {
        let mut inputs = inputs.to_vec();
        inputs.extend(self.cfg.paths.water_iops.as_deref());
        Manifest::write(&self.out, command, self.cfg.hash(), seed, &inputs, outputs)
    }

    fn forward_model(&self) -> Result<ForwardModel, CliError> {
        match &self.cfg.paths.water_iops {
            None => Ok(ForwardModel::bundled()),
            Some(p) => {
                let t = WaterIopTables::read_csv(io::open(p)?).map_err(|e| CliError::from(e).context(p.display()))?;
                Ok(ForwardModel::new(t))
            }
        }
    }

    fn library(&self) -> Result<(SpectralLibrary, &Path), CliError> {
        let p = required(&self.cfg.paths.library, "library")?;
        let lib = SpectralLibrary::read_csv(io::open(p)?).map_err(|e| CliError::from(e).context(p.display()))?;
        if lib.is_empty() {
            return Err(CliError::Input(format!("{}: library has no usable records", p.display())));
        }
        Ok((lib, p))
    }

    fn model(&self) -> Result<(ModelFile, &Path), CliError> {
        let p = required(&self.cfg.paths.model, "model")?;
        let m: ModelFile = io::read_json(p)?;
        m.params.validate().map_err(|e| CliError::from(e).context(p.display()))?;
        Ok((m, p))
    }

    fn fixture(&self, records: usize, seed: u64) -> Result<(), CliError> {
        if records == 0 {
            return Err(CliError::Input("fixture needs at least one record".into()));
        }
        let lib = LibraryMixture::standard().generate(records, seed);
        let path = self.path("library.csv");
        lib.write_csv(io::create(&path)?).map_err(|e| CliError::Other(e.to_string()))?;
        self.manifest("fixture", seed, &[], &[&path])
    }

    fn simulate(&self, input: &Path) -> Result<(), CliError> {
        let fwd = self.forward_model()?;
        let (ids, rows) = io::read_forward_inputs(input)?;
        let spectra = rows
            .par_iter()
            .enumerate()
            .map(|(i, (bgc, siops))| {
                fwd.simulate(bgc, siops).map_err(|e| CliError::from(e).context(format!("{}: row {}", input.display(), i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let path = self.path("rrs.csv");
        RrsTable { ids, spectra }.write(&path)?;
        self.manifest("simulate", 0, &[input], &[&path])
    }

    fn synth(&self) -> Result<(), CliError> {
        let (lib, lib_path) = self.library()?;
        let fwd = self.forward_model()?;
        let g = generate_dataset(&lib, &fwd, &self.cfg.synth)?;
        let data = self.path("synthetic.csv");
        g.dataset.write_csv(io::create(&data)?).map_err(|e| CliError::Other(e.to_string()))?;
        let gmm = self.path("gmm.json");
        io::write_json(&gmm, &g.artifact)?;
        let fidelity = self.path("fidelity.json");
        io::write_json(&fidelity, &compare_fidelity(&lib, &g.dataset, &g.artifact.features)?)?;
        self.manifest("synth", self.cfg.synth.seed, &[lib_path], &[&data, &gmm, &fidelity])
    }

    fn pretrain(&self, resume: Option<&Path>) -> Result<(), CliError> {
        let data_path = self.cfg.paths.synthetic.clone().unwrap_or_else(|| self.path("synthetic.csv"));
        let ds = SyntheticDataset::read_csv(io::open(&data_path)?)
            .map_err(|e| CliError::from(e).context(data_path.display()))?;
        if ds.is_empty() {
            return Err(CliError::Input(format!("{}: no records", data_path.display())));
        }
        let train = &self.cfg.train;
        let (base, state) = match resume {
            None => (initial_params(&ds, train.seed)?, None),
            Some(p) => {
                let m: ModelFile = io::read_json(p)?;
                let state = m.resume.ok_or_else(|| CliError::Input(format!("{}: no saved training state", p.display())))?;
                (m.params, Some(state))
            }
        };
        let outcome = meta_pretrain(&ds, &base, train, state)?;
        let model = ModelFile {
            architecture: Architecture::describe(&outcome.params),
            params: outcome.params,
            seed: train.seed,
            train: train.clone(),
            best_meta_loss: outcome.state.best_loss,
            final_meta_loss: outcome.final_meta_loss,
            resume: Some(outcome.state),
            adaptation: None,
        };
        let model_path = self.path("model.json");
        io::write_json(&model_path, &model)?;
        let log_path = self.path("training_log.csv");
        let mut w = csv::Writer::from_writer(io::create(&log_path)?);
        let err = |e: csv::Error| CliError::Other(format!("{}: {e}", log_path.display()));
        w.write_record(["epoch", "meta_loss"]).map_err(err)?;
        for l in &outcome.log {
            w.write_record([l.epoch.to_string(), l.meta_loss.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::Other(e.to_string()))?;
        drop(w);
        let mut inputs = vec![data_path.as_path()];
        inputs.extend(resume);
        self.manifest("pretrain", train.seed, &inputs, &[&model_path, &log_path])
    }

    fn adapt(&self) -> Result<(), CliError> {
        let (base, model_path) = self.model()?;
        let region_path = required(&self.cfg.paths.region, "region")?;
        let region =
            RegionDataset::read_csv(io::open(region_path)?).map_err(|e| CliError::from(e).context(region_path.display()))?;
        let folds = self.cfg.cv.folds;
        if region.len() < folds {
            return Err(CliError::Input(format!("region has {} records, fewer than {folds} folds", region.len())));
        }
        let cv = cross_validate(&base.params, &region, folds, &self.cfg.adapt, self.cfg.cv.seed)?;
        let meas: Vec<[f64; 3]> = region.records.iter().map(|r| r.bgc).collect();
        let metrics = metrics_table(&cv.predictions, &meas)?;
        let baseline = baseline_cv(&region, &cv, &self.cfg.baseline_bands);

        let all = base.params.batch(region.spectra(), &region.log_targets());
        let final_fit = region_adapt(&base.params, &all, &all, &self.cfg.adapt)?;
        let adapted = ModelFile {
            architecture: base.architecture.clone(),
            params: final_fit.params.clone(),
            resume: None,
            adaptation: Some(AdaptationInfo {
                config: self.cfg.adapt.clone(),
                records: region.len(),
                best_iteration: final_fit.best_iteration,
                best_loss: final_fit.best_loss(),
            }),
            ..base
        };

        let adapted_path = self.path("adapted_model.json");
        io::write_json(&adapted_path, &adapted)?;
        let metrics_path = self.path("metrics.json");
        io::write_json(&metrics_path, &metrics)?;
        let pred_path = self.path("cv_predictions.csv");
        write_cv_predictions(&pred_path, &region, &cv, baseline.as_ref().ok().map(|b| &b.0))?;
        let mut outputs = vec![adapted_path.as_path(), metrics_path.as_path(), pred_path.as_path()];
        let baseline_path = self.path("baseline_metrics.json");
        match &baseline {
            Ok((_, m)) => {
                io::write_json(&baseline_path, m)?;
                outputs.push(&baseline_path);
            }
            Err(e) => log::warn!("band-ratio baseline skipped: {e}"),
        }
        self.manifest("adapt", self.cfg.cv.seed, &[model_path, region_path], &outputs)
    }

    fn predict(&self, input: &Path) -> Result<(), CliError> {
        let (model, model_path) = self.model()?;
        let table = RrsTable::read(input)?;
        let preds = predict_all(&model.params, &table.spectra)?;
        let path = self.path("predictions.csv");
        io::write_bgc(&path, &table.ids, &preds)?;
        self.manifest("predict", model.seed, &[model_path, input], &[&path])
    }

    fn evaluate(&self, pred: &Path, meas: &Path) -> Result<(), CliError> {
        let (_, p) = io::read_bgc(pred)?;
        let (_, m) = io::read_bgc(meas)?;
        if p.len() != m.len() {
            return Err(CliError::Input(format!("{} has {} rows, {} has {}", pred.display(), p.len(), meas.display(), m.len())));
        }
        let path = self.path("metrics.json");
        io::write_json(&path, &metrics_table(&p, &m)?)?;
        self.manifest("evaluate", 0, &[pred, meas], &[&path])
    }

    fn sensitivity(&self) -> Result<(), CliError> {
        let s = &self.cfg.sensitivity;
        let (lib, lib_path) = self.library()?;
        let (lib_ranges, siops) = library_defaults(&lib)?;
        let ranges = s.ranges.unwrap_or(lib_ranges);
        let fwd = self.forward_model()?;
        let result = forward_sensitivity(&fwd, &siops, &ranges, s.temp, s.sal, &s.efast)?;
        let path = self.path("sensitivity.csv");
        result.write_csv(io::create(&path)?)?;
        self.manifest("sensitivity", s.efast.seed, &[lib_path], &[&path])
    }

    fn chroma(&self, input: &Path, illuminant: Illuminant) -> Result<(), CliError> {
        let tables = match &self.cfg.paths.cie_tables {
            None => CieTables::bundled(),
            Some(p) => CieTables::read_csv(io::open(p)?).map_err(|e| CliError::from(e).context(p.display()))?,
        };
        let light = match illuminant {
            Illuminant::D65 => tables.d65.clone(),
            Illuminant::EqualEnergy => Spectrum::constant(1.0),
        };
        let table = RrsTable::read(input)?;
        let path = self.path("chromaticity.csv");
        let mut w = csv::Writer::from_writer(io::create(&path)?);
        let err = |e: csv::Error| CliError::Other(format!("{}: {e}", path.display()));
        w.write_record(["id", "x", "y"]).map_err(err)?;
        for (i, (id, s)) in table.ids.iter().zip(&table.spectra).enumerate() {
            let c = chromaticity(s, &tables, &light)
                .map_err(|e| CliError::from(e).context(format!("{}: row {}", input.display(), i + 1)))?;
            w.write_record([id.clone(), c.x.to_string(), c.y.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::Other(e.to_string()))?;
        drop(w);
        let mut inputs = vec![input];
        inputs.extend(self.cfg.paths.cie_tables.as_deref());
        self.manifest("chroma", 0, &inputs, &[&path])
    }
}

/// Linear-space predictions in input order, computed in fixed-size chunks.
pub fn predict_all(params: &MlpParams, spectra: &[Spectrum]) -> Result<Vec<[f64; 3]>, CliError> {
    let chunks = spectra
        .par_chunks(PREDICT_CHUNK)
        .map(|c| params.forward_many(c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::from)?;
    Ok(chunks.into_iter().flatten().map(|r| r.map(|v| 10f64.powf(v))).collect())
}

fn metrics_table(pred: &[[f64; 3]], meas: &[[f64; 3]]) -> Result<Vec<RetrievalMetrics>, CliError> {
    (0..3)
        .map(|j| {
            let p: Vec<f64> = pred.iter().map(|r| r[j]).collect();
            let m: Vec<f64> = meas.iter().map(|r| r[j]).collect();
            retrieval_metrics(&p, &m).map(|r| r.named(VARIABLES[j])).map_err(|e| CliError::from(e).context(VARIABLES[j]))
        })
        .collect()
}

/// Band-ratio predictions under the same fold assignment as the network.
fn baseline_cv(
    region: &RegionDataset,
    cv: &CvResult,
    bands: &[(f64, f64); 3],
) -> Result<(Vec<[f64; 3]>, Vec<RetrievalMetrics>), CliError> {
    let folds = cv.best_iteration.len();
    let mut preds = vec![[0.0; 3]; region.len()];
    for f in 0..folds {
        let (q, s): (Vec<usize>, Vec<usize>) = (0..region.len()).partition(|&i| cv.fold[i] == f);
        let spectra: Vec<Spectrum> = s.iter().map(|&i| region.records[i].rrs.clone()).collect();
        let bgc: Vec<[f64; 3]> = s.iter().map(|&i| region.records[i].bgc).collect();
        let model = BandRatioSet::fit(&spectra, &bgc, bands)?;
        for i in q {
            preds[i] = model.predict(&region.records[i].rrs)?;
        }
    }
    let meas: Vec<[f64; 3]> = region.records.iter().map(|r| r.bgc).collect();
    let metrics = metrics_table(&preds, &meas)?;
    Ok((preds, metrics))
}

fn write_cv_predictions(
    path: &Path,
    region: &RegionDataset,
    cv: &CvResult,
    baseline: Option<&Vec<[f64; 3]>>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(io::create(path)?);
    let err = |e: csv::Error| CliError::Other(format!("{}: {e}", path.display()));
    let mut header: Vec<&str> =
        vec!["timestamp", "fold", "tss", "doc", "tchla", "tss_pred", "doc_pred", "tchla_pred"];
    if baseline.is_some() {
        header.extend(["tss_baseline", "doc_baseline", "tchla_baseline"]);
    }
    w.write_record(&header).map_err(err)?;
    for (i, r) in region.records.iter().enumerate() {
        let mut row = vec![r.timestamp.clone(), cv.fold[i].to_string()];
        row.extend(r.bgc.iter().chain(&cv.predictions[i]).map(|v| v.to_string()));
        if let Some(b) = baseline {
            row.extend(b[i].iter().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Other(e.to_string()))
}
