//! First-order meta-pretraining, region adaptation and k-fold
//! cross-validation.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{loss, loss_grad, Batch, InputTransform, MlpParams};
use super::optim::{Optimizer, OptimizerKind};
use super::region::RegionDataset;
use super::task::{Task, TaskSampler};
use super::MetaError;
use crate::synth::{dpgmm::record_rng, SyntheticDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub inner_steps: usize,
    pub epochs: usize,
    /// Tasks per meta-batch.
    pub tasks: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    /// Draw a fresh task set every epoch instead of once up front.
    pub resample_tasks: bool,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            inner_lr: 0.01,
            outer_lr: 0.001,
            inner_steps: 1,
            epochs: 200,
            tasks: 200,
            k_min: 5,
            k_max: 50,
            seed: 0,
            resample_tasks: false,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MetaError> {
        let bad = |m: &str| Err(MetaError::Config(m.into()));
        if !(self.inner_lr >= 0.0 && self.inner_lr.is_finite()) {
            return bad("inner_lr must be non-negative");
        }
        if !(self.outer_lr > 0.0 && self.outer_lr.is_finite()) {
            return bad("outer_lr must be positive");
        }
        if self.inner_steps == 0 || self.tasks == 0 {
            return bad("inner_steps and tasks must be at least 1");
        }
        if self.k_min == 0 || self.k_max < self.k_min {
            return bad("need 1 <= k_min <= k_max");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub lr: f64,
    pub iterations: usize,
    pub patience: usize,
    pub optimizer: OptimizerKind,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self { lr: 0.001, iterations: 500, patience: 25, optimizer: OptimizerKind::Sgd }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<(), MetaError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.patience == 0 {
            return Err(MetaError::Config("adaptation lr and patience must be positive".into()));
        }
        Ok(())
    }
}

/// `steps` full-batch gradient steps on `support`. The input is untouched.
pub fn inner_adapt(params: &MlpParams, support: &Batch, lr: f64, steps: usize) -> Result<MlpParams, MetaError> {
    let theta = adapt_theta(&params.sizes, &params.theta, support, lr, steps)?;
    Ok(params.with_theta(theta))
}

fn adapt_theta(sizes: &[usize], theta: &[f64], support: &Batch, lr: f64, steps: usize) -> Result<Vec<f64>, MetaError> {
    let mut phi = theta.to_vec();
    for _ in 0..steps {
        let (_, g) = loss_grad(sizes, &phi, support)?;
        for (p, gi) in phi.iter_mut().zip(&g) {
            *p -= lr * gi;
        }
    }
    Ok(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean query loss over the task batch, at the parameters the epoch
    /// started from.
    pub meta_loss: f64,
}

/// Everything needed to continue a pretraining run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumeState {
    pub epochs_done: usize,
    pub theta: Vec<f64>,
    pub optimizer: Optimizer,
    pub best_loss: f64,
    pub best_theta: Vec<f64>,
    pub log: Vec<EpochLog>,
}

impl ResumeState {
    /// Keeps the current parameters if `j` beats the best loss so far.
    fn offer(&mut self, j: f64) {
        if j < self.best_loss {
            self.best_loss = j;
            self.best_theta = self.theta.clone();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutcome {
    /// Parameters with the lowest meta-loss seen.
    pub params: MlpParams,
    pub log: Vec<EpochLog>,
    /// Meta-loss at the parameters after the last update.
    pub final_meta_loss: f64,
    pub state: ResumeState,
}

struct Prepared {
    support: Batch,
    query: Batch,
}

fn draw_tasks(sampler: &TaskSampler, cfg: &TrainConfig, stream: u64) -> Result<Vec<Task>, MetaError> {
    let mut rng = record_rng(cfg.seed, stream);
    let k_max = cfg.k_max.min(sampler.len() / 2);
    if k_max < cfg.k_min {
        return Err(MetaError::TooFewRecords { needed: 2 * cfg.k_min, got: sampler.len() });
    }
    (0..cfg.tasks)
        .map(|_| {
            let k = rng.random_range(cfg.k_min..=k_max);
            sampler.sample(k, &mut rng)
        })
        .collect()
}

fn prepare(all: &Batch, tasks: &[Task]) -> Vec<Prepared> {
    tasks.iter().map(|t| Prepared { support: all.select(&t.support), query: all.select(&t.query) }).collect()
}

/// Mean query loss and mean query gradient after inner adaptation. The
/// reduction runs in task order, so the result does not depend on the
/// thread count.
fn meta_step(
    sizes: &[usize],
    theta: &[f64],
    tasks: &[Prepared],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>), MetaError> {
    let per_task: Vec<(f64, Vec<f64>)> = tasks
        .par_iter()
        .map(|t| {
            let phi = adapt_theta(sizes, theta, &t.support, cfg.inner_lr, cfg.inner_steps)?;
            loss_grad(sizes, &phi, &t.query)
        })
        .collect::<Result<_, _>>()?;
    let n = per_task.len() as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut j = 0.0;
    for (l, g) in &per_task {
        j += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|v| *v /= n);
    Ok((j / n, grad))
}

/// Mean query loss over a task set after inner adaptation.
pub fn meta_loss(params: &MlpParams, support_query: &[(Batch, Batch)], cfg: &TrainConfig) -> Result<f64, MetaError> {
    let losses: Vec<f64> = support_query
        .par_iter()
        .map(|(s, q)| {
            let phi = adapt_theta(&params.sizes, &params.theta, s, cfg.inner_lr, cfg.inner_steps)?;
            loss(&params.sizes, &phi, q)
        })
        .collect::<Result<_, _>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Fresh network for `dataset`: input statistics from its spectra, output
/// biases at the mean log targets.
pub fn initial_params(dataset: &SyntheticDataset, seed: u64) -> Result<MlpParams, MetaError> {
    let input = InputTransform::fit(dataset.records.iter().map(|r| &r.rrs))?;
    let n = dataset.len() as f64;
    let mut bias = [0.0; 3];
    for r in &dataset.records {
        for (b, t) in bias.iter_mut().zip(r.log_targets()) {
            *b += t / n;
        }
    }
    Ok(MlpParams::init(input, &bias, seed))
}

/// Sampler over the SIOP scores of `dataset`.
pub fn sampler_for(dataset: &SyntheticDataset) -> Result<TaskSampler, MetaError> {
    TaskSampler::new(dataset.records.iter().map(|r| r.scores.clone()).collect())
}

/// Meta-pretraining from scratch, or continued from `resume`.
///
/// `base` supplies the architecture and input transform; with `resume`
/// its weights are replaced by the saved state.
pub fn meta_pretrain(
    dataset: &SyntheticDataset,
    base: &MlpParams,
    cfg: &TrainConfig,
    resume: Option<ResumeState>,
) -> Result<PretrainOutcome, MetaError> {
    cfg.validate()?;
    base.validate()?;
    if dataset.is_empty() {
        return Err(MetaError::TooFewRecords { needed: 1, got: 0 });
    }
    let sampler = sampler_for(dataset)?;
    let targets: Vec<[f64; 3]> = dataset.records.iter().map(|r| r.log_targets()).collect();
    let all = base.batch(dataset.records.iter().map(|r| &r.rrs), &targets);
    let sizes = base.sizes.clone();

    let mut state = resume.unwrap_or_else(|| ResumeState {
        epochs_done: 0,
        theta: base.theta.clone(),
        optimizer: Optimizer::new(cfg.optimizer, cfg.outer_lr, base.theta.len()),
        best_loss: f64::INFINITY,
        best_theta: base.theta.clone(),
        log: Vec::new(),
    });
    if state.theta.len() != base.theta.len() {
        return Err(MetaError::Dimension { expected: base.theta.len(), got: state.theta.len() });
    }

    let mut tasks = if cfg.resample_tasks { Vec::new() } else { prepare(&all, &draw_tasks(&sampler, cfg, 0)?) };
    for epoch in state.epochs_done + 1..=cfg.epochs {
        if cfg.resample_tasks {
            tasks = prepare(&all, &draw_tasks(&sampler, cfg, epoch as u64)?);
        }
        let (j, grad) = meta_step(&sizes, &state.theta, &tasks, cfg)?;
        if !j.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(MetaError::NonFinite { what: format!("meta-loss at epoch {epoch}") });
        }
        state.offer(j);
        state.log.push(EpochLog { epoch, meta_loss: j });
        log::debug!("epoch {epoch}: meta-loss {j:.6}");
        let ResumeState { theta, optimizer, .. } = &mut state;
        optimizer.step(theta, &grad);
        state.epochs_done = epoch;
    }

    if cfg.resample_tasks {
        tasks = prepare(&all, &draw_tasks(&sampler, cfg, state.epochs_done as u64 + 1)?);
    }
    let (final_j, _) = meta_step(&sizes, &state.theta, &tasks, cfg)?;
    if !final_j.is_finite() {
        return Err(MetaError::NonFinite { what: "final meta-loss".into() });
    }
    state.offer(final_j);

    Ok(PretrainOutcome {
        params: base.with_theta(state.best_theta.clone()),
        log: state.log.clone(),
        final_meta_loss: final_j,
        state,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOutcome {
    pub params: MlpParams,
    /// 0 means the base parameters were kept.
    pub best_iteration: usize,
    /// Query loss at iteration 0 (the base) and after each step taken.
    pub query_loss: Vec<f64>,
}

impl AdaptOutcome {
    pub fn best_loss(&self) -> f64 {
        self.query_loss[self.best_iteration]
    }
}

/// Full-batch fine-tuning from `base` on `support`, keeping the parameters
/// with the lowest `query` loss. Stops after `patience` iterations without
/// improvement.
pub fn region_adapt(base: &MlpParams, support: &Batch, query: &Batch, cfg: &AdaptConfig) -> Result<AdaptOutcome, MetaError> {
    cfg.validate()?;
    if support.is_empty() || query.is_empty() {
        return Err(MetaError::EmptyBatch);
    }
    if (0..support.y.ncols()).any(|j| {
        let c = support.y.column(j);
        c.max() - c.min() == 0.0
    }) && support.len() > 1
    {
        log::warn!("region targets are constant in at least one variable");
    }
    let sizes = &base.sizes;
    let mut theta = base.theta.clone();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, theta.len());
    let mut query_loss = vec![loss(sizes, &theta, query)?];
    let mut best = (0, theta.clone());
    for it in 1..=cfg.iterations {
        let (_, g) = loss_grad(sizes, &theta, support)?;
        opt.step(&mut theta, &g);
        let q = loss(sizes, &theta, query)?;
        if !q.is_finite() {
            return Err(MetaError::NonFinite { what: format!("query loss at adaptation iteration {it}") });
        }
        query_loss.push(q);
        if q < query_loss[best.0] {
            best = (it, theta.clone());
        } else if it - best.0 >= cfg.patience {
            break;
        }
    }
    Ok(AdaptOutcome { params: base.with_theta(best.1), best_iteration: best.0, query_loss })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Fold of each region record.
    pub fold: Vec<usize>,
    /// Linear-space `[TSS, DOC, TChl-a]` predicted while the record was in
    /// the query fold.
    pub predictions: Vec<[f64; 3]>,
    pub best_iteration: Vec<usize>,
}

/// Seeded shuffle; position `i` of the shuffle goes to fold `i % folds`.
pub fn assign_folds(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut record_rng(seed, 0));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// k-fold cross-validation: each fold in turn is the query set, the rest
/// the support set.
pub fn cross_validate(
    base: &MlpParams,
    region: &RegionDataset,
    folds: usize,
    cfg: &AdaptConfig,
    seed: u64,
) -> Result<CvResult, MetaError> {
    if folds < 2 {
        return Err(MetaError::Config("need at least 2 folds".into()));
    }
    if region.len() < folds {
        return Err(MetaError::TooFewRecords { needed: folds, got: region.len() });
    }
    let fold = assign_folds(region.len(), folds, seed);
    let all = base.batch(region.spectra(), &region.log_targets());
    let per_fold: Vec<(Vec<usize>, Vec<[f64; 3]>, usize)> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (q, s): (Vec<usize>, Vec<usize>) = (0..region.len()).partition(|&i| fold[i] == f);
            let out = region_adapt(base, &all.select(&s), &all.select(&q), cfg)?;
            let spectra: Vec<_> = q.iter().map(|&i| region.records[i].rrs.clone()).collect();
            let pred = out.params.forward_many(&spectra)?;
            Ok((q, pred, out.best_iteration))
        })
        .collect::<Result<_, MetaError>>()?;
    let mut predictions = vec![[0.0; 3]; region.len()];
    let mut best_iteration = Vec::with_capacity(folds);
    for (q, pred, best) in per_fold {
        for (i, p) in q.into_iter().zip(pred) {
            predictions[i] = p.map(|v| 10f64.powf(v));
        }
        best_iteration.push(best);
    }
    Ok(CvResult { fold, predictions, best_iteration })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bio_optics::ForwardModel;
    use crate::fixture::LibraryMixture;
    use crate::synth::{generate_dataset, SynthConfig};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn tiny_params(n_in: usize, seed: u64) -> MlpParams {
        MlpParams::init_with_sizes(vec![n_in, 6, 5, 3], InputTransform::identity(n_in), &[0.0; 3], seed)
    }

    fn linear_batch(n: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DMatrix::from_fn(n, 3, |i, j| 0.5 * x[(i, j)] - 0.2 * x[(i, 3)] + 0.1);
        Batch { x, y }
    }

    #[test]
    fn inner_adapt_properties() {
        let p = tiny_params(4, 1);
        let b = linear_batch(20, 2);
        assert_eq!(inner_adapt(&p, &b, 0.0, 3).unwrap(), p);
        let one = inner_adapt(&p, &b, 0.01, 1).unwrap();
        assert!(one.loss(&b).unwrap() < p.loss(&b).unwrap());
        let twice = inner_adapt(&one, &b, 0.01, 1).unwrap();
        assert_eq!(twice, inner_adapt(&p, &b, 0.01, 2).unwrap());
        assert_eq!(p, tiny_params(4, 1));
    }

    #[test]
    fn region_adapt_zero_iterations_is_base() {
        let p = tiny_params(4, 3);
        let b = linear_batch(10, 4);
        let cfg = AdaptConfig { iterations: 0, ..Default::default() };
        let out = region_adapt(&p, &b, &b, &cfg).unwrap();
        assert_eq!(out.params, p);
        assert_eq!(out.best_iteration, 0);
    }

    #[test]
    fn region_adapt_never_worse_than_base_on_query() {
        let p = tiny_params(4, 5);
        let (s, q) = (linear_batch(30, 6), linear_batch(30, 7));
        for optimizer in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let cfg = AdaptConfig { lr: 0.01, optimizer, ..Default::default() };
            let out = region_adapt(&p, &s, &q, &cfg).unwrap();
            assert!(out.best_loss() <= out.query_loss[0]);
            assert!(out.best_loss() < 0.5 * out.query_loss[0], "{optimizer:?}: {}", out.best_loss());
            assert_eq!(out.params.loss(&q).unwrap(), out.best_loss());
        }
    }

    #[test]
    fn folds_partition() {
        let f = assign_folds(23, 10, 9);
        let mut counts = [0; 10];
        f.iter().for_each(|&i| counts[i] += 1);
        assert!(counts.iter().all(|&c| c == 2 || c == 3));
        assert_eq!(counts.iter().sum::<usize>(), 23);
        assert_eq!(f, assign_folds(23, 10, 9));
    }

    fn small_dataset() -> SyntheticDataset {
        let lib = LibraryMixture::standard().generate(60, 11);
        generate_dataset(&lib, &ForwardModel::bundled(), &SynthConfig { k: 120, seed: 2, ..Default::default() })
            .unwrap()
            .dataset
    }

    #[test]
    fn pretrain_smoke_and_resume() {
        let ds = small_dataset();
        let base = initial_params(&ds, 1).unwrap();
        let smoke = TrainConfig { epochs: 1, tasks: 1, k_min: 5, k_max: 5, ..Default::default() };
        let out = meta_pretrain(&ds, &base, &smoke, None).unwrap();
        out.params.validate().unwrap();
        assert_eq!(out.log.len(), 1);

        let cfg = TrainConfig { epochs: 6, tasks: 8, k_min: 5, k_max: 20, ..Default::default() };
        let full = meta_pretrain(&ds, &base, &cfg, None).unwrap();
        let half = meta_pretrain(&ds, &base, &TrainConfig { epochs: 3, ..cfg.clone() }, None).unwrap();
        let resumed = meta_pretrain(&ds, &base, &cfg, Some(half.state)).unwrap();
        assert_eq!(resumed.params, full.params);
        assert_eq!(resumed.log, full.log);
        assert!(full.log.iter().all(|l| l.meta_loss >= full.state.best_loss));
    }

    #[test]
    fn pretrain_thread_count_independent() {
        let ds = small_dataset();
        let base = initial_params(&ds, 1).unwrap();
        let cfg = TrainConfig { epochs: 3, tasks: 6, k_min: 5, k_max: 20, resample_tasks: true, ..Default::default() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| meta_pretrain(&ds, &base, &cfg, None).unwrap());
        let b = meta_pretrain(&ds, &base, &cfg, None).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn cross_validation_predicts_each_record_once() {
        let ds = small_dataset();
        let base = initial_params(&ds, 1).unwrap();
        let region = RegionDataset::new(
            ds.records[..10]
                .iter()
                .enumerate()
                .map(|(i, r)| super::super::RegionRecord {
                    timestamp: i.to_string(),
                    bgc: r.bgc.concentrations(),
                    rrs: r.rrs.clone(),
                })
                .collect(),
        );
        let cfg = AdaptConfig { iterations: 5, ..Default::default() };
        let cv = cross_validate(&base, &region, 10, &cfg, 0).unwrap();
        assert_eq!(cv.predictions.len(), 10);
        let mut f = cv.fold.clone();
        f.sort();
        assert_eq!(f, (0..10).collect::<Vec<_>>());
        assert!(cv.predictions.iter().flatten().all(|v| *v > 0.0 && v.is_finite()));
        assert!(cross_validate(&base, &region, 11, &cfg, 0).is_err());
    }
}
