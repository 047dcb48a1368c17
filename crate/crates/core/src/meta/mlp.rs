//! A small fully connected regressor, R_rs (301 bands) → log₁₀[TSS, DOC, TChl-a],
//! with tanh hidden layers, a linear output and hand-written backprop.
//!
//! All weights and biases live in one flat vector `theta` so optimizers and
//! the meta-learning loop can treat parameters as plain vectors. Layer `l`
//! contributes its `n_in × n_out` weight matrix in column-major order
//! (element `(i, o)` at `o·n_in + i`), followed by its `n_out` biases.

use nalgebra::{DMatrix, DMatrixView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetaError;
use crate::spectral::{Spectrum, N_BANDS};

/// Hidden layer widths.
pub const HIDDEN: [usize; 2] = [64, 64];
/// Added to R_rs before the logarithm.
pub const RRS_OFFSET: f64 = 1e-5;
/// Number of outputs.
pub const N_OUT: usize = 3;

/// `log₁₀(R_rs + offset)` followed by a per-band z-score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputTransform {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputTransform {
    pub fn identity(n: usize) -> Self {
        Self { mean: vec![0.0; n], std: vec![1.0; n] }
    }

    /// Per-band statistics of the log-stabilized spectra.
    pub fn fit<'a>(spectra: impl IntoIterator<Item = &'a Spectrum>) -> Result<Self, MetaError> {
        let logs: Vec<Vec<f64>> = spectra.into_iter().map(|s| log_stabilize(s.values())).collect();
        if logs.is_empty() {
            return Err(MetaError::EmptyBatch);
        }
        let n = logs.len() as f64;
        let mean: Vec<f64> = (0..N_BANDS).map(|j| logs.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..N_BANDS)
            .map(|j| {
                let sd = (logs.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, rrs: &[f64]) -> Vec<f64> {
        log_stabilize(rrs).iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

fn log_stabilize(rrs: &[f64]) -> Vec<f64> {
    rrs.iter().map(|v| (v + RRS_OFFSET).log10()).collect()
}

/// Number of parameters of a network with the given layer sizes.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Network weights plus the fixed input transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// Layer widths including input and output, e.g. `[301, 64, 64, 3]`.
    pub sizes: Vec<usize>,
    pub theta: Vec<f64>,
    pub input: InputTransform,
}

/// Inputs already passed through the input transform, one row per sample,
/// and log₁₀ targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Batch {
        Batch { x: self.x.select_rows(rows), y: self.y.select_rows(rows) }
    }

    /// Column means of the targets.
    pub fn target_mean(&self) -> Vec<f64> {
        (0..self.y.ncols()).map(|j| self.y.column(j).mean()).collect()
    }
}

fn layer<'a>(sizes: &[usize], theta: &'a [f64], l: usize) -> (DMatrixView<'a, f64>, &'a [f64]) {
    let offset: usize = sizes[..l + 1].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let (n_in, n_out) = (sizes[l], sizes[l + 1]);
    let w = DMatrixView::from_slice(&theta[offset..offset + n_in * n_out], n_in, n_out);
    (w, &theta[offset + n_in * n_out..offset + n_in * n_out + n_out])
}

fn affine(a: &DMatrix<f64>, w: &DMatrixView<f64>, b: &[f64]) -> DMatrix<f64> {
    let mut z = a * w;
    for (j, bj) in b.iter().enumerate() {
        z.column_mut(j).add_scalar_mut(*bj);
    }
    z
}

/// Activations of every layer; the last entry is the linear output.
fn activations(sizes: &[usize], theta: &[f64], x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let n_layers = sizes.len() - 1;
    let mut acts = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let (w, b) = layer(sizes, theta, l);
        let input = if l == 0 { x } else { &acts[l - 1] };
        let mut z = affine(input, &w, b);
        if l + 1 < n_layers {
            z.apply(|v| *v = v.tanh());
        }
        acts.push(z);
    }
    acts
}

/// Outputs for a batch of transformed inputs.
pub fn forward_batch(sizes: &[usize], theta: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
    activations(sizes, theta, x).pop().expect("at least one layer")
}

/// Mean over samples of the squared error summed over outputs.
pub fn loss(sizes: &[usize], theta: &[f64], batch: &Batch) -> Result<f64, MetaError> {
    if batch.is_empty() {
        return Err(MetaError::EmptyBatch);
    }
    let out = forward_batch(sizes, theta, &batch.x);
    Ok((out - &batch.y).norm_squared() / batch.len() as f64)
}

/// Loss and its exact gradient with respect to `theta`.
pub fn loss_grad(sizes: &[usize], theta: &[f64], batch: &Batch) -> Result<(f64, Vec<f64>), MetaError> {
    if batch.is_empty() {
        return Err(MetaError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let acts = activations(sizes, theta, &batch.x);
    let n_layers = acts.len();
    let resid = &acts[n_layers - 1] - &batch.y;
    let loss = resid.norm_squared() / n;

    let mut grad = vec![0.0; theta.len()];
    let mut delta = resid * (2.0 / n);
    for l in (0..n_layers).rev() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let offset: usize = sizes[..l + 1].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let input = if l == 0 { &batch.x } else { &acts[l - 1] };
        let gw = input.tr_mul(&delta);
        grad[offset..offset + n_in * n_out].copy_from_slice(gw.as_slice());
        for j in 0..n_out {
            grad[offset + n_in * n_out + j] = delta.column(j).sum();
        }
        if l > 0 {
            let (w, _) = layer(sizes, theta, l);
            let mut back = &delta * w.transpose();
            back.zip_apply(&acts[l - 1], |d, a| *d *= 1.0 - a * a);
            delta = back;
        }
    }
    Ok((loss, grad))
}

impl MlpParams {
    /// Glorot-uniform weights; output biases start at `output_bias`, hidden
    /// biases at zero.
    pub fn init(input: InputTransform, output_bias: &[f64], seed: u64) -> Self {
        let sizes = vec![N_BANDS, HIDDEN[0], HIDDEN[1], N_OUT];
        Self::init_with_sizes(sizes, input, output_bias, seed)
    }

    pub fn init_with_sizes(sizes: Vec<usize>, input: InputTransform, output_bias: &[f64], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(param_count(&sizes));
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let s = (6.0 / (w[0] + w[1]) as f64).sqrt();
            theta.extend((0..w[0] * w[1]).map(|_| rng.random_range(-s..s)));
            if l == last {
                theta.extend((0..w[1]).map(|j| output_bias.get(j).copied().unwrap_or(0.0)));
            } else {
                theta.extend(std::iter::repeat_n(0.0, w[1]));
            }
        }
        Self { sizes, theta, input }
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        Self { sizes: self.sizes.clone(), theta, input: self.input.clone() }
    }

    pub fn validate(&self) -> Result<(), MetaError> {
        if self.sizes.len() < 2 || self.sizes[0] != self.input.mean.len() || self.input.std.len() != self.sizes[0] {
            return Err(MetaError::Config("layer sizes do not match the input transform".into()));
        }
        if self.theta.len() != param_count(&self.sizes) {
            return Err(MetaError::Dimension { expected: param_count(&self.sizes), got: self.theta.len() });
        }
        if self.theta.iter().chain(&self.input.mean).any(|v| !v.is_finite()) {
            return Err(MetaError::NonFinite { what: "model parameters".into() });
        }
        if self.input.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(MetaError::Config("input standard deviations must be positive".into()));
        }
        Ok(())
    }

    /// Transformed design matrix for a set of spectra.
    pub fn design<'a>(&self, spectra: impl IntoIterator<Item = &'a Spectrum>) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = spectra.into_iter().map(|s| self.input.apply(s.values())).collect();
        DMatrix::from_fn(rows.len(), self.sizes[0], |i, j| rows[i][j])
    }

    /// Batch of transformed inputs and log₁₀ targets.
    pub fn batch<'a>(&self, spectra: impl IntoIterator<Item = &'a Spectrum>, log_targets: &[[f64; 3]]) -> Batch {
        let x = self.design(spectra);
        assert_eq!(x.nrows(), log_targets.len(), "one target row per spectrum");
        let y = DMatrix::from_fn(log_targets.len(), N_OUT, |i, j| log_targets[i][j]);
        Batch { x, y }
    }

    /// log₁₀ outputs for one spectrum.
    pub fn forward(&self, rrs: &Spectrum) -> Result<[f64; 3], MetaError> {
        let out = forward_batch(&self.sizes, &self.theta, &self.design([rrs]));
        let v = [out[(0, 0)], out[(0, 1)], out[(0, 2)]];
        if v.iter().any(|x| !x.is_finite()) {
            return Err(MetaError::NonFinite { what: "network output".into() });
        }
        Ok(v)
    }

    /// log₁₀ outputs for many spectra, in input order.
    pub fn forward_many(&self, spectra: &[Spectrum]) -> Result<Vec<[f64; 3]>, MetaError> {
        let out = forward_batch(&self.sizes, &self.theta, &self.design(spectra));
        let rows: Vec<[f64; 3]> = (0..out.nrows()).map(|i| [out[(i, 0)], out[(i, 1)], out[(i, 2)]]).collect();
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(MetaError::NonFinite { what: "network output".into() });
        }
        Ok(rows)
    }

    /// Linear-space `[TSS, DOC, TChl-a]`.
    pub fn predict(&self, rrs: &Spectrum) -> Result<[f64; 3], MetaError> {
        Ok(self.forward(rrs)?.map(|v| 10f64.powf(v)))
    }

    pub fn loss(&self, batch: &Batch) -> Result<f64, MetaError> {
        loss(&self.sizes, &self.theta, batch)
    }

    pub fn loss_grad(&self, batch: &Batch) -> Result<(f64, Vec<f64>), MetaError> {
        loss_grad(&self.sizes, &self.theta, batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn random_batch(n: usize, n_in: usize, rng: &mut ChaCha8Rng) -> Batch {
        Batch {
            x: DMatrix::from_fn(n, n_in, |_, _| rng.sample(StandardNormal)),
            y: DMatrix::from_fn(n, N_OUT, |_, _| rng.sample(StandardNormal)),
        }
    }

    /// Relative error of the analytic gradient against central differences,
    /// `‖g − g_fd‖ / max(‖g‖, ‖g_fd‖)`.
    fn gradient_check(sizes: &[usize], theta: &[f64], batch: &Batch) -> f64 {
        let (_, g) = loss_grad(sizes, theta, batch).unwrap();
        let h = 1e-6;
        let mut t = theta.to_vec();
        let fd: Vec<f64> = (0..theta.len())
            .map(|i| {
                t[i] = theta[i] + h;
                let up = loss(sizes, &t, batch).unwrap();
                t[i] = theta[i] - h;
                let down = loss(sizes, &t, batch).unwrap();
                t[i] = theta[i];
                (up - down) / (2.0 * h)
            })
            .collect();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(fd.iter().map(|v| v * v).sum::<f64>().sqrt());
        diff / norm
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sizes = [7, 5, 4, 3];
        for trial in 0..5 {
            let theta: Vec<f64> = (0..param_count(&sizes)).map(|_| rng.random_range(-1.0..1.0)).collect();
            let batch = random_batch(6, 7, &mut rng);
            let err = gradient_check(&sizes, &theta, &batch);
            assert!(err < 1e-4, "trial {trial}: relative error {err}");
        }
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let input = InputTransform::identity(N_BANDS);
        let mut p = MlpParams::init(input, &[0.5, -1.0, 2.0], 0);
        let last_bias = p.theta.len() - 3;
        p.theta[..last_bias].iter_mut().for_each(|v| *v = 0.0);
        let out = p.forward(&Spectrum::constant(0.01)).unwrap();
        assert_eq!(out, [0.5, -1.0, 2.0]);
        assert_eq!(p.forward(&Spectrum::constant(0.01)).unwrap(), out);
    }

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sizes = [4, 3, 3, 3];
        let theta: Vec<f64> = (0..param_count(&sizes)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = DMatrix::from_fn(5, 4, |_, _| rng.sample(StandardNormal));
        let y = forward_batch(&sizes, &theta, &x);
        let (l, g) = loss_grad(&sizes, &theta, &Batch { x, y }).unwrap();
        assert!(l.abs() < 1e-30);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn loss_ignores_row_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sizes = [6, 4, 4, 3];
        let theta: Vec<f64> = (0..param_count(&sizes)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = random_batch(8, 6, &mut rng);
        let rev = b.select(&(0..8).rev().collect::<Vec<_>>());
        assert!((loss(&sizes, &theta, &b).unwrap() - loss(&sizes, &theta, &rev).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn empty_batch_rejected() {
        let sizes = [2, 2, 2, 3];
        let theta = vec![0.0; param_count(&sizes)];
        let b = Batch { x: DMatrix::zeros(0, 2), y: DMatrix::zeros(0, 3) };
        assert!(matches!(loss_grad(&sizes, &theta, &b), Err(MetaError::EmptyBatch)));
    }

    #[test]
    fn input_transform_and_validation() {
        let spectra = [Spectrum::constant(0.01), Spectrum::constant(0.02)];
        let t = InputTransform::fit(&spectra).unwrap();
        let z = t.apply(spectra[0].values());
        assert!(z.iter().all(|v| (v + 1.0).abs() < 1e-12));
        let p = MlpParams::init(t, &[0.0; 3], 1);
        p.validate().unwrap();
        assert_eq!(p.theta.len(), 301 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3);
        let mut bad = p.clone();
        bad.theta[3] = f64::NAN;
        assert!(bad.validate().is_err());
        for s in &spectra {
            assert!(p.forward(s).unwrap().iter().all(|v| v.is_finite()));
        }
    }
}
