//! Dirichlet-process Gaussian mixture fitted by truncated variational Bayes.
//!
//! Stick-breaking weights with a Beta(1, γ) prior, truncated at `C_max`
//! (the last stick is fixed to 1), and a Gaussian-Wishart prior on each
//! component's mean and precision. Data are z-scored per dimension before
//! fitting; the model stores the standardization so sampling returns values
//! in the original feature units.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::SynthError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpGmmConfig {
    /// Truncation level `C_max`.
    pub max_components: usize,
    /// Stick-breaking concentration γ; `None` means `1 / max_components`.
    pub concentration: Option<f64>,
    /// β₀ of the Gaussian-Wishart prior.
    pub mean_precision_prior: f64,
    /// ν₀; `None` means the data dimension.
    pub dof_prior: Option<f64>,
    /// Diagonal jitter added to the prior scale matrix and, when needed, to
    /// component covariances.
    pub jitter: f64,
    pub max_iter: usize,
    /// Convergence threshold on the per-sample ELBO change.
    pub tol: f64,
    /// Components lighter than this are dropped after convergence.
    pub prune_threshold: f64,
    /// Lloyd iterations after k-means++ seeding.
    pub kmeans_iter: usize,
    /// Sizes of the k-means partitions the fit is restarted from; the
    /// truncation level is always included.
    pub init_clusters: Vec<usize>,
    pub seed: u64,
}

impl Default for DpGmmConfig {
    fn default() -> Self {
        Self {
            max_components: 30,
            concentration: None,
            mean_precision_prior: 1.0,
            dof_prior: None,
            jitter: 1e-6,
            max_iter: 500,
            tol: 1e-5,
            prune_threshold: 1e-3,
            kmeans_iter: 20,
            init_clusters: vec![1, 2, 3, 5, 8, 12, 20],
            seed: 0,
        }
    }
}

/// One mixture component in standardized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major `D × D`.
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub components: Vec<GmmComponent>,
    /// Per-dimension mean removed before fitting.
    pub shift: Vec<f64>,
    /// Per-dimension standard deviation divided out before fitting.
    pub scale: Vec<f64>,
    pub max_components: usize,
}

/// Result of a fit, with the ELBO after every iteration.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    pub elbo: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn cholesky_with_jitter(m: &DMatrix<f64>, jitter: f64) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let mut eps = jitter * scale;
    for _ in 0..8 {
        let mut j = m.clone();
        for i in 0..j.nrows() {
            j[(i, i)] += eps;
        }
        if let Some(c) = Cholesky::new(j) {
            return Some(c);
        }
        eps *= 10.0;
    }
    None
}

fn ln_det_from_chol(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// Component mean in original feature units.
    pub fn mean_original(&self, i: usize) -> Vec<f64> {
        let c = &self.components[i];
        c.mean.iter().zip(&self.shift).zip(&self.scale).map(|((m, s), k)| s + k * m).collect()
    }

    /// Component covariance in original feature units.
    pub fn covariance_original(&self, i: usize) -> Vec<Vec<f64>> {
        let c = &self.components[i];
        c.covariance
            .iter()
            .enumerate()
            .map(|(r, row)| row.iter().enumerate().map(|(q, v)| v * self.scale[r] * self.scale[q]).collect())
            .collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let d = self.dim();
        if self.scale.len() != d || self.components.is_empty() {
            return Err(SynthError::InvalidModel("empty model or mismatched standardization".into()));
        }
        if self.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(SynthError::InvalidModel("standardization scale must be positive".into()));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 || self.components.iter().any(|c| !(c.weight >= 0.0)) {
            return Err(SynthError::InvalidModel(format!("weights sum to {total}")));
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.mean.len() != d || c.covariance.len() != d || c.covariance.iter().any(|r| r.len() != d) {
                return Err(SynthError::Dimension { expected: d, got: c.mean.len() });
            }
            if Cholesky::new(to_matrix(&c.covariance)).is_none() {
                return Err(SynthError::NotPositiveDefinite { component: i });
            }
        }
        Ok(())
    }

    /// Ancestral sampling: a component by weight, then a Gaussian draw via the
    /// Cholesky factor. Record `k` uses its own RNG stream, so the result does
    /// not depend on the thread count.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, SynthError> {
        self.validate()?;
        let factors: Vec<DMatrix<f64>> = self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                cholesky_with_jitter(&to_matrix(&c.covariance), 1e-12)
                    .map(|ch| ch.l())
                    .ok_or(SynthError::NotPositiveDefinite { component: i })
            })
            .collect::<Result<_, _>>()?;
        let cumulative: Vec<f64> = self
            .components
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c.weight;
                Some(*acc)
            })
            .collect();
        let d = self.dim();
        Ok((0..count)
            .into_par_iter()
            .map(|k| {
                let mut rng = record_rng(seed, k as u64);
                let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
                let i = cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1);
                let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = &factors[i] * z;
                (0..d).map(|j| self.shift[j] + self.scale[j] * (self.components[i].mean[j] + x[j])).collect()
            })
            .collect())
    }
}

/// Draws `count` feature vectors from the mixture.
pub fn sample_features(model: &GmmModel, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, SynthError> {
    model.sample(count, seed)
}

/// Independent RNG stream for record `k` under `seed`.
pub fn record_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Hard labels from k-means++ seeding followed by Lloyd iterations.
fn kmeans_labels(x: &DMatrix<f64>, k: usize, iters: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.ncols();
    let dist2 = |a: usize, c: &DVector<f64>| (x.column(a) - c).norm_squared();
    let mut centres: Vec<DVector<f64>> = vec![x.column(rng.random_range(0..n)).into_owned()];
    let mut best: Vec<f64> = (0..n).map(|i| dist2(i, &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, b) in best.iter().enumerate() {
                if u < *b {
                    pick = i;
                    break;
                }
                u -= b;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = x.column(next).into_owned();
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(dist2(i, &c));
        }
        centres.push(c);
    }
    let assign = |centres: &[DVector<f64>]| -> Vec<usize> {
        (0..n)
            .map(|i| {
                (0..centres.len())
                    .min_by(|&a, &b| dist2(i, &centres[a]).total_cmp(&dist2(i, &centres[b])))
                    .unwrap()
            })
            .collect()
    };
    let mut labels = assign(&centres);
    for _ in 0..iters {
        let mut sums = vec![DVector::zeros(x.nrows()); k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            sums[l] += x.column(i);
            counts[l] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centres[j] = &sums[j] / counts[j] as f64;
            }
        }
        let next = assign(&centres);
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

/// ln B(W, ν) of the Wishart normaliser, given ln|W|.
fn ln_wishart_norm(ln_det_w: f64, nu: f64, d: usize) -> f64 {
    let df = d as f64;
    let mut s = nu * df / 2.0 * std::f64::consts::LN_2 + df * (df - 1.0) / 4.0 * std::f64::consts::PI.ln();
    for i in 1..=d {
        s += ln_gamma((nu + 1.0 - i as f64) / 2.0);
    }
    -nu / 2.0 * ln_det_w - s
}

struct Posterior {
    a: Vec<f64>,
    b: Vec<f64>,
    beta: Vec<f64>,
    m: Vec<DVector<f64>>,
    nu: Vec<f64>,
    w_inv: Vec<DMatrix<f64>>,
    chol: Vec<Cholesky<f64, Dyn>>,
}

/// Prior and data shared by every initialization.
struct Problem {
    x: DMatrix<f64>,
    k: usize,
    gamma: f64,
    beta0: f64,
    nu0: f64,
    m0: DVector<f64>,
    w0_inv: DMatrix<f64>,
    /// Cholesky factor of `w0_inv`.
    c0: DMatrix<f64>,
    ln_b0: f64,
    jitter: f64,
}

struct Run {
    post: Posterior,
    elbo: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl Run {
    fn final_elbo(&self) -> f64 {
        *self.elbo.last().unwrap()
    }
}

impl Problem {
    fn m_step(&self, r: &[f64]) -> Result<Posterior, SynthError> {
        let (d, n, k) = (self.x.nrows(), self.x.ncols(), self.k);
        let nk: Vec<f64> = (0..k).map(|c| (0..n).map(|i| r[i * k + c]).sum::<f64>() + 10.0 * f64::EPSILON).collect();
        let comps: Vec<(f64, DVector<f64>, f64, DMatrix<f64>, Cholesky<f64, Dyn>)> = (0..k)
            .into_par_iter()
            .map(|c| {
                let mut xbar = DVector::zeros(d);
                for i in 0..n {
                    xbar.axpy(r[i * k + c], &self.x.column(i), 1.0);
                }
                xbar /= nk[c];
                let mut s = DMatrix::zeros(d, d);
                for i in 0..n {
                    let w = r[i * k + c];
                    if w > 0.0 {
                        let dx = self.x.column(i) - &xbar;
                        s.ger(w, &dx, &dx, 1.0);
                    }
                }
                let beta = self.beta0 + nk[c];
                let m = (&self.m0 * self.beta0 + &xbar * nk[c]) / beta;
                let dm = &xbar - &self.m0;
                let mut w_inv = &self.w0_inv + s;
                w_inv.ger(self.beta0 * nk[c] / beta, &dm, &dm, 1.0);
                w_inv = (&w_inv + w_inv.transpose()) * 0.5;
                let chol =
                    cholesky_with_jitter(&w_inv, self.jitter).ok_or(SynthError::NotPositiveDefinite { component: c })?;
                Ok((beta, m, self.nu0 + nk[c], w_inv, chol))
            })
            .collect::<Result<_, SynthError>>()?;
        let mut a = vec![1.0; k];
        let mut b = vec![self.gamma; k];
        let mut tail = 0.0;
        for c in (0..k).rev() {
            a[c] = 1.0 + nk[c];
            b[c] = self.gamma + tail;
            tail += nk[c];
        }
        let mut p = Posterior { a, b, beta: vec![], m: vec![], nu: vec![], w_inv: vec![], chol: vec![] };
        for (beta, m, nu, w_inv, chol) in comps {
            p.beta.push(beta);
            p.m.push(m);
            p.nu.push(nu);
            p.w_inv.push(w_inv);
            p.chol.push(chol);
        }
        Ok(p)
    }

    /// Unnormalized log responsibilities (one column per component) and the
    /// ELBO of `(r, post)`.
    fn evaluate(&self, r: &[f64], post: &Posterior) -> (Vec<Vec<f64>>, f64) {
        let (d, n, k) = (self.x.nrows(), self.x.ncols(), self.k);
        let df = d as f64;
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let mut e_ln_pi = vec![0.0; k];
        let mut acc = 0.0;
        for c in 0..k {
            if c + 1 < k {
                let s = digamma(post.a[c] + post.b[c]);
                e_ln_pi[c] = digamma(post.a[c]) - s + acc;
                acc += digamma(post.b[c]) - s;
            } else {
                e_ln_pi[c] = acc;
            }
        }
        let ln_det_w: Vec<f64> = post.chol.iter().map(|ch| -ln_det_from_chol(ch)).collect();
        let e_ln_lambda: Vec<f64> = (0..k)
            .map(|c| {
                (1..=d).map(|i| digamma((post.nu[c] + 1.0 - i as f64) / 2.0)).sum::<f64>()
                    + df * std::f64::consts::LN_2
                    + ln_det_w[c]
            })
            .collect();
        let ln_rho: Vec<Vec<f64>> = (0..k)
            .into_par_iter()
            .map(|c| {
                let diff = &self.x - &post.m[c] * DMatrix::from_element(1, n, 1.0);
                let y = post.chol[c].l_dirty().solve_lower_triangular(&diff).expect("non-singular factor");
                let base = e_ln_pi[c] + 0.5 * e_ln_lambda[c] - 0.5 * df * ln_2pi - 0.5 * df / post.beta[c];
                y.column_iter().map(|col| base - 0.5 * post.nu[c] * col.norm_squared()).collect()
            })
            .collect();

        let mut elbo = 0.0;
        for i in 0..n {
            for c in 0..k {
                let ri = r[i * k + c];
                if ri > 0.0 {
                    elbo += ri * (ln_rho[c][i] - ri.ln());
                }
            }
        }
        let gamma = self.gamma;
        for c in 0..k.saturating_sub(1) {
            let (ac, bc) = (post.a[c], post.b[c]);
            let s = digamma(ac + bc);
            let e_ln_v = digamma(ac) - s;
            let e_ln_1v = digamma(bc) - s;
            elbo += gamma.ln() + (gamma - 1.0) * e_ln_1v;
            elbo -= ln_gamma(ac + bc) - ln_gamma(ac) - ln_gamma(bc) + (ac - 1.0) * e_ln_v + (bc - 1.0) * e_ln_1v;
        }
        for c in 0..k {
            let l = post.chol[c].l_dirty();
            let dm = &post.m[c] - &self.m0;
            let q0 = l.solve_lower_triangular(&dm).expect("non-singular factor").norm_squared();
            let tr = l.solve_lower_triangular(&self.c0).expect("non-singular factor").norm_squared();
            let (bk, nu) = (post.beta[c], post.nu[c]);
            elbo += df / 2.0 * (self.beta0 / bk).ln() - df * self.beta0 / (2.0 * bk) + df / 2.0
                - self.beta0 * nu / 2.0 * q0
                + self.ln_b0
                - ln_wishart_norm(ln_det_w[c], nu, d)
                + (self.nu0 - nu) / 2.0 * e_ln_lambda[c]
                - 0.5 * nu * tr
                + nu * df / 2.0;
        }
        (ln_rho, elbo)
    }

    /// Coordinate ascent from hard initial labels.
    fn run(&self, labels: &[usize], config: &DpGmmConfig) -> Result<Run, SynthError> {
        let (n, k) = (self.x.ncols(), self.k);
        let mut r = vec![0.0; n * k];
        for (i, &l) in labels.iter().enumerate() {
            r[i * k + l] = 1.0;
        }
        let mut elbo_trace: Vec<f64> = Vec::new();
        let mut iterations = 0;
        loop {
            iterations += 1;
            let post = self.m_step(&r)?;
            let (ln_rho, elbo) = self.evaluate(&r, &post);
            if !elbo.is_finite() {
                return Err(SynthError::NonFinite("ELBO"));
            }
            let prev = elbo_trace.last().copied();
            elbo_trace.push(elbo);
            let converged = prev.is_some_and(|p| ((elbo - p) / n as f64).abs() < config.tol);
            if converged || iterations >= config.max_iter {
                return Ok(Run { post, elbo: elbo_trace, iterations, converged });
            }
            for i in 0..n {
                let row = &mut r[i * k..(i + 1) * k];
                let mx = (0..k).map(|c| ln_rho[c][i]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (c, v) in row.iter_mut().enumerate() {
                    *v = (ln_rho[c][i] - mx).exp();
                    z += *v;
                }
                row.iter_mut().for_each(|v| *v /= z);
            }
        }
    }
}

/// Fits the mixture to `data` (one row per sample).
///
/// Coordinate ascent started from a fine hard partition tends to stall with
/// many small components, so the fit is restarted from k-means partitions of
/// several sizes (`init_clusters`) and the run with the highest final ELBO
/// is kept.
pub fn fit_dpgmm(data: &[Vec<f64>], config: &DpGmmConfig) -> Result<GmmFit, SynthError> {
    let n = data.len();
    let d = data.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(SynthError::TooFewSamples { needed: 1, got: 0 });
    }
    if let Some(bad) = data.iter().find(|r| r.len() != d) {
        return Err(SynthError::Dimension { expected: d, got: bad.len() });
    }
    if n < d {
        return Err(SynthError::TooFewSamples { needed: d, got: n });
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SynthError::NonFinite("feature matrix"));
    }

    // z-score
    let nf = n as f64;
    let shift: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let sd = (data.iter().map(|r| (r[j] - shift[j]).powi(2)).sum::<f64>() / nf).sqrt();
            // Columns that are constant up to round-off (e.g. trailing PC
            // scores of a rank-deficient SIOP family) are left unscaled.
            if sd > 1e-9 * shift[j].abs().max(1.0) {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let x = DMatrix::from_fn(d, n, |j, i| (data[i][j] - shift[j]) / scale[j]);

    let k = config.max_components.min(n).max(1);
    let nu0 = config.dof_prior.unwrap_or(d as f64);
    let m0 = DVector::from_fn(d, |j, _| x.row(j).sum() / nf);
    let centred = &x - &m0 * DMatrix::from_element(1, n, 1.0);
    let mut w0_inv = &centred * centred.transpose() / (nf - 1.0).max(1.0);
    for j in 0..d {
        w0_inv[(j, j)] += config.jitter;
    }
    let w0_chol =
        cholesky_with_jitter(&w0_inv, config.jitter).ok_or(SynthError::NotPositiveDefinite { component: 0 })?;
    let problem = Problem {
        k,
        gamma: config.concentration.unwrap_or(1.0 / config.max_components as f64),
        beta0: config.mean_precision_prior,
        nu0,
        m0,
        w0_inv: w0_chol.l() * w0_chol.l().transpose(),
        c0: w0_chol.l(),
        ln_b0: ln_wishart_norm(-ln_det_from_chol(&w0_chol), nu0, d),
        jitter: config.jitter,
        x,
    };

    let mut inits: Vec<usize> = config.init_clusters.iter().map(|&c| c.clamp(1, k)).collect();
    inits.push(k);
    inits.sort_unstable();
    inits.dedup();
    let mut best: Option<Run> = None;
    for (j, &clusters) in inits.iter().enumerate() {
        let mut rng = record_rng(config.seed, j as u64);
        let labels = kmeans_labels(&problem.x, clusters, config.kmeans_iter, &mut rng);
        let run = problem.run(&labels, config)?;
        log::debug!(
            "mixture init {clusters:>2} clusters: ELBO {:.3} after {} iterations",
            run.final_elbo(),
            run.iterations
        );
        if best.as_ref().is_none_or(|b| run.final_elbo() > b.final_elbo()) {
            best = Some(run);
        }
    }
    let Run { post, elbo, iterations, converged } = best.expect("at least one initialization");

    // Expected stick-breaking weights.
    let mut weights = vec![0.0; k];
    let mut remaining = 1.0;
    for c in 0..k {
        let v = if c + 1 < k { post.a[c] / (post.a[c] + post.b[c]) } else { 1.0 };
        weights[c] = remaining * v;
        remaining *= 1.0 - v;
    }
    let mut components = Vec::new();
    for c in 0..k {
        if weights[c] < config.prune_threshold {
            continue;
        }
        let cov = &post.w_inv[c] / post.nu[c];
        let cov = (&cov + cov.transpose()) * 0.5;
        let chol = cholesky_with_jitter(&cov, config.jitter).ok_or(SynthError::NotPositiveDefinite { component: c })?;
        components.push(GmmComponent {
            weight: weights[c],
            mean: post.m[c].iter().copied().collect(),
            covariance: from_matrix(&(chol.l() * chol.l().transpose())),
        });
    }
    if components.is_empty() {
        return Err(SynthError::InvalidModel("every component fell below the pruning threshold".into()));
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    components.iter_mut().for_each(|c| c.weight /= total);
    let model = GmmModel { components, shift, scale, max_components: config.max_components };
    Ok(GmmFit { model, elbo, iterations, converged })
}
