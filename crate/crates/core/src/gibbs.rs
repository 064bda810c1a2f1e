//! Blocked Gibbs sampling over latent values `g` and Pólya-Gamma auxiliaries `w`.
//!
//! Given `w`, the latent conditional is Gaussian:
//!
//! ```text
//! g | y, w ~ N(S kappa, S),   S = (K^-1 + diag(w))^-1,   kappa = y - 1/2
//! ```
//!
//! and given `g`, each `w_i ~ PG(1, g_i)` independently. Neither `K^-1` nor
//! `S` is ever formed. The latent draw uses the pathwise identity
//!
//! ```text
//! g = f + K (K + W^-1)^-1 (W^-1 kappa - f - e),  f ~ N(0, K), e ~ N(0, W^-1)
//! ```
//!
//! which has exactly the conditional's mean `K (K + W^-1)^-1 W^-1 kappa` and
//! covariance `K - K (K + W^-1)^-1 K`, and only needs the stored factor of
//! `K` plus one factorization of the well-conditioned `K + W^-1`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{factorize, gram_matrix, mvn_sample, KernelSpec, PsdMatrix};
use crate::pg::sample_pg1;
use crate::rng::RngStream;

/// `w` entries are floored here before inversion.
pub const W_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsChainState {
    pub g: Vec<f64>,
    pub w: Vec<f64>,
    pub step: usize,
}

impl GibbsChainState {
    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// Every `w` positive and every `g` finite, with matching lengths.
    pub fn is_valid(&self) -> bool {
        self.g.len() == self.w.len()
            && self.g.iter().all(|g| g.is_finite())
            && self.w.iter().all(|&w| w > 0.0 && w.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsConfig {
    #[serde(default = "default_chains")]
    pub n_chains: usize,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_chains() -> usize {
    30
}
fn default_steps() -> usize {
    10
}

impl Default for GibbsConfig {
    /// 30 chains of 10 steps.
    fn default() -> Self {
        Self {
            n_chains: default_chains(),
            n_steps: default_steps(),
            seed: 0,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::invalid("n_chains must be at least 1"));
        }
        Ok(())
    }
}

/// How independent chains are scheduled. Results are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

pub(crate) fn kappa(labels: &[u8]) -> Result<DVector<f64>> {
    labels
        .iter()
        .map(|&y| match y {
            0 => Ok(-0.5),
            1 => Ok(0.5),
            other => Err(Error::invalid(format!(
                "labels must be 0 or 1, got {other}"
            ))),
        })
        .collect::<Result<Vec<_>>>()
        .map(DVector::from_vec)
}

/// Resample every `w_i ~ PG(1, g_i)`. `g` is untouched.
pub fn step_w(state: &mut GibbsChainState, rng: &mut RngStream) -> Result<()> {
    for (w, &g) in state.w.iter_mut().zip(&state.g) {
        *w = sample_pg1(g, rng)?.value();
    }
    Ok(())
}

/// Resample `g` from its Gaussian conditional given `w`. `w` is untouched.
pub fn step_g(
    state: &mut GibbsChainState,
    labels: &[u8],
    kernel: &PsdMatrix,
    rng: &mut RngStream,
) -> Result<()> {
    let n = state.len();
    if labels.len() != n || kernel.dim() != n {
        return Err(Error::invalid(format!(
            "state has {n} entries, labels {} and kernel {}",
            labels.len(),
            kernel.dim()
        )));
    }
    let kap = kappa(labels)?;
    let w_inv = DVector::from_iterator(n, state.w.iter().map(|&w| 1.0 / w.max(W_FLOOR)));

    let prior = mvn_sample(&DVector::zeros(n), kernel, rng)?;
    let noise = DVector::from_iterator(
        n,
        w_inv.iter().map(|&v| {
            let z: f64 = StandardNormal.sample(rng);
            z * v.sqrt()
        }),
    );
    let pseudo = kap.component_mul(&w_inv);

    let b = shifted_kernel(kernel.matrix(), &w_inv)?;
    let residual = pseudo - &prior - noise;
    let g = prior + kernel.matrix() * b.solve(&residual);
    state.g = g.iter().copied().collect();
    Ok(())
}

/// Factor of `K + diag(w_inv)`.
pub(crate) fn shifted_kernel(k: &DMatrix<f64>, w_inv: &DVector<f64>) -> Result<PsdMatrix> {
    let mut b = k.clone();
    for (i, v) in w_inv.iter().enumerate() {
        b[(i, i)] += v;
    }
    factorize(&b, 0.0)
}

/// Mean and covariance of `g | y, w`, computed as
/// `S = K - K (K + W^-1)^-1 K` and `mean = K (K + W^-1)^-1 W^-1 kappa`.
pub fn g_conditional(
    w: &[f64],
    labels: &[u8],
    kernel: &PsdMatrix,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = w.len();
    if labels.len() != n || kernel.dim() != n {
        return Err(Error::invalid("w, labels and kernel disagree in size"));
    }
    let kap = kappa(labels)?;
    let w_inv = DVector::from_iterator(n, w.iter().map(|&v| 1.0 / v.max(W_FLOOR)));
    let k = kernel.matrix();
    let b = shifted_kernel(k, &w_inv)?;
    let mean = k * b.solve(&kap.component_mul(&w_inv));
    let v = b.solve_lower_matrix(k);
    let mut cov = k - v.transpose() * v;
    cov = (&cov + cov.transpose()) * 0.5;
    Ok((mean, cov))
}

/// Prior initialization: `w ~ PG(1, 0)` elementwise, `g ~ N(0, K)`.
pub fn init_state(kernel: &PsdMatrix, rng: &mut RngStream) -> Result<GibbsChainState> {
    let n = kernel.dim();
    let w = (0..n)
        .map(|_| sample_pg1(0.0, rng).map(|d| d.value()))
        .collect::<Result<Vec<_>>>()?;
    let g = mvn_sample(&DVector::zeros(n), kernel, rng)?;
    Ok(GibbsChainState {
        g: g.iter().copied().collect(),
        w,
        step: 0,
    })
}

/// One full sweep: `w` first, then `g`.
pub fn sweep(
    state: &mut GibbsChainState,
    labels: &[u8],
    kernel: &PsdMatrix,
    rng: &mut RngStream,
) -> Result<()> {
    step_w(state, rng)?;
    step_g(state, labels, kernel, rng)?;
    state.step += 1;
    Ok(())
}

fn run_one_chain(
    kernel: &PsdMatrix,
    labels: &[u8],
    n_steps: usize,
    mut rng: RngStream,
) -> Result<GibbsChainState> {
    let mut state = init_state(kernel, &mut rng)?;
    for _ in 0..n_steps {
        sweep(&mut state, labels, kernel, &mut rng)?;
    }
    Ok(state)
}

/// Run `cfg.n_chains` independent chains on a factored kernel. Chain `i`
/// draws from the named stream `"{stream_prefix}/{i}"` under `cfg.seed`.
pub fn run_chains_on_kernel(
    kernel: &PsdMatrix,
    labels: &[u8],
    cfg: &GibbsConfig,
    stream_prefix: &str,
    execution: Execution,
) -> Result<Vec<GibbsChainState>> {
    cfg.validate()?;
    if labels.len() != kernel.dim() {
        return Err(Error::invalid(format!(
            "{} labels for a {}-point kernel",
            labels.len(),
            kernel.dim()
        )));
    }
    kappa(labels)?;
    let stream = |i: usize| RngStream::named(cfg.seed, &format!("{stream_prefix}/{i}"));
    match execution {
        Execution::Parallel => (0..cfg.n_chains)
            .into_par_iter()
            .map(|i| run_one_chain(kernel, labels, cfg.n_steps, stream(i)))
            .collect(),
        Execution::Sequential => (0..cfg.n_chains)
            .map(|i| run_one_chain(kernel, labels, cfg.n_steps, stream(i)))
            .collect(),
    }
}

/// Build the kernel on `features` and run the configured chains.
pub fn run_chains<P: AsRef<[f64]> + Sync>(
    features: &[P],
    labels: &[u8],
    spec: &KernelSpec,
    cfg: &GibbsConfig,
) -> Result<Vec<GibbsChainState>> {
    run_chains_with(features, labels, spec, cfg, Execution::Parallel)
}

pub fn run_chains_with<P: AsRef<[f64]> + Sync>(
    features: &[P],
    labels: &[u8],
    spec: &KernelSpec,
    cfg: &GibbsConfig,
    execution: Execution,
) -> Result<Vec<GibbsChainState>> {
    if features.is_empty() {
        return Err(Error::invalid("need at least one training point"));
    }
    let kernel = factorize(&gram_matrix(features, spec)?, 0.0)?;
    run_chains_on_kernel(&kernel, labels, cfg, "chains", execution)
}

/// Settings for the long-run diagnostic mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LongRunConfig {
    pub burn_in: usize,
    pub n_steps: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for LongRunConfig {
    fn default() -> Self {
        Self {
            burn_in: 1_000,
            n_steps: 50_000,
            thin: 10,
            seed: 0,
        }
    }
}

/// Retained latent draws from a single long chain, with the Gaussian
/// conditional moments of `g | w` at each retained step.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub samples: Vec<Vec<f64>>,
    pub conditional_means: Vec<Vec<f64>>,
    pub conditional_variances: Vec<Vec<f64>>,
}

impl PosteriorSamples {
    /// Rao-Blackwellized posterior mean: average of `E[g | w]`.
    pub fn rb_mean(&self) -> Vec<f64> {
        column_means(&self.conditional_means)
    }

    /// Rao-Blackwellized posterior variance: `E[Var(g | w)] + Var(E[g | w])`.
    pub fn rb_variance(&self) -> Vec<f64> {
        let within = column_means(&self.conditional_variances);
        let centre = self.rb_mean();
        let n = self.conditional_means.len() as f64;
        within
            .iter()
            .zip(&centre)
            .enumerate()
            .map(|(j, (w, m))| {
                w + self
                    .conditional_means
                    .iter()
                    .map(|s| (s[j] - m).powi(2))
                    .sum::<f64>()
                    / (n - 1.0)
            })
            .collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.samples.len() as f64;
        let d = self.samples.first().map_or(0, Vec::len);
        (0..d)
            .map(|j| self.samples.iter().map(|s| s[j]).sum::<f64>() / n)
            .collect()
    }

    /// Per-coordinate sample variance.
    pub fn variance(&self) -> Vec<f64> {
        let n = self.samples.len() as f64;
        self.mean()
            .iter()
            .enumerate()
            .map(|(j, m)| self.samples.iter().map(|s| (s[j] - m).powi(2)).sum::<f64>() / (n - 1.0))
            .collect()
    }
}

/// Run one chain for `burn_in + n_steps` sweeps, keeping every `thin`-th
/// latent vector after burn-in.
pub fn long_run<P: AsRef<[f64]>>(
    features: &[P],
    labels: &[u8],
    spec: &KernelSpec,
    cfg: &LongRunConfig,
) -> Result<PosteriorSamples> {
    if features.is_empty() {
        return Err(Error::invalid("need at least one training point"));
    }
    if cfg.thin == 0 {
        return Err(Error::invalid("thin must be at least 1"));
    }
    let kernel = factorize(&gram_matrix(features, spec)?, 0.0)?;
    if labels.len() != kernel.dim() {
        return Err(Error::invalid("labels and features disagree in size"));
    }
    let mut rng = RngStream::named(cfg.seed, "long-run");
    let mut state = init_state(&kernel, &mut rng)?;
    for _ in 0..cfg.burn_in {
        sweep(&mut state, labels, &kernel, &mut rng)?;
    }
    let cap = cfg.n_steps / cfg.thin + 1;
    let mut samples = Vec::with_capacity(cap);
    let mut conditional_means = Vec::with_capacity(cap);
    let mut conditional_variances = Vec::with_capacity(cap);
    for t in 1..=cfg.n_steps {
        sweep(&mut state, labels, &kernel, &mut rng)?;
        if t % cfg.thin == 0 {
            let (mean, cov) = g_conditional(&state.w, labels, &kernel)?;
            samples.push(state.g.clone());
            conditional_means.push(mean.iter().copied().collect());
            conditional_variances.push(cov.diagonal().iter().copied().collect());
        }
    }
    Ok(PosteriorSamples {
        samples,
        conditional_means,
        conditional_variances,
    })
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let d = rows.first().map_or(0, Vec::len);
    (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect()
}
