//! Kernel hyperparameter learning from Gibbs posterior samples.
//!
//! With `w` fixed, integrating the latent GP out of the augmented likelihood
//! leaves a Gaussian in the pseudo-observations `z = kappa / w`:
//!
//! ```text
//! log p(y | x, w) = log N(z | 0, K + W^-1) + const(w)
//! ```
//!
//! By Fisher's identity the marginal-likelihood gradient is the posterior
//! expectation of this quantity's gradient, estimated by averaging over the
//! final `w` of each Gibbs chain. Parameters live in log space.

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::dataio::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::gibbs::{self, kappa, run_chains_on_kernel, Execution, GibbsConfig, W_FLOOR};
use crate::kernel::{factorize, gram_matrix, gram_with_grads, KernelSpec, PsdMatrix};
use crate::rng::RngStream;

/// Version written into every serialized [`FittedModel`].
pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainable {
    /// Ascend on `(ln l, ln s)`.
    KernelParams,
    /// Keep the kernel fixed.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub gibbs: GibbsConfig,
    #[serde(default = "default_trainable")]
    pub trainable: Trainable,
    /// Maximum number of training points kept for prediction.
    #[serde(default = "default_reference_size")]
    pub reference_size: usize,
}

fn default_learning_rate() -> f64 {
    3e-3
}
fn default_epochs() -> usize {
    1
}
fn default_batch_size() -> usize {
    16
}
fn default_trainable() -> Trainable {
    Trainable::None
}
fn default_reference_size() -> usize {
    512
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            gibbs: GibbsConfig::default(),
            trainable: default_trainable(),
            reference_size: default_reference_size(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be at least 2"));
        }
        if self.reference_size == 0 {
            return Err(Error::invalid("reference_size must be at least 1"));
        }
        self.gibbs.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config: TrainConfig,
}

/// Everything prediction needs: the kernel, the conditioning points and one
/// stored `w` vector per Gibbs chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub format_version: u64,
    pub kernel: KernelSpec,
    pub reference_features: Vec<Vec<f64>>,
    pub reference_labels: Vec<u8>,
    pub reference_w: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl FittedModel {
    pub fn dim(&self) -> usize {
        self.reference_features.first().map_or(0, Vec::len)
    }

    pub fn n_chains(&self) -> usize {
        self.reference_w.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.reference_features.len();
        if m == 0 {
            return Err(Error::schema(None, "model has an empty reference set"));
        }
        let d = self.dim();
        if self.reference_features.iter().any(|x| x.len() != d) {
            return Err(Error::schema(
                None,
                "reference features have mixed dimensions",
            ));
        }
        if self.reference_labels.len() != m {
            return Err(Error::schema(
                None,
                "reference labels do not match features",
            ));
        }
        if self.reference_labels.iter().any(|&y| y > 1) {
            return Err(Error::schema(None, "reference labels must be 0 or 1"));
        }
        if self.reference_w.is_empty() {
            return Err(Error::schema(None, "model stores no w samples"));
        }
        for w in &self.reference_w {
            if w.len() != m {
                return Err(Error::schema(None, "stored w has the wrong length"));
            }
            if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::schema(None, "stored w entries must be positive"));
            }
        }
        Ok(())
    }
}

/// Gradient with respect to `(ln l, ln s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogParamGradient {
    pub d_log_length_scale: f64,
    pub d_log_output_scale: f64,
}

impl LogParamGradient {
    pub fn as_array(&self) -> [f64; 2] {
        [self.d_log_length_scale, self.d_log_output_scale]
    }
}

fn check_sizes(n_features: usize, labels: &[u8], w: &[f64]) -> Result<()> {
    if labels.len() != n_features || w.len() != n_features {
        return Err(Error::invalid(format!(
            "{n_features} features, {} labels, {} w entries",
            labels.len(),
            w.len()
        )));
    }
    if w.iter().any(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::invalid("w entries must be positive"));
    }
    Ok(())
}

/// `K + W^-1` factor and the pseudo-observations `z = kappa / w`.
fn pseudo_system(k: &DMatrix<f64>, labels: &[u8], w: &[f64]) -> Result<(PsdMatrix, DVector<f64>)> {
    let w_inv = DVector::from_iterator(w.len(), w.iter().map(|&v| 1.0 / v.max(W_FLOOR)));
    let z = kappa(labels)?.component_mul(&w_inv);
    Ok((gibbs::shifted_kernel(k, &w_inv)?, z))
}

fn gaussian_log_density(a: &PsdMatrix, z: &DVector<f64>) -> f64 {
    let v = a.solve_lower(z);
    -0.5 * v.norm_squared()
        - 0.5 * a.log_det()
        - 0.5 * z.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// `log N(z | 0, K + W^-1)`, the hyperparameter-dependent part of the
/// augmented marginal likelihood.
pub fn conditional_log_marginal<P: AsRef<[f64]>>(
    features: &[P],
    labels: &[u8],
    w: &[f64],
    spec: &KernelSpec,
) -> Result<f64> {
    check_sizes(features.len(), labels, w)?;
    let k = gram_matrix(features, spec)?;
    let (a, z) = pseudo_system(&k, labels, w)?;
    Ok(gaussian_log_density(&a, &z))
}

/// `(1/N) sum_n grad log N(z_n | 0, K + W_n^-1)` with analytic kernel derivatives.
pub fn grad_log_marginal<P: AsRef<[f64]>>(
    features: &[P],
    labels: &[u8],
    w_samples: &[Vec<f64>],
    spec: &KernelSpec,
) -> Result<LogParamGradient> {
    let (k, dl, ds) = gram_with_grads(features, spec)?;
    grad_from_gram(&k, &dl, &ds, labels, w_samples)
}

fn grad_from_gram(
    k: &DMatrix<f64>,
    dl: &DMatrix<f64>,
    ds: &DMatrix<f64>,
    labels: &[u8],
    w_samples: &[Vec<f64>],
) -> Result<LogParamGradient> {
    if w_samples.is_empty() {
        return Err(Error::invalid("need at least one w sample"));
    }
    let mut acc = [0.0; 2];
    for w in w_samples {
        check_sizes(k.nrows(), labels, w)?;
        let (a, z) = pseudo_system(k, labels, w)?;
        let alpha = a.solve(&z);
        let a_inv = a.inverse();
        for (slot, dk) in acc.iter_mut().zip([dl, ds]) {
            let quad = alpha.dot(&(dk * &alpha));
            let trace = a_inv.component_mul(dk).sum();
            *slot += 0.5 * (quad - trace);
        }
    }
    let n = w_samples.len() as f64;
    Ok(LogParamGradient {
        d_log_length_scale: acc[0] / n,
        d_log_output_scale: acc[1] / n,
    })
}

/// Per-batch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub epoch: usize,
    pub batch: usize,
    pub batch_size: usize,
    /// Chain-averaged conditional log marginal before the update.
    pub log_marginal: f64,
    pub d_log_length_scale: f64,
    pub d_log_output_scale: f64,
    /// Hyperparameters after the update.
    pub length_scale: f64,
    pub output_scale: f64,
}

/// Fit with default (silent) logging.
pub fn fit(dataset: &EmbeddingDataset, cfg: &TrainConfig) -> Result<FittedModel> {
    fit_with_observer(dataset, cfg, |_| {})
}

/// Run the training loop, calling `observe` after every batch.
pub fn fit_with_observer(
    dataset: &EmbeddingDataset,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&BatchRecord),
) -> Result<FittedModel> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let labels = dataset.labels();
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::invalid("training data must contain both labels"));
    }
    let features = dataset.features();
    let seed = cfg.gibbs.seed;
    let mut spec = cfg.kernel;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut RngStream::named(
            seed,
            &format!("train/shuffle/{epoch}"),
        ));
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xb: Vec<&[f64]> = idx.iter().map(|&i| features[i]).collect();
            let yb: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();

            let (k, dl, ds) = gram_with_grads(&xb, &spec)?;
            let prior = factorize(&k, 0.0)?;
            let chains = run_chains_on_kernel(
                &prior,
                &yb,
                &cfg.gibbs,
                &format!("train/chains/{epoch}/{batch}"),
                Execution::Parallel,
            )?;
            let ws: Vec<Vec<f64>> = chains.into_iter().map(|s| s.w).collect();

            let mut log_marginal = 0.0;
            for w in &ws {
                let (a, z) = pseudo_system(prior.matrix(), &yb, w)?;
                log_marginal += gaussian_log_density(&a, &z);
            }
            log_marginal /= ws.len() as f64;

            let grad = grad_from_gram(prior.matrix(), &dl, &ds, &yb, &ws)?;
            if cfg.trainable == Trainable::KernelParams {
                let theta = spec.log_params();
                let step = grad.as_array();
                spec = spec.with_log_params([
                    theta[0] + cfg.learning_rate * step[0],
                    theta[1] + cfg.learning_rate * step[1],
                ])?;
            }
            observe(&BatchRecord {
                epoch,
                batch,
                batch_size: idx.len(),
                log_marginal,
                d_log_length_scale: grad.d_log_length_scale,
                d_log_output_scale: grad.d_log_output_scale,
                length_scale: spec.length_scale(),
                output_scale: spec.output_scale(),
            });
        }
    }

    let reference = reference_indices(dataset.len(), cfg.reference_size, seed);
    let reference_features: Vec<Vec<f64>> =
        reference.iter().map(|&i| features[i].to_vec()).collect();
    let reference_labels: Vec<u8> = reference.iter().map(|&i| labels[i]).collect();
    let reference_w = posterior_w(&reference_features, &reference_labels, &spec, &cfg.gibbs)?;

    Ok(FittedModel {
        format_version: MODEL_FORMAT_VERSION,
        kernel: spec,
        reference_features,
        reference_labels,
        reference_w,
        provenance: Provenance { seed, config: *cfg },
    })
}

/// Sorted indices of up to `m` training points, uniformly subsampled.
fn reference_indices(n: usize, m: usize, seed: u64) -> Vec<usize> {
    if n <= m {
        return (0..n).collect();
    }
    let mut rng = RngStream::named(seed, "reference-subsample");
    let mut idx = index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    idx
}

/// Final `w` of each chain after an N x T Gibbs pass on `(features, labels)`.
pub fn posterior_w<P: AsRef<[f64]> + Sync>(
    features: &[P],
    labels: &[u8],
    spec: &KernelSpec,
    gibbs: &GibbsConfig,
) -> Result<Vec<Vec<f64>>> {
    let prior = factorize(&gram_matrix(features, spec)?, 0.0)?;
    let chains = run_chains_on_kernel(
        &prior,
        labels,
        gibbs,
        "reference/chains",
        Execution::Parallel,
    )?;
    Ok(chains.into_iter().map(|s| s.w).collect())
}
