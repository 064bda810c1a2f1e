//! Latent GP predictive distribution and calibrated class probabilities.
//!
//! For one stored chain with auxiliaries `w`, the latent value at a query is
//! Gaussian with
//!
//! ```text
//! mu*    = k*^T (K + W^-1)^-1 W^-1 kappa
//! Sigma* = k** - k*^T (K + W^-1)^-1 k*
//! ```
//!
//! and the class probability is `E[sigmoid(g*)]` under that Gaussian,
//! evaluated by Gauss-Hermite quadrature. A model's prediction averages the
//! per-chain probabilities.

mod quadrature;

pub use quadrature::{QuadratureRule, DEFAULT_NODES};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{kappa, shifted_kernel, W_FLOOR};
use crate::kernel::{gram_matrix, kernel_vector, KernelSpec, PsdMatrix};
use crate::training::FittedModel;

/// Smallest latent variance reported.
pub const MIN_LATENT_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveResult {
    pub mu_star: f64,
    pub sigma_star: f64,
    pub probability: f64,
}

/// `E[sigmoid(g)]`, `g ~ N(mu_star, sigma_star)`.
pub fn predictive_prob(mu_star: f64, sigma_star: f64, rule: &QuadratureRule) -> Result<f64> {
    if !(sigma_star.is_finite() && sigma_star > 0.0 && mu_star.is_finite()) {
        return Err(Error::invalid(format!(
            "need finite mean and positive variance, got ({mu_star}, {sigma_star})"
        )));
    }
    Ok(rule.expected_sigmoid(mu_star, sigma_star))
}

/// Per-chain solve against `K + W^-1`, reused across queries.
#[derive(Debug, Clone)]
struct ChainSolve {
    factor: PsdMatrix,
    weights: DVector<f64>,
}

impl ChainSolve {
    fn new(reference_gram: &nalgebra::DMatrix<f64>, kap: &DVector<f64>, w: &[f64]) -> Result<Self> {
        let w_inv = DVector::from_iterator(w.len(), w.iter().map(|&v| 1.0 / v.max(W_FLOOR)));
        let factor = shifted_kernel(reference_gram, &w_inv)?;
        let weights = factor.solve(&kap.component_mul(&w_inv));
        Ok(Self { factor, weights })
    }

    fn latent(&self, k_star: &DVector<f64>, k_star_star: f64) -> (f64, f64) {
        let mu = k_star.dot(&self.weights);
        let v = self.factor.solve_lower(k_star);
        let var = (k_star_star - v.norm_squared()).max(MIN_LATENT_VARIANCE);
        (mu, var)
    }
}

fn check_w(model: &FittedModel, w: &[f64]) -> Result<()> {
    if w.len() != model.reference_features.len() {
        return Err(Error::invalid(format!(
            "w has length {}, reference set has {} points",
            w.len(),
            model.reference_features.len()
        )));
    }
    Ok(())
}

fn check_query(model: &FittedModel, x_star: &[f64]) -> Result<()> {
    if x_star.len() != model.dim() {
        return Err(Error::schema(
            None,
            format!(
                "query has dimension {}, model expects {}",
                x_star.len(),
                model.dim()
            ),
        ));
    }
    Ok(())
}

/// Latent predictive `(mu*, Sigma*)` at `x_star` for a single `w` vector.
pub fn latent_predictive(model: &FittedModel, w: &[f64], x_star: &[f64]) -> Result<(f64, f64)> {
    check_w(model, w)?;
    check_query(model, x_star)?;
    let gram = gram_matrix(&model.reference_features, &model.kernel)?;
    let solve = ChainSolve::new(&gram, &kappa(&model.reference_labels)?, w)?;
    let k_star = kernel_vector(&model.reference_features, x_star, &model.kernel)?;
    Ok(solve.latent(&k_star, model.kernel.self_covariance(x_star)))
}

/// Chain-averaged prediction for one query. Factorizes every chain; use a
/// [`Predictor`] for more than a handful of queries.
pub fn predict(model: &FittedModel, x_star: &[f64]) -> Result<PredictiveResult> {
    Predictor::new(model)?.predict(x_star)
}

/// A fitted model with every chain's `K + W^-1` factored once.
#[derive(Debug, Clone)]
pub struct Predictor<'a> {
    reference: &'a [Vec<f64>],
    kernel: KernelSpec,
    chains: Vec<ChainSolve>,
    rule: QuadratureRule,
}

impl<'a> Predictor<'a> {
    pub fn new(model: &'a FittedModel) -> Result<Self> {
        Self::with_rule(model, QuadratureRule::default())
    }

    pub fn with_rule(model: &'a FittedModel, rule: QuadratureRule) -> Result<Self> {
        model.validate()?;
        let gram = gram_matrix(&model.reference_features, &model.kernel)?;
        let kap = kappa(&model.reference_labels)?;
        let chains = model
            .reference_w
            .par_iter()
            .map(|w| ChainSolve::new(&gram, &kap, w))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            reference: &model.reference_features,
            kernel: model.kernel,
            chains,
            rule,
        })
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// `(mu*, Sigma*, probability)` for every chain.
    pub fn per_chain(&self, x_star: &[f64]) -> Result<Vec<PredictiveResult>> {
        let dim = self.reference.first().map_or(0, Vec::len);
        if x_star.len() != dim {
            return Err(Error::schema(
                None,
                format!("query has dimension {}, model expects {dim}", x_star.len()),
            ));
        }
        let k_star = kernel_vector(self.reference, x_star, &self.kernel)?;
        let k_ss = self.kernel.self_covariance(x_star);
        self.chains
            .iter()
            .map(|c| {
                let (mu, var) = c.latent(&k_star, k_ss);
                Ok(PredictiveResult {
                    mu_star: mu,
                    sigma_star: var,
                    probability: predictive_prob(mu, var, &self.rule)?,
                })
            })
            .collect()
    }

    /// Mean probability over chains; `sigma_star` is the mixture variance
    /// (mean chain variance plus variance of chain means).
    pub fn predict(&self, x_star: &[f64]) -> Result<PredictiveResult> {
        let per = self.per_chain(x_star)?;
        let n = per.len() as f64;
        let mu = per.iter().map(|r| r.mu_star).sum::<f64>() / n;
        let mean_var = per.iter().map(|r| r.sigma_star).sum::<f64>() / n;
        let spread = per.iter().map(|r| (r.mu_star - mu).powi(2)).sum::<f64>() / n;
        let probability = per.iter().map(|r| r.probability).sum::<f64>() / n;
        Ok(PredictiveResult {
            mu_star: mu,
            sigma_star: mean_var + spread,
            probability: probability.clamp(0.0, 1.0),
        })
    }

    pub fn predict_batch<P: AsRef<[f64]> + Sync>(
        &self,
        queries: &[P],
    ) -> Result<Vec<PredictiveResult>> {
        queries
            .par_iter()
            .map(|q| self.predict(q.as_ref()))
            .collect()
    }
}
