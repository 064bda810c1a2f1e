//! Pólya-Gamma augmented Gaussian-process classification.
//!
//! The pipeline: exact PG(1, c) draws ([`pg`]), kernels and Cholesky
//! hygiene ([`kernel`]), blocked Gibbs sampling of latent values and
//! auxiliaries ([`gibbs`]), hyperparameter ascent on the augmented marginal
//! likelihood ([`training`]), quadrature-based predictive probabilities
//! ([`prediction`]) and calibration / ranking metrics ([`metrics`]).

pub mod baseline;
pub mod dataio;
pub mod error;
pub mod gibbs;
pub mod kernel;
pub mod metrics;
pub mod pg;
pub mod prediction;
pub mod rng;
pub mod selftest;
pub mod training;

pub use dataio::{EmbeddingDataset, Record, SynthSpec};
pub use error::{Error, Result};
pub use gibbs::{GibbsChainState, GibbsConfig};
pub use kernel::{KernelFamily, KernelSpec, PsdMatrix};
pub use metrics::{CalibrationReport, MetricsSummary, ScoredItem};
pub use pg::PgDraw;
pub use prediction::{PredictiveResult, Predictor, QuadratureRule};
pub use rng::RngStream;
pub use training::{FittedModel, TrainConfig, Trainable};
