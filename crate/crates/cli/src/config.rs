//! JSON run configuration. Flags given on the command line override it.
//!
//! Relative paths inside a config file resolve against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pggp_core::gibbs::GibbsConfig;
use pggp_core::kernel::KernelSpec;
use pggp_core::training::{TrainConfig, Trainable};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub kernel: Option<KernelSpec>,
    pub gibbs: Option<GibbsSection>,
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsSection {
    pub n_chains: Option<usize>,
    pub n_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub trainable: Option<Trainable>,
    pub reference_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub eval: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub model: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub reliability: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub n_bins: Option<usize>,
    pub restrict_rank1: Option<bool>,
    pub quadrature_nodes: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.data.train,
            &mut cfg.data.eval,
            &mut cfg.output.model,
            &mut cfg.output.log,
            &mut cfg.output.metrics,
            &mut cfg.output.reliability,
            &mut cfg.output.predictions,
        ] {
            if let Some(rel) = p.as_ref().filter(|p| p.is_relative()) {
                *p = Some(base.join(rel));
            }
        }
        Ok(cfg)
    }
}

/// Flag overrides for training, all optional.
#[derive(Debug, Default, Clone)]
pub struct TrainOverrides {
    pub seed: Option<u64>,
    pub kernel: Option<pggp_core::KernelFamily>,
    pub length_scale: Option<f64>,
    pub output_scale: Option<f64>,
    pub jitter: Option<f64>,
    pub n_chains: Option<usize>,
    pub n_steps: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub trainable: Option<Trainable>,
    pub reference_size: Option<usize>,
}

/// Merge defaults, config file and flags (flags win) into a training config.
pub fn resolve_train_config(cfg: &RunConfig, flags: &TrainOverrides) -> Result<TrainConfig> {
    let Some(seed) = flags.seed.or(cfg.seed) else {
        bail!("a seed is required (--seed or \"seed\" in the config)");
    };
    let defaults = TrainConfig::default();
    let base_kernel = cfg.kernel.unwrap_or(defaults.kernel);
    let family = flags.kernel.unwrap_or(base_kernel.family());
    let length_scale = flags.length_scale.unwrap_or(base_kernel.length_scale());
    let output_scale = flags.output_scale.unwrap_or(base_kernel.output_scale());
    let mut kernel = KernelSpec::new(family, length_scale, output_scale)?;
    // keep an explicit jitter; otherwise the default tracks the output scale
    let explicit_jitter = flags.jitter.or_else(|| {
        cfg.kernel
            .filter(|k| {
                (k.jitter() - pggp_core::kernel::DEFAULT_RELATIVE_JITTER * k.output_scale().powi(2))
                    .abs()
                    > f64::EPSILON * k.jitter().max(1e-300)
            })
            .map(|k| k.jitter())
    });
    if let Some(j) = explicit_jitter {
        kernel = kernel.with_jitter(j)?;
    }

    let gibbs_section = cfg.gibbs.as_ref();
    let gibbs = GibbsConfig {
        n_chains: flags
            .n_chains
            .or(gibbs_section.and_then(|g| g.n_chains))
            .unwrap_or(defaults.gibbs.n_chains),
        n_steps: flags
            .n_steps
            .or(gibbs_section.and_then(|g| g.n_steps))
            .unwrap_or(defaults.gibbs.n_steps),
        seed,
    };
    let t = cfg.train.as_ref();
    let train = TrainConfig {
        kernel,
        learning_rate: flags
            .learning_rate
            .or(t.and_then(|t| t.learning_rate))
            .unwrap_or(defaults.learning_rate),
        epochs: flags
            .epochs
            .or(t.and_then(|t| t.epochs))
            .unwrap_or(defaults.epochs),
        batch_size: flags
            .batch_size
            .or(t.and_then(|t| t.batch_size))
            .unwrap_or(defaults.batch_size),
        gibbs,
        trainable: flags
            .trainable
            .or(t.and_then(|t| t.trainable))
            .unwrap_or(defaults.trainable),
        reference_size: flags
            .reference_size
            .or(t.and_then(|t| t.reference_size))
            .unwrap_or(defaults.reference_size),
    };
    train.validate()?;
    Ok(train)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_apply_when_config_is_silent() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 3}"#).unwrap();
        let t = resolve_train_config(&cfg, &TrainOverrides::default()).unwrap();
        assert_eq!(t.kernel.length_scale(), 1.0);
        assert_eq!(t.kernel.output_scale(), 8.0);
        assert_eq!(t.gibbs.n_chains, 30);
        assert_eq!(t.gibbs.n_steps, 10);
        assert_eq!(t.gibbs.seed, 3);
        assert_eq!(t.batch_size, 16);
        assert_eq!(t.learning_rate, 3e-3);
    }

    #[test]
    fn flags_win_over_config() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"seed": 3, "kernel": {"length_scale": 2.0}, "train": {"epochs": 4}}"#,
        )
        .unwrap();
        let flags = TrainOverrides {
            seed: Some(9),
            epochs: Some(2),
            ..Default::default()
        };
        let t = resolve_train_config(&cfg, &flags).unwrap();
        assert_eq!(t.gibbs.seed, 9);
        assert_eq!(t.epochs, 2);
        assert_eq!(t.kernel.length_scale(), 2.0);
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(resolve_train_config(&RunConfig::default(), &TrainOverrides::default()).is_err());
    }

    #[test]
    fn explicit_jitter_survives_scale_override() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"seed": 1, "kernel": {"jitter": 0.0}}"#).unwrap();
        let flags = TrainOverrides {
            output_scale: Some(2.0),
            ..Default::default()
        };
        let t = resolve_train_config(&cfg, &flags).unwrap();
        assert_eq!(t.kernel.jitter(), 0.0);
        let t =
            resolve_train_config(&serde_json::from_str(r#"{"seed": 1}"#).unwrap(), &flags).unwrap();
        assert!((t.kernel.jitter() - 4e-6).abs() < 1e-18);
    }
}
