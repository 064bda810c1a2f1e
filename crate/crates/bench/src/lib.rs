//! Shared fixtures for the benchmarks.

use pggp_core::dataio::{generate_synthetic, Generator};
use pggp_core::training::fit;
use pggp_core::{EmbeddingDataset, FittedModel, GibbsConfig, SynthSpec, TrainConfig};

pub fn moons(n: usize, seed: u64) -> EmbeddingDataset {
    generate_synthetic(&SynthSpec {
        generator: Generator::TwoMoons,
        n,
        d: 2,
        noise: 0.2,
        seed,
    })
    .expect("valid synthetic spec")
}

/// Model with the default 30 chains fit on `n` two-moons points.
pub fn fitted(n: usize) -> FittedModel {
    let cfg = TrainConfig {
        gibbs: GibbsConfig {
            seed: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    fit(&moons(n, 1), &cfg).expect("fit")
}
