use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EmbeddingDataset, Record};
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Two Gaussian clusters with means 4 units apart along the first axis;
    /// `noise` is the cluster standard deviation.
    Blobs,
    /// Interleaved half circles with isotropic Gaussian `noise`.
    TwoMoons,
    /// `n` groups of ten candidates, one positive each.
    RankingGroups,
}

impl Generator {
    /// Noise used when the caller does not choose one.
    pub fn default_noise(self) -> f64 {
        match self {
            Generator::Blobs => 1.0,
            Generator::TwoMoons | Generator::RankingGroups => 0.2,
        }
    }
}

/// For `blobs` and `two_moons`, `n` is the record count; for
/// `ranking_groups` it is the number of groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub generator: Generator,
    pub n: usize,
    pub d: usize,
    pub noise: f64,
    pub seed: u64,
}

pub const GROUP_SIZE: usize = 10;
const BLOB_SEPARATION: f64 = 4.0;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n must be at least 2"));
        }
        if self.d < 1 {
            return Err(Error::invalid("d must be at least 1"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::invalid("noise must be non-negative"));
        }
        if matches!(
            self.generator,
            Generator::TwoMoons | Generator::RankingGroups
        ) && self.d < 2
        {
            return Err(Error::invalid(format!("{:?} needs d >= 2", self.generator)));
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<EmbeddingDataset> {
    spec.validate()?;
    let mut rng = RngStream::named(spec.seed, "synth");
    let records = match spec.generator {
        Generator::Blobs => blobs(spec, &mut rng),
        Generator::TwoMoons => two_moons(spec, &mut rng),
        Generator::RankingGroups => ranking_groups(spec, &mut rng),
    };
    EmbeddingDataset::new(records)
}

fn gaussian(rng: &mut RngStream, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sd * z
}

fn shuffled_records(
    mut points: Vec<(Vec<f64>, u8)>,
    prefix: &str,
    rng: &mut RngStream,
) -> Vec<Record> {
    points.shuffle(rng);
    points
        .into_iter()
        .enumerate()
        .map(|(i, (embedding, label))| Record {
            id: format!("{prefix}-{i:06}"),
            group_id: prefix.to_string(),
            label,
            embedding,
        })
        .collect()
}

fn blobs(spec: &SynthSpec, rng: &mut RngStream) -> Vec<Record> {
    let half = BLOB_SEPARATION / 2.0;
    let points = (0..spec.n)
        .map(|i| {
            let label = (i % 2) as u8;
            let centre = if label == 1 { half } else { -half };
            let x = (0..spec.d)
                .map(|j| {
                    let mu = if j == 0 { centre } else { 0.0 };
                    mu + gaussian(rng, spec.noise)
                })
                .collect();
            (x, label)
        })
        .collect();
    shuffled_records(points, "blobs", rng)
}

fn two_moons(spec: &SynthSpec, rng: &mut RngStream) -> Vec<Record> {
    let n_outer = spec.n / 2;
    let n_inner = spec.n - n_outer;
    let angle = |i: usize, count: usize| {
        if count > 1 {
            PI * i as f64 / (count - 1) as f64
        } else {
            0.0
        }
    };
    let mut points = Vec::with_capacity(spec.n);
    for i in 0..n_outer {
        let t = angle(i, n_outer);
        points.push((vec![t.cos(), t.sin()], 0u8));
    }
    for i in 0..n_inner {
        let t = angle(i, n_inner);
        points.push((vec![1.0 - t.cos(), 1.0 - t.sin() - 0.5], 1u8));
    }
    for (x, _) in points.iter_mut() {
        for v in x.iter_mut() {
            *v += gaussian(rng, spec.noise);
        }
        for _ in 2..spec.d {
            x.push(gaussian(rng, spec.noise));
        }
    }
    shuffled_records(points, "moons", rng)
}

/// Each candidate embedding is `[context, response]`. The positive's response
/// half sits within `noise` of the context anchor; negatives pair the anchor
/// with an unrelated standard-normal response.
fn ranking_groups(spec: &SynthSpec, rng: &mut RngStream) -> Vec<Record> {
    let half = spec.d / 2;
    let extra = spec.d - 2 * half;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut records = Vec::with_capacity(spec.n * GROUP_SIZE);
    for g in 0..spec.n {
        let anchor: Vec<f64> = (0..half).map(|_| unit.sample(rng)).collect();
        let positive_slot = rng.random_range(0..GROUP_SIZE);
        for slot in 0..GROUP_SIZE {
            let label = u8::from(slot == positive_slot);
            let mut x = anchor.clone();
            if label == 1 {
                x.extend(anchor.iter().map(|a| a + gaussian(rng, spec.noise)));
            } else {
                x.extend((0..half).map(|_| unit.sample(rng)));
            }
            x.extend((0..extra).map(|_| unit.sample(rng)));
            records.push(Record {
                id: format!("q{g:05}-c{slot}"),
                group_id: format!("q{g:05}"),
                label,
                embedding: x,
            });
        }
    }
    records
}
