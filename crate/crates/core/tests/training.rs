use pggp_core::dataio::{generate_synthetic, Generator};
use pggp_core::training::{conditional_log_marginal, fit, fit_with_observer, posterior_w};
use pggp_core::{
    EmbeddingDataset, GibbsConfig, KernelSpec, Predictor, SynthSpec, TrainConfig, Trainable,
};

fn blobs(seed: u64) -> EmbeddingDataset {
    generate_synthetic(&SynthSpec {
        generator: Generator::Blobs,
        n: 200,
        d: 2,
        noise: 1.0,
        seed,
    })
    .unwrap()
}

fn config(seed: u64) -> TrainConfig {
    TrainConfig {
        gibbs: GibbsConfig {
            seed,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn mean_log_marginal(data: &EmbeddingDataset, spec: &KernelSpec, seed: u64) -> f64 {
    let gibbs = GibbsConfig {
        seed,
        ..Default::default()
    };
    let ws = posterior_w(&data.features(), &data.labels(), spec, &gibbs).unwrap();
    ws.iter()
        .map(|w| conditional_log_marginal(&data.features(), &data.labels(), w, spec).unwrap())
        .sum::<f64>()
        / ws.len() as f64
}

#[test]
fn frozen_kernel_fits_blobs() {
    let data = blobs(17);
    let cfg = config(17);
    assert_eq!(cfg.trainable, Trainable::None);
    let model = fit(&data, &cfg).unwrap();
    assert_eq!(model.kernel, cfg.kernel);
    let preds = Predictor::new(&model)
        .unwrap()
        .predict_batch(&data.features())
        .unwrap();
    let correct = preds
        .iter()
        .zip(data.labels())
        .filter(|(p, y)| u8::from(p.probability >= 0.5) == *y)
        .count();
    let acc = correct as f64 / data.len() as f64;
    assert!(acc >= 0.95, "training accuracy {acc}");
}

#[test]
fn kernel_learning_does_not_lower_log_marginal() {
    let data = blobs(5);
    let cfg = TrainConfig {
        trainable: Trainable::KernelParams,
        epochs: 3,
        ..config(5)
    };
    let model = fit(&data, &cfg).unwrap();
    assert_ne!(model.kernel, cfg.kernel);
    let before = mean_log_marginal(&data, &cfg.kernel, 99);
    let after = mean_log_marginal(&data, &model.kernel, 99);
    assert!(after >= before, "before {before}, after {after}");
}

#[test]
fn fit_is_bit_deterministic() {
    let data = blobs(3);
    let cfg = TrainConfig {
        trainable: Trainable::KernelParams,
        ..config(3)
    };
    let mut log_a = Vec::new();
    let mut log_b = Vec::new();
    let a = fit_with_observer(&data, &cfg, |r| log_a.push(r.clone())).unwrap();
    let b = fit_with_observer(&data, &cfg, |r| log_b.push(r.clone())).unwrap();
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
    assert_eq!(log_a.len(), 200usize.div_ceil(cfg.batch_size));
}

#[test]
fn reference_set_is_capped() {
    let data = blobs(8);
    let cfg = TrainConfig {
        reference_size: 50,
        gibbs: GibbsConfig {
            n_chains: 4,
            n_steps: 3,
            seed: 8,
        },
        ..Default::default()
    };
    let model = fit(&data, &cfg).unwrap();
    assert_eq!(model.reference_features.len(), 50);
    assert_eq!(model.n_chains(), 4);
    assert!(model.reference_w.iter().all(|w| w.len() == 50));
}

#[test]
fn rejects_single_class_data() {
    let data = blobs(1);
    let ones: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == 1).collect();
    let single = data.select(&ones).unwrap();
    assert!(fit(&single, &config(1)).is_err());
}
