use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use pggp_core::dataio::{generate_synthetic, load_dataset, load_model, save_dataset, save_model};
use pggp_core::metrics::{evaluate, reliability_export, DEFAULT_BINS};
use pggp_core::selftest::{run_pg_selftest, run_selftest, SelftestConfig};
use pggp_core::training::fit_with_observer;
use pggp_core::{Predictor, QuadratureRule, ScoredItem, SynthSpec};
use serde::Serialize;

use crate::config::{resolve_train_config, RunConfig, TrainOverrides};
use crate::{EvalArgs, PgSelftestArgs, SelftestArgs, SynthArgs, TrainArgs};

/// Missing or contradictory arguments; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn required(flag: Option<PathBuf>, from_config: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or(from_config)
        .ok_or_else(|| UsageError(format!("--{name} is required (flag or config)")).into())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn synth(a: SynthArgs) -> Result<ExitCode> {
    let generator = a.generator.into();
    let spec = SynthSpec {
        generator,
        n: a.n,
        d: a.dim,
        noise: a.noise.unwrap_or_else(|| generator.default_noise()),
        seed: a.seed,
    };
    let data = generate_synthetic(&spec)?;
    save_dataset(&data, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    print_json(&serde_json::json!({
        "out": a.out,
        "n_records": data.len(),
        "dim": data.dim(),
        "n_positive": data.n_positive(),
    }))?;
    Ok(ExitCode::SUCCESS)
}

pub fn train(a: TrainArgs) -> Result<ExitCode> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let flags = TrainOverrides {
        seed: a.seed,
        kernel: a.kernel.map(Into::into),
        length_scale: a.length_scale,
        output_scale: a.output_scale,
        jitter: a.jitter,
        n_chains: a.n_chains,
        n_steps: a.n_steps,
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        batch_size: a.batch_size,
        trainable: a.trainable.map(Into::into),
        reference_size: a.reference_size,
    };
    let data_path = required(a.data, cfg.data.train.clone(), "data")?;
    let out_path = required(a.out, cfg.output.model.clone(), "out")?;
    let log_path = a.log.or(cfg.output.log.clone());
    let train_cfg = match resolve_train_config(&cfg, &flags) {
        Ok(c) => c,
        Err(e) if cfg.seed.is_none() && flags.seed.is_none() => {
            return Err(UsageError(e.to_string()).into())
        }
        Err(e) => return Err(e),
    };

    let data =
        load_dataset(&data_path).with_context(|| format!("loading {}", data_path.display()))?;
    eprintln!(
        "training on {} records (dim {}), {} chains x {} steps",
        data.len(),
        data.dim(),
        train_cfg.gibbs.n_chains,
        train_cfg.gibbs.n_steps
    );
    let mut log = match &log_path {
        Some(p) => Some(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => None,
    };
    let mut log_error = None;
    let mut n_batches = 0usize;
    let mut last_epoch = usize::MAX;
    let started = Instant::now();
    let model = fit_with_observer(&data, &train_cfg, |rec| {
        n_batches += 1;
        if rec.epoch != last_epoch {
            last_epoch = rec.epoch;
            eprintln!("epoch {}", rec.epoch);
        }
        if let Some(w) = log.as_mut() {
            let res = serde_json::to_writer(&mut *w, rec)
                .map_err(anyhow::Error::from)
                .and_then(|_| writeln!(w).map_err(Into::into));
            if let Err(e) = res {
                log_error.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_error {
        return Err(e.context("writing training log"));
    }
    if let Some(mut w) = log {
        w.flush()?;
    }
    save_model(&model, &out_path).with_context(|| format!("writing {}", out_path.display()))?;
    eprintln!("done in {:.1}s", started.elapsed().as_secs_f64());
    print_json(&serde_json::json!({
        "model": out_path,
        "n_reference": model.reference_features.len(),
        "n_chains": model.n_chains(),
        "batches": n_batches,
        "kernel": model.kernel,
    }))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    id: &'a str,
    group_id: &'a str,
    label: u8,
    mu_star: f64,
    sigma_star: f64,
    probability: f64,
}

pub fn eval(a: EvalArgs) -> Result<ExitCode> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let model_path = required(a.model, cfg.output.model.clone(), "model")?;
    let data_path = required(a.data, cfg.data.eval.clone(), "data")?;
    let n_bins = a.n_bins.or(cfg.eval.n_bins).unwrap_or(DEFAULT_BINS);
    let restrict = a.restrict_rank1 || cfg.eval.restrict_rank1.unwrap_or(false);
    let rule = match a.quadrature_nodes.or(cfg.eval.quadrature_nodes) {
        Some(n) => QuadratureRule::gauss_hermite(n)?,
        None => QuadratureRule::default(),
    };

    let model =
        load_model(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let data =
        load_dataset(&data_path).with_context(|| format!("loading {}", data_path.display()))?;
    if data.dim() != model.dim() {
        return Err(pggp_core::Error::Schema {
            line: None,
            message: format!(
                "dataset has dimension {}, model expects {}",
                data.dim(),
                model.dim()
            ),
        }
        .into());
    }
    eprintln!(
        "scoring {} records with {} chains",
        data.len(),
        model.n_chains()
    );
    let predictor = Predictor::with_rule(&model, rule)?;
    let preds = predictor.predict_batch(&data.features())?;

    let items = data
        .records()
        .iter()
        .zip(&preds)
        .map(|(r, p)| ScoredItem::new(r.group_id.clone(), p.probability, r.label))
        .collect::<pggp_core::Result<Vec<_>>>()?;
    let (summary, report) = evaluate(&items, n_bins, restrict)?;

    if let Some(p) = a.predictions_out.or(cfg.output.predictions.clone()) {
        let mut w =
            BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?);
        for (r, pr) in data.records().iter().zip(&preds) {
            serde_json::to_writer(
                &mut w,
                &PredictionLine {
                    id: &r.id,
                    group_id: &r.group_id,
                    label: r.label,
                    mu_star: pr.mu_star,
                    sigma_star: pr.sigma_star,
                    probability: pr.probability,
                },
            )?;
            writeln!(w)?;
        }
        w.flush()?;
    }
    if let Some(p) = a.reliability_out.or(cfg.output.reliability.clone()) {
        reliability_export(&report, &p).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = a.metrics_out.or(cfg.output.metrics.clone()) {
        write_json(&summary, &p)?;
    }
    print_json(&summary)?;
    Ok(ExitCode::SUCCESS)
}

fn selftest_config(seed: Option<u64>, quick: bool, pg_bias: f64) -> SelftestConfig {
    let mut cfg = SelftestConfig {
        quick,
        pg_bias,
        ..SelftestConfig::default()
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg
}

pub fn pg_selftest(a: PgSelftestArgs) -> Result<ExitCode> {
    let report = run_pg_selftest(&selftest_config(a.seed, true, 0.0))?;
    print_json(&report)?;
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

pub fn selftest(a: SelftestArgs) -> Result<ExitCode> {
    let cfg = selftest_config(a.seed, a.quick, a.inject_pg_bias);
    let started = Instant::now();
    let report = run_selftest(&cfg)?;
    for c in &report.checks {
        eprintln!("{} {}", if c.passed { "ok  " } else { "FAIL" }, c.name);
    }
    eprintln!(
        "selftest finished in {:.1}s",
        started.elapsed().as_secs_f64()
    );
    print_json(&report)?;
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
