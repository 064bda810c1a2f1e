//! Runtime diagnostics: sampler moments, the augmentation identity, gradient
//! checks and a long-run Gibbs comparison against grid quadrature.

use serde::Serialize;
use serde_json::json;

use crate::error::Result;
use crate::gibbs::{long_run, LongRunConfig};
use crate::kernel::{gram_matrix, KernelFamily, KernelSpec};
use crate::pg::{pg1_mean, pg1_variance, sample_pg1, sigmoid};
use crate::rng::RngStream;
use crate::training::{conditional_log_marginal, grad_log_marginal};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestConfig {
    pub seed: u64,
    /// Skip the long-run Gibbs comparison.
    pub quick: bool,
    /// Added to every PG draw. Zero except when checking that the moment
    /// test actually detects a broken sampler.
    pub pg_bias: f64,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            quick: false,
            pg_bias: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    fn new(checks: Vec<CheckResult>) -> Self {
        Self {
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

pub const MOMENT_TILTS: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 4.0];
pub const MOMENT_DRAWS: usize = 100_000;
pub const IDENTITY_LOGITS: [f64; 5] = [-3.0, -1.0, 0.0, 1.0, 3.0];
pub const IDENTITY_SAMPLES: usize = 100_000;

fn draw(c: f64, rng: &mut RngStream, bias: f64) -> Result<f64> {
    Ok(sample_pg1(c, rng)?.value() + bias)
}

/// Empirical mean of PG(1, c) within 3 standard errors of `tanh(c/2)/(2c)`
/// for each tilt, and the c = 0 variance within 10% of 1/24.
pub fn check_pg_moments(cfg: &SelftestConfig) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (i, &c) in MOMENT_TILTS.iter().enumerate() {
        let mut rng = RngStream::named(cfg.seed, &format!("selftest/pg/{i}"));
        let xs = (0..MOMENT_DRAWS)
            .map(|_| draw(c, &mut rng, cfg.pg_bias))
            .collect::<Result<Vec<_>>>()?;
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (pg1_variance(c) / n).sqrt();
        let expected = pg1_mean(c);
        let z = (mean - expected) / se;
        out.push(CheckResult {
            name: format!("pg_mean_c{c}"),
            passed: z.abs() < 3.0 && xs.iter().all(|&x| x > 0.0),
            detail: json!({"c": c, "mean": mean, "expected": expected, "z": z}),
        });
        if c == 0.0 {
            let rel = (var - 1.0 / 24.0).abs() * 24.0;
            out.push(CheckResult {
                name: "pg_variance_c0".into(),
                passed: rel < 0.1,
                detail: json!({"variance": var, "expected": 1.0 / 24.0, "rel_error": rel}),
            });
        }
    }
    Ok(out)
}

/// Monte-Carlo check of `sigma(psi)^y (1-sigma(psi))^(1-y) =
/// 1/2 e^{(y-1/2)psi} E[e^{-w psi^2/2}]` to 1% relative error.
pub fn check_identity(cfg: &SelftestConfig) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (i, &psi) in IDENTITY_LOGITS.iter().enumerate() {
        for y in [0u8, 1] {
            let mut rng = RngStream::named(cfg.seed, &format!("selftest/identity/{i}/{y}"));
            let mut acc = 0.0;
            for _ in 0..IDENTITY_SAMPLES {
                acc += (-0.5 * draw(0.0, &mut rng, cfg.pg_bias)? * psi * psi).exp();
            }
            let rhs = 0.5 * ((f64::from(y) - 0.5) * psi).exp() * acc / IDENTITY_SAMPLES as f64;
            let lhs = if y == 1 { sigmoid(psi) } else { sigmoid(-psi) };
            let rel = (rhs - lhs).abs() / lhs;
            out.push(CheckResult {
                name: format!("identity_psi{psi}_y{y}"),
                passed: rel < 0.01,
                detail: json!({"lhs": lhs, "rhs": rhs, "rel_error": rel}),
            });
        }
    }
    Ok(out)
}

/// Analytic `(ln l, ln s)` gradients against central differences on random
/// problems with at most 16 points.
pub fn check_gradients(cfg: &SelftestConfig, instances: usize) -> Result<CheckResult> {
    let mut rng = RngStream::named(cfg.seed, "selftest/gradients");
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(2..=16);
        let d = rng.random_range(1..=4);
        let family = [
            KernelFamily::Rbf,
            KernelFamily::Linear,
            KernelFamily::Matern52,
        ][rng.random_range(0..3)];
        let spec = KernelSpec::new(
            family,
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..3.0),
        )?;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let ws: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                (0..n)
                    .map(|_| sample_pg1(rng.random_range(-3.0..3.0), &mut rng).map(|v| v.value()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let analytic = grad_log_marginal(&x, &y, &ws, &spec)?.as_array();
        let fd = finite_difference(&x, &y, &ws, &spec, 1e-5)?;
        worst = worst.max(relative_gap(&analytic, &fd));
    }
    Ok(CheckResult {
        name: "gradient_fd".into(),
        passed: worst < 1e-4,
        detail: json!({"instances": instances, "worst_rel_error": worst}),
    })
}

/// Central differences of the chain-averaged conditional log marginal in
/// log-parameter space.
pub fn finite_difference(
    x: &[Vec<f64>],
    y: &[u8],
    ws: &[Vec<f64>],
    spec: &KernelSpec,
    h: f64,
) -> Result<[f64; 2]> {
    let theta = spec.log_params();
    let objective = |t: [f64; 2]| -> Result<f64> {
        let s = spec.with_log_params(t)?;
        let mut acc = 0.0;
        for w in ws {
            acc += conditional_log_marginal(x, y, w, &s)?;
        }
        Ok(acc / ws.len() as f64)
    };
    let mut out = [0.0; 2];
    for (j, slot) in out.iter_mut().enumerate() {
        let mut up = theta;
        let mut down = theta;
        up[j] += h;
        down[j] -= h;
        *slot = (objective(up)? - objective(down)?) / (2.0 * h);
    }
    Ok(out)
}

pub fn relative_gap(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let diff = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let scale = (b[0].powi(2) + b[1].powi(2)).sqrt().max(1e-8);
    diff / scale
}

/// Posterior mean and variance of each latent on a dense grid, for two
/// training points.
pub fn grid_posterior_moments(
    features: &[Vec<f64>; 2],
    labels: [u8; 2],
    spec: &KernelSpec,
    half_width: f64,
    step: f64,
) -> Result<([f64; 2], [f64; 2])> {
    let k = gram_matrix(features.as_slice(), spec)?;
    let det = k[(0, 0)] * k[(1, 1)] - k[(0, 1)] * k[(1, 0)];
    let (p00, p01, p11) = (k[(1, 1)] / det, -k[(0, 1)] / det, k[(0, 0)] / det);
    let log_lik = |g: f64, y: u8| {
        let s = if y == 1 { g } else { -g };
        -(1.0 + (-s).exp()).ln()
    };
    let steps = (2.0 * half_width / step).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| -half_width + i as f64 * step).collect();
    let mut log_w = Vec::with_capacity(grid.len() * grid.len());
    let mut max_lw = f64::NEG_INFINITY;
    for &a in &grid {
        for &b in &grid {
            let quad = p00 * a * a + 2.0 * p01 * a * b + p11 * b * b;
            let lw = -0.5 * quad + log_lik(a, labels[0]) + log_lik(b, labels[1]);
            max_lw = max_lw.max(lw);
            log_w.push(lw);
        }
    }
    let (mut z, mut m, mut s) = (0.0, [0.0; 2], [0.0; 2]);
    for (i, &a) in grid.iter().enumerate() {
        for (j, &b) in grid.iter().enumerate() {
            let w = (log_w[i * grid.len() + j] - max_lw).exp();
            z += w;
            m[0] += w * a;
            m[1] += w * b;
            s[0] += w * a * a;
            s[1] += w * b * b;
        }
    }
    let mean = [m[0] / z, m[1] / z];
    let var = [s[0] / z - mean[0].powi(2), s[1] / z - mean[1].powi(2)];
    Ok((mean, var))
}

/// Toy two-point problem used by the Gibbs stationarity check.
pub fn two_point_problem() -> ([Vec<f64>; 2], [u8; 2], KernelSpec) {
    (
        [vec![0.0], vec![1.0]],
        [1, 0],
        KernelSpec::rbf(1.0, 2.0).expect("valid"),
    )
}

pub fn check_gibbs_stationarity(cfg: &SelftestConfig) -> Result<CheckResult> {
    let (x, y, spec) = two_point_problem();
    let (mean, var) = grid_posterior_moments(&x, y, &spec, 8.0, 0.01)?;
    let samples = long_run(
        x.as_slice(),
        &y,
        &spec,
        &LongRunConfig {
            seed: cfg.seed,
            ..LongRunConfig::default()
        },
    )?;
    let gm = samples.rb_mean();
    let gv = samples.rb_variance();
    let gap = (0..2)
        .map(|i| (gm[i] - mean[i]).abs().max((gv[i] - var[i]).abs()))
        .fold(0.0, f64::max);
    Ok(CheckResult {
        name: "gibbs_vs_quadrature".into(),
        passed: gap < 0.05,
        detail: json!({
            "gibbs_mean": gm, "gibbs_variance": gv,
            "oracle_mean": mean, "oracle_variance": var, "max_abs_gap": gap,
            "raw_mean": samples.mean(), "raw_variance": samples.variance()
        }),
    })
}

/// Sampler moments and identity checks only.
pub fn run_pg_selftest(cfg: &SelftestConfig) -> Result<SelftestReport> {
    let mut checks = check_pg_moments(cfg)?;
    checks.extend(check_identity(cfg)?);
    Ok(SelftestReport::new(checks))
}

/// Every diagnostic; `quick` skips the long-run Gibbs comparison.
pub fn run_selftest(cfg: &SelftestConfig) -> Result<SelftestReport> {
    let mut checks = check_pg_moments(cfg)?;
    checks.extend(check_identity(cfg)?);
    checks.push(check_gradients(cfg, 20)?);
    if !cfg.quick {
        checks.push(check_gibbs_stationarity(cfg)?);
    }
    Ok(SelftestReport::new(checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn biased_sampler_fails_moments() {
        let cfg = SelftestConfig {
            pg_bias: 0.1,
            ..SelftestConfig::default()
        };
        let checks = check_pg_moments(&cfg).unwrap();
        assert!(checks.iter().any(|c| !c.passed));
        assert!(check_pg_moments(&SelftestConfig::default())
            .unwrap()
            .iter()
            .all(|c| c.passed));
    }

    #[test]
    fn grid_oracle_on_gaussian_limit() {
        // With a flat-ish likelihood contribution the grid must still
        // normalize: check symmetry under label swap.
        let (x, _, spec) = two_point_problem();
        let (m1, v1) = grid_posterior_moments(&x, [1, 1], &spec, 8.0, 0.02).unwrap();
        let (m0, v0) = grid_posterior_moments(&x, [0, 0], &spec, 8.0, 0.02).unwrap();
        assert!((m1[0] + m0[0]).abs() < 1e-9);
        assert!((v1[1] - v0[1]).abs() < 1e-9);
        assert!(m1[0] > 0.0);
    }
}
