//! Exact sampling from the Pólya-Gamma distribution PG(1, c).
//!
//! The sampler is Devroye's alternating-series rejection scheme as adapted
//! by Polson, Scott and Windle: draw `X ~ J*(1, |c|/2)` from a two-piece
//! proposal (truncated inverse Gaussian below `t`, truncated exponential
//! above) and accept by squeezing a uniform between partial sums of the
//! density's alternating series. `PG(1, c) = X / 4`.
//!
//! All series terms are evaluated relative to the leading term in log
//! space, so the comparison is scale free and cannot underflow.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Truncation point between the inverse-Gaussian and exponential proposals.
const TRUNC: f64 = 0.64;
/// Upper bound on proposal rounds and series terms. Never reached in practice.
const MAX_ITER: usize = 1_000_000;

/// One draw of the auxiliary variable. Always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct PgDraw(f64);

impl PgDraw {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<PgDraw> for f64 {
    fn from(d: PgDraw) -> f64 {
        d.0
    }
}

/// `E[PG(1, c)] = tanh(c/2) / (2c)`, with the limit `1/4` at `c = 0`.
pub fn pg1_mean(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-6 {
        // Taylor: 1/4 - c^2/48
        0.25 - c * c / 48.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

/// `Var[PG(1, c)] = (sinh c - c) / (4 c^3 cosh^2(c/2))`, limit `1/24` at `c = 0`.
pub fn pg1_variance(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-3 {
        1.0 / 24.0 - c * c / 120.0
    } else {
        // sinh(c) / cosh^2(c/2) = 2 tanh(c/2); avoids overflow at large c
        let ch = (0.5 * c).cosh();
        (2.0 * (0.5 * c).tanh() - c / (ch * ch)) / (4.0 * c.powi(3))
    }
}

/// Draw one exact sample from PG(1, c).
pub fn sample_pg1(c: f64, rng: &mut RngStream) -> Result<PgDraw> {
    sample_pg1_with(c, rng)
}

/// Generic form of [`sample_pg1`] for any RNG.
pub fn sample_pg1_with<R: Rng + ?Sized>(c: f64, rng: &mut R) -> Result<PgDraw> {
    if !c.is_finite() {
        return Err(Error::invalid(format!("PG tilt must be finite, got {c}")));
    }
    let z = 0.5 * c.abs();
    let rate = 0.125 * PI * PI + 0.5 * z * z;
    let p_exp = mass_truncated_exponential(z, rate);

    for _ in 0..MAX_ITER {
        let u: f64 = rng.sample(Open01);
        let x = if u < p_exp {
            let e: f64 = rng.sample(Exp1);
            TRUNC + e / rate
        } else {
            truncated_inverse_gaussian(z, rng)?
        };

        let log_a0 = log_series_term(0, x);
        // Work with S / a_0, so the envelope starts at 1.
        let y: f64 = rng.random::<f64>();
        let mut s = 1.0;
        let mut n = 0usize;
        loop {
            n += 1;
            if n > MAX_ITER {
                return Err(Error::Internal(
                    "PG alternating series did not resolve".into(),
                ));
            }
            let term = (log_series_term(n, x) - log_a0).exp();
            if n % 2 == 1 {
                s -= term;
                if y <= s {
                    return Ok(PgDraw(0.25 * x));
                }
            } else {
                s += term;
                if y > s {
                    break;
                }
            }
        }
    }
    Err(Error::Internal(
        "PG rejection sampler exceeded iteration cap".into(),
    ))
}

/// Log of the n-th coefficient of the J*(1, 0) density series at `x`.
fn log_series_term(n: usize, x: f64) -> f64 {
    let k = n as f64 + 0.5;
    if x > TRUNC {
        PI.ln() + k.ln() - 0.5 * k * k * PI * PI * x
    } else {
        PI.ln() + k.ln() + 1.5 * (2.0 / (PI * x)).ln() - 2.0 * k * k / x
    }
}

/// Probability of choosing the exponential piece, `p / (p + q)`.
fn mass_truncated_exponential(z: f64, rate: f64) -> f64 {
    let t = TRUNC;
    let root = (1.0 / t).sqrt();
    let b = root * (t * z - 1.0);
    let a = -root * (t * z + 1.0);
    let x0 = rate.ln() + rate * t;
    let xb = x0 - z + ln_normal_cdf(b);
    let xa = x0 + z + ln_normal_cdf(a);
    // q / p = (4 / pi) * (e^xb + e^xa), combined in log space.
    let hi = xb.max(xa);
    let log_q_over_p = (4.0 / PI).ln() + hi + ((xb - hi).exp() + (xa - hi).exp()).ln();
    if log_q_over_p > 700.0 {
        0.0
    } else {
        1.0 / (1.0 + log_q_over_p.exp())
    }
}

/// Inverse Gaussian IG(1/z, 1) truncated to `(0, TRUNC)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> Result<f64> {
    let t = TRUNC;
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };

    if mu > t {
        // Truncated Levy proposal, accepted with probability exp(-z^2 x / 2).
        for _ in 0..MAX_ITER {
            let mut e1: f64 = rng.sample(Exp1);
            let mut e2: f64 = rng.sample(Exp1);
            let mut guard = 0;
            while e1 * e1 > 2.0 * e2 / t {
                e1 = rng.sample(Exp1);
                e2 = rng.sample(Exp1);
                guard += 1;
                if guard > MAX_ITER {
                    return Err(Error::Internal("truncated Levy proposal stuck".into()));
                }
            }
            let denom = 1.0 + t * e1;
            let x = t / (denom * denom);
            let alpha = (-0.5 * z * z * x).exp();
            let u: f64 = rng.random();
            if u <= alpha {
                return Ok(x);
            }
        }
    } else {
        for _ in 0..MAX_ITER {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let muy = mu * y;
            let mut x = mu + 0.5 * mu * muy - 0.5 * mu * (4.0 * muy + muy * muy).sqrt();
            let u: f64 = rng.random();
            if u > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < t && x > 0.0 {
                return Ok(x);
            }
        }
    }
    Err(Error::Internal(
        "truncated inverse-Gaussian sampler exceeded iteration cap".into(),
    ))
}

/// `ln Phi(x)` for the standard normal CDF, accurate far into the lower tail.
pub(crate) fn ln_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// Outcome of a Monte-Carlo check of the logistic augmentation identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityReport {
    pub psi: f64,
    pub label: u8,
    pub n_samples: usize,
    /// Bernoulli-logistic likelihood `sigma(psi)^y (1 - sigma(psi))^(1-y)`.
    pub lhs: f64,
    /// `1/2 exp((y - 1/2) psi) E[exp(-w psi^2 / 2)]`, `w ~ PG(1, 0)`.
    pub rhs: f64,
    pub rel_error: f64,
}

pub const MIN_IDENTITY_SAMPLES: usize = 10_000;

/// Compare the logistic likelihood with its Pólya-Gamma integral representation.
pub fn verify_augmentation_identity(
    psi: f64,
    label: u8,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<IdentityReport> {
    if !psi.is_finite() {
        return Err(Error::invalid(format!("logit must be finite, got {psi}")));
    }
    if label > 1 {
        return Err(Error::invalid(format!("label must be 0 or 1, got {label}")));
    }
    if n_samples < MIN_IDENTITY_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_IDENTITY_SAMPLES} samples, got {n_samples}"
        )));
    }
    let y = f64::from(label);
    let lhs = if label == 1 {
        sigmoid(psi)
    } else {
        sigmoid(-psi)
    };

    let half_sq = 0.5 * psi * psi;
    let mut acc = 0.0;
    for _ in 0..n_samples {
        let w = sample_pg1(0.0, rng)?.value();
        acc += (-w * half_sq).exp();
    }
    let mc = acc / n_samples as f64;
    let rhs = ((y - 0.5) * psi - LN_2).exp() * mc;
    Ok(IdentityReport {
        psi,
        label,
        n_samples,
        lhs,
        rhs,
        rel_error: (rhs - lhs).abs() / lhs,
    })
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(c: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = RngStream::new(seed, 0);
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_pg1(c, &mut rng).unwrap().value())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        (mean, var)
    }

    #[test]
    fn closed_form_moments() {
        assert_eq!(pg1_mean(0.0), 0.25);
        assert!((pg1_mean(2.0) - 1f64.tanh() / 4.0).abs() < 1e-15);
        assert!((pg1_mean(2.0) - 0.19040).abs() < 1e-5);
        assert!((pg1_variance(0.0) - 1.0 / 24.0).abs() < 1e-15);
        // continuity across the small-c branch
        assert!((pg1_mean(1e-6) - pg1_mean(1.0001e-6)).abs() < 1e-12);
        assert!((pg1_variance(1e-3) - pg1_variance(1.0001e-3)).abs() < 1e-9);
    }

    #[test]
    fn mean_at_zero_and_two() {
        for (c, seed) in [(0.0, 11), (2.0, 12)] {
            let n = 100_000;
            let (m, v) = moments(c, n, seed);
            let se = (v / n as f64).sqrt();
            assert!((m - pg1_mean(c)).abs() < 3.0 * se, "c={c} mean={m}");
        }
    }

    #[test]
    fn large_tilt_is_stable() {
        let mut rng = RngStream::new(5, 5);
        for c in [50.0, 200.0, -800.0] {
            let n = 20_000;
            let xs: Vec<f64> = (0..n)
                .map(|_| sample_pg1(c, &mut rng).unwrap().value())
                .collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let se = (pg1_variance(c) / n as f64).sqrt();
            assert!((mean - pg1_mean(c)).abs() < 4.0 * se, "c={c}");
            assert!(xs.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn rejects_non_finite_tilt() {
        let mut rng = RngStream::new(1, 1);
        assert!(matches!(
            sample_pg1(f64::NAN, &mut rng),
            Err(Error::InvalidArgument(_))
        ));
        assert!(sample_pg1(f64::INFINITY, &mut rng).is_err());
    }

    #[test]
    fn identity_exact_at_zero_logit() {
        let mut rng = RngStream::new(3, 0);
        let r = verify_augmentation_identity(0.0, 1, 10_000, &mut rng).unwrap();
        assert_eq!(r.lhs, 0.5);
        assert_eq!(r.rhs, 0.5);
        assert_eq!(r.rel_error, 0.0);
    }

    #[test]
    fn identity_rejects_small_sample_count() {
        let mut rng = RngStream::new(3, 0);
        assert!(verify_augmentation_identity(1.0, 1, 100, &mut rng).is_err());
        assert!(verify_augmentation_identity(1.0, 2, 10_000, &mut rng).is_err());
    }

    #[test]
    fn ln_normal_cdf_tails() {
        assert!((ln_normal_cdf(0.0) - 0.5f64.ln()).abs() < 1e-15);
        // continuity at the asymptotic switch
        let a = ln_normal_cdf(-29.999_999);
        let b = ln_normal_cdf(-30.000_001);
        assert!((a - b).abs() < 1e-4);
        assert!(ln_normal_cdf(-100.0).is_finite());
    }
}
