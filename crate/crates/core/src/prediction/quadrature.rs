//! Gauss-Hermite quadrature for Gaussian expectations of the logistic sigmoid.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

/// Node count used when none is requested.
pub const DEFAULT_NODES: usize = 64;

/// Nodes and weights for `int f(x) exp(-x^2) dx`.
///
/// Only the non-negative half is stored: node `x_i` always pairs with `-x_i`
/// at the same weight, and an odd rule carries a centre node at zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureRule {
    positive_nodes: Vec<f64>,
    positive_weights: Vec<f64>,
    centre_weight: Option<f64>,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gauss_hermite(DEFAULT_NODES).expect("default rule is valid")
    }
}

impl QuadratureRule {
    /// `n`-point physicists' Gauss-Hermite rule via Newton iteration on the
    /// orthonormal Hermite recurrence.
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        if n == 0 || n > 400 {
            return Err(Error::invalid(format!(
                "node count must be in 1..=400, got {n}"
            )));
        }
        let pim4 = PI.powf(-0.25);
        let half = n.div_ceil(2);
        let mut nodes: Vec<f64> = Vec::with_capacity(half);
        let mut weights = Vec::with_capacity(half);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..half {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut derivative = 0.0;
            let mut converged = false;
            for _ in 0..200 {
                let (mut p1, mut p2) = (pim4, 0.0);
                for j in 1..=n {
                    let jf = j as f64;
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                derivative = (2.0 * nf).sqrt() * p2;
                let step = p1 / derivative;
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Numerical(format!(
                    "Gauss-Hermite node {i} of {n} did not converge"
                )));
            }
            nodes.push(z);
            weights.push(2.0 / (derivative * derivative));
        }
        // nodes come out largest first
        nodes.reverse();
        weights.reverse();
        let centre_weight = if n % 2 == 1 {
            nodes.remove(0);
            Some(weights.remove(0))
        } else {
            None
        };
        Ok(Self {
            positive_nodes: nodes,
            positive_weights: weights,
            centre_weight,
        })
    }

    pub fn len(&self) -> usize {
        2 * self.positive_nodes.len() + usize::from(self.centre_weight.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All nodes in ascending order.
    pub fn nodes(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.positive_nodes.iter().rev().map(|x| -x).collect();
        if self.centre_weight.is_some() {
            out.push(0.0);
        }
        out.extend(&self.positive_nodes);
        out
    }

    /// Weights aligned with [`QuadratureRule::nodes`].
    pub fn weights(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.positive_weights.iter().rev().copied().collect();
        if let Some(c) = self.centre_weight {
            out.push(c);
        }
        out.extend(&self.positive_weights);
        out
    }

    /// `int f(x) exp(-x^2) dx`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut acc = self.centre_weight.map_or(0.0, |w| w * f(0.0));
        for (&x, &w) in self.positive_nodes.iter().zip(&self.positive_weights) {
            acc += w * (f(x) + f(-x));
        }
        acc
    }

    /// `E[sigmoid(g)]` for `g ~ N(mean, variance)`.
    ///
    /// Evaluated as `1/2 + (1/(2 sqrt(pi))) sum w_i tanh((mean + sqrt(2 var) x_i) / 2)`
    /// with symmetric node pairs summed together, so a zero mean gives exactly 1/2.
    pub fn expected_sigmoid(&self, mean: f64, variance: f64) -> f64 {
        let scale = (2.0 * variance.max(0.0)).sqrt();
        let mut acc = self.centre_weight.map_or(0.0, |w| w * (0.5 * mean).tanh());
        for (&x, &w) in self.positive_nodes.iter().zip(&self.positive_weights) {
            let hi = (0.5 * (mean + scale * x)).tanh();
            let lo = (0.5 * (mean - scale * x)).tanh();
            acc += w * (hi + lo);
        }
        (0.5 + acc / (2.0 * PI.sqrt())).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_and_symmetry() {
        for n in [1, 2, 5, 20, 64, 101] {
            let r = QuadratureRule::gauss_hermite(n).unwrap();
            assert_eq!(r.len(), n);
            let w = r.weights();
            assert!(w.iter().all(|&v| v > 0.0));
            let total: f64 = w.iter().sum();
            assert!((total - PI.sqrt()).abs() < 1e-13, "n={n} sum={total}");
            let x = r.nodes();
            for i in 0..n {
                assert_eq!(x[i], -x[n - 1 - i]);
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn exact_for_low_degree_polynomials() {
        let r = QuadratureRule::gauss_hermite(20).unwrap();
        // int x^2 e^{-x^2} = sqrt(pi)/2, int x^4 e^{-x^2} = 3 sqrt(pi)/4
        assert!((r.integrate(|x| x * x) - PI.sqrt() / 2.0).abs() < 1e-13);
        assert!((r.integrate(|x| x.powi(4)) - 0.75 * PI.sqrt()).abs() < 1e-12);
        assert!(r.integrate(|x| x.powi(3)).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(QuadratureRule::gauss_hermite(0).is_err());
        assert!(QuadratureRule::gauss_hermite(10_000).is_err());
    }

    #[test]
    fn symmetric_at_zero_mean() {
        let r = QuadratureRule::default();
        for v in [1e-12, 0.3, 1.0, 16.0, 400.0] {
            assert_eq!(r.expected_sigmoid(0.0, v), 0.5);
        }
        let odd = QuadratureRule::gauss_hermite(21).unwrap();
        assert_eq!(odd.expected_sigmoid(0.0, 2.0), 0.5);
    }
}
