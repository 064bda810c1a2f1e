//! Plain logistic regression on raw embeddings, the reference point for
//! calibration comparisons.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::pg::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    /// Intercept first, then one weight per feature.
    pub coefficients: Vec<f64>,
}

impl LogisticRegression {
    /// Maximum-likelihood fit by Newton-Raphson with an L2 penalty `ridge`
    /// on the non-intercept weights.
    pub fn fit<P: AsRef<[f64]>>(features: &[P], labels: &[u8], ridge: f64) -> Result<Self> {
        let n = features.len();
        if n == 0 || labels.len() != n {
            return Err(Error::invalid(
                "need matching, non-empty features and labels",
            ));
        }
        let d = features[0].as_ref().len();
        if features.iter().any(|x| x.as_ref().len() != d) {
            return Err(Error::invalid("features have mixed dimensions"));
        }
        let p = d + 1;
        let design = DMatrix::from_fn(n, p, |i, j| {
            if j == 0 {
                1.0
            } else {
                features[i].as_ref()[j - 1]
            }
        });
        let y = DVector::from_iterator(n, labels.iter().map(|&v| f64::from(v)));
        let mut beta = DVector::zeros(p);

        for _ in 0..100 {
            let eta = &design * &beta;
            let mu = eta.map(sigmoid);
            let mut grad = design.transpose() * (&y - &mu);
            let weights = mu.map(|m| (m * (1.0 - m)).max(1e-12));
            let mut scaled = design.clone();
            for (mut row, w) in scaled.row_iter_mut().zip(weights.iter()) {
                row *= w.sqrt();
            }
            let mut hess = scaled.transpose() * &scaled;
            for j in 1..p {
                grad[j] -= ridge * beta[j];
                hess[(j, j)] += ridge;
            }
            let step = hess
                .cholesky()
                .ok_or_else(|| Error::Numerical("logistic Hessian not positive definite".into()))?
                .solve(&grad);
            beta += &step;
            if step.amax() < 1e-10 {
                break;
            }
        }
        Ok(Self {
            coefficients: beta.iter().copied().collect(),
        })
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let eta = self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>();
        sigmoid(eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_one_dimensional_logit() {
        // Grouped data with exact empirical frequencies sigma(2x - 1).
        let mut x = Vec::new();
        let mut y = Vec::new();
        for &v in &[-1.0, 0.0, 0.5, 1.0, 2.0] {
            let p = sigmoid(2.0 * v - 1.0);
            let pos = (p * 10_000.0).round() as usize;
            for i in 0..10_000 {
                x.push(vec![v]);
                y.push(u8::from(i < pos));
            }
        }
        let m = LogisticRegression::fit(&x, &y, 0.0).unwrap();
        assert!((m.coefficients[0] + 1.0).abs() < 1e-2);
        assert!((m.coefficients[1] - 2.0).abs() < 1e-2);
    }

    #[test]
    fn ridge_keeps_separable_fit_finite() {
        let x = vec![vec![-1.0], vec![-0.5], vec![0.5], vec![1.0]];
        let y = [0, 0, 1, 1];
        let m = LogisticRegression::fit(&x, &y, 1e-3).unwrap();
        assert!(m.coefficients.iter().all(|c| c.is_finite()));
        assert!(m.predict_proba(&[1.0]) > 0.9);
    }
}
