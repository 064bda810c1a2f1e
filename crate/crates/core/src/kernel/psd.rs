use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Largest diagonal jitter the factorization ladder will try.
pub const MAX_JITTER: f64 = 1e-2;
/// First rung when factorization with zero jitter fails.
const BASE_JITTER: f64 = 1e-10;

/// A symmetric positive-definite matrix with its lower Cholesky factor.
///
/// `matrix` already includes whatever jitter the factorization needed
/// (see [`PsdMatrix::jitter`]), so `factor * factor^T == matrix`.
#[derive(Debug, Clone)]
pub struct PsdMatrix {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl PsdMatrix {
    /// Wrap an existing lower-triangular factor. The matrix is `L L^T`.
    ///
    /// A zero factor is accepted and describes a degenerate (point mass)
    /// covariance; solves against it are meaningless but sampling works.
    pub fn from_lower(factor: DMatrix<f64>) -> Result<Self> {
        if !factor.is_square() {
            return Err(Error::invalid("factor must be square"));
        }
        let lower = factor.lower_triangle();
        let matrix = &lower * lower.transpose();
        let chol = Cholesky::pack_dirty(lower);
        Ok(Self {
            matrix,
            chol,
            jitter: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The factored matrix, jitter included.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Total diagonal jitter added on top of the input matrix.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `L L^T`, i.e. the matrix reconstructed from the stored factor.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let l = self.chol.l();
        &l * l.transpose()
    }

    /// `A^{-1} b` via two triangular solves.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `L^{-1} b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut out = b.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    pub fn solve_lower_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    /// `A^{-1}`, formed from the factor. Only used where a full inverse is
    /// genuinely needed (trace terms of gradients).
    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>()
    }

    /// `L v`.
    pub fn mul_lower(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.l() * v
    }
}

/// Cholesky-factor `k + jitter * I`, escalating jitter tenfold on failure
/// until [`MAX_JITTER`].
pub fn factorize(k: &DMatrix<f64>, jitter: f64) -> Result<PsdMatrix> {
    if !k.is_square() {
        return Err(Error::invalid(format!(
            "matrix must be square, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    if !(jitter.is_finite() && jitter >= 0.0) {
        return Err(Error::invalid(format!(
            "jitter must be non-negative, got {jitter}"
        )));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let n = k.nrows();
    let scale = k.amax().max(1.0);
    let asym = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (k[(i, j)] - k[(j, i)]).abs())
        .fold(0.0, f64::max);
    if asym > 1e-12 * scale {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (max gap {asym:e})"
        )));
    }

    let mut ladder = Vec::new();
    let mut current = jitter;
    loop {
        ladder.push(current);
        let mut shifted = k.clone();
        for i in 0..n {
            shifted[(i, i)] += current;
        }
        if let Some(chol) = Cholesky::new(shifted.clone()) {
            if chol
                .l_dirty()
                .diagonal()
                .iter()
                .all(|d| *d > 0.0 && d.is_finite())
            {
                return Ok(PsdMatrix {
                    matrix: shifted,
                    chol,
                    jitter: current,
                });
            }
        }
        let next = if current == 0.0 {
            BASE_JITTER
        } else {
            current * 10.0
        };
        if next > MAX_JITTER * (1.0 + 1e-12) {
            return Err(Error::NotPositiveDefinite { ladder });
        }
        current = next;
    }
}

/// `mean + L z` with `z` i.i.d. standard normal.
pub fn mvn_sample<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    factor: &PsdMatrix,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if mean.len() != factor.dim() {
        return Err(Error::invalid(format!(
            "mean has length {}, covariance is {}x{}",
            mean.len(),
            factor.dim(),
            factor.dim()
        )));
    }
    let z = DVector::from_iterator(
        mean.len(),
        (0..mean.len()).map(|_| rng.sample(StandardNormal)),
    );
    Ok(mean + factor.mul_lower(&z))
}
