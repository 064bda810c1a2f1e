//! Covariance functions for the GP layer.

mod psd;

pub use psd::{factorize, mvn_sample, PsdMatrix, MAX_JITTER};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `s^2 exp(-|a-b|^2 / 2l^2)`
    Rbf,
    /// `s^2 <a, b>`; the length scale is unused.
    Linear,
    /// Matérn with smoothness 5/2.
    Matern52,
}

/// Relative diagonal jitter applied when none is given: `1e-6 * s^2`.
pub const DEFAULT_RELATIVE_JITTER: f64 = 1e-6;

/// Kernel family plus hyperparameters.
///
/// `output_scale` is the amplitude `s`, so a stationary kernel's diagonal is
/// `s^2`. `jitter` is an absolute value added to the diagonal of self-kernel
/// matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec")]
pub struct KernelSpec {
    family: KernelFamily,
    length_scale: f64,
    output_scale: f64,
    jitter: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernelSpec {
    #[serde(default = "default_family")]
    family: KernelFamily,
    #[serde(default = "default_length_scale")]
    length_scale: f64,
    #[serde(default = "default_output_scale")]
    output_scale: f64,
    jitter: Option<f64>,
}

fn default_family() -> KernelFamily {
    KernelFamily::Rbf
}
fn default_length_scale() -> f64 {
    1.0
}
fn default_output_scale() -> f64 {
    8.0
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        let spec = KernelSpec::new(raw.family, raw.length_scale, raw.output_scale)?;
        match raw.jitter {
            Some(j) => spec.with_jitter(j),
            None => Ok(spec),
        }
    }
}

impl Default for KernelSpec {
    /// RBF with length scale 1 and output scale 8.
    fn default() -> Self {
        KernelSpec::new(KernelFamily::Rbf, 1.0, 8.0).expect("defaults are valid")
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, length_scale: f64, output_scale: f64) -> Result<Self> {
        if !(length_scale.is_finite() && length_scale > 0.0) {
            return Err(Error::invalid(format!(
                "length_scale must be positive and finite, got {length_scale}"
            )));
        }
        if !(output_scale.is_finite() && output_scale > 0.0) {
            return Err(Error::invalid(format!(
                "output_scale must be positive and finite, got {output_scale}"
            )));
        }
        Ok(Self {
            family,
            length_scale,
            output_scale,
            jitter: DEFAULT_RELATIVE_JITTER * output_scale * output_scale,
        })
    }

    pub fn rbf(length_scale: f64, output_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Rbf, length_scale, output_scale)
    }

    pub fn with_jitter(mut self, jitter: f64) -> Result<Self> {
        if !(jitter.is_finite() && jitter >= 0.0) {
            return Err(Error::invalid(format!(
                "jitter must be non-negative and finite, got {jitter}"
            )));
        }
        self.jitter = jitter;
        Ok(self)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `(ln l, ln s)`, the coordinates hyperparameters are optimized in.
    pub fn log_params(&self) -> [f64; 2] {
        [self.length_scale.ln(), self.output_scale.ln()]
    }

    /// Same family and jitter with hyperparameters `(exp(log_l), exp(log_s))`.
    pub fn with_log_params(&self, log_params: [f64; 2]) -> Result<Self> {
        let mut next = Self::new(self.family, log_params[0].exp(), log_params[1].exp())?;
        next.jitter = self.jitter;
        Ok(next)
    }

    /// Prior variance `k(x, x)` (without jitter).
    pub fn self_covariance(&self, x: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Linear => self.variance() * dot(x, x),
            KernelFamily::Rbf | KernelFamily::Matern52 => self.variance(),
        }
    }

    fn variance(&self) -> f64 {
        self.output_scale * self.output_scale
    }

    /// Kernel value `k(a, b)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.eval_with_grad(a, b).0
    }

    /// `k(a, b)` together with its derivatives in `ln l` and `ln s`.
    pub fn eval_with_grad(&self, a: &[f64], b: &[f64]) -> (f64, f64, f64) {
        let s2 = self.variance();
        match self.family {
            KernelFamily::Rbf => {
                let r2 = sq_dist(a, b) / (self.length_scale * self.length_scale);
                let k = s2 * (-0.5 * r2).exp();
                (k, k * r2, 2.0 * k)
            }
            KernelFamily::Linear => {
                let k = s2 * dot(a, b);
                (k, 0.0, 2.0 * k)
            }
            KernelFamily::Matern52 => {
                let s = 5f64.sqrt() * sq_dist(a, b).sqrt() / self.length_scale;
                let e = (-s).exp();
                let k = s2 * (1.0 + s + s * s / 3.0) * e;
                let dk_dlogl = s2 * e * s * s * (1.0 + s) / 3.0;
                (k, dk_dlogl, 2.0 * k)
            }
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn common_dim<P: AsRef<[f64]>>(a: &[P], b: &[P]) -> Result<usize> {
    let d = a
        .first()
        .or_else(|| b.first())
        .map(|p| p.as_ref().len())
        .unwrap_or(0);
    for (i, p) in a.iter().chain(b.iter()).enumerate() {
        if p.as_ref().len() != d {
            return Err(Error::invalid(format!(
                "feature vector {i} has dimension {}, expected {d}",
                p.as_ref().len()
            )));
        }
    }
    Ok(d)
}

/// Cross-covariance matrix `K[i, j] = k(a_i, b_j)`.
///
/// When `a` and `b` are the same slice the result is a self-kernel and the
/// spec's jitter is added to the diagonal.
pub fn kernel_matrix<P: AsRef<[f64]>>(a: &[P], b: &[P], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    common_dim(a, b)?;
    let same = std::ptr::eq(a, b);
    let mut k = DMatrix::from_fn(a.len(), b.len(), |i, j| {
        spec.eval(a[i].as_ref(), b[j].as_ref())
    });
    if same {
        for i in 0..a.len() {
            k[(i, i)] += spec.jitter;
        }
    }
    Ok(k)
}

/// Symmetric self-kernel matrix with jitter on the diagonal.
pub fn gram_matrix<P: AsRef<[f64]>>(x: &[P], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    kernel_matrix(x, x, spec)
}

/// Self-kernel matrix and its derivatives with respect to `ln l` and `ln s`.
///
/// Jitter is a constant, so it appears in `K` but not in the derivatives.
pub fn gram_with_grads<P: AsRef<[f64]>>(
    x: &[P],
    spec: &KernelSpec,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    common_dim(x, x)?;
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    let mut dl = DMatrix::zeros(n, n);
    let mut ds = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let (v, gl, gs) = spec.eval_with_grad(x[i].as_ref(), x[j].as_ref());
            k[(i, j)] = v;
            k[(j, i)] = v;
            dl[(i, j)] = gl;
            dl[(j, i)] = gl;
            ds[(i, j)] = gs;
            ds[(j, i)] = gs;
        }
        k[(i, i)] += spec.jitter;
    }
    Ok((k, dl, ds))
}

/// Covariances between every reference point and a single query.
pub fn kernel_vector<P: AsRef<[f64]>>(
    reference: &[P],
    query: &[f64],
    spec: &KernelSpec,
) -> Result<nalgebra::DVector<f64>> {
    let d = query.len();
    if let Some((i, p)) = reference
        .iter()
        .enumerate()
        .find(|(_, p)| p.as_ref().len() != d)
    {
        return Err(Error::invalid(format!(
            "reference vector {i} has dimension {}, query has {d}",
            p.as_ref().len()
        )));
    }
    Ok(nalgebra::DVector::from_iterator(
        reference.len(),
        reference.iter().map(|p| spec.eval(p.as_ref(), query)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: KernelFamily, l: f64, s: f64) -> KernelSpec {
        KernelSpec::new(family, l, s).unwrap()
    }

    #[test]
    fn rbf_diagonal_is_output_variance() {
        let sp = KernelSpec::default();
        let x = vec![vec![0.3, -1.2]];
        let k = gram_matrix(&x, &sp).unwrap();
        assert_eq!(k[(0, 0)], 64.0 + 64e-6);
        let cross = kernel_matrix(&x, &x.clone(), &sp).unwrap();
        assert_eq!(cross[(0, 0)], 64.0);
    }

    #[test]
    fn rbf_at_sqrt_two() {
        let sp = spec(KernelFamily::Rbf, 1.0, 1.0);
        let v = sp.eval(&[0.0, 0.0], &[1.0, 1.0]);
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        assert!((v - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn rbf_underflows_far_away() {
        let sp = spec(KernelFamily::Rbf, 1.0, 1.0);
        assert!(sp.eval(&[0.0], &[100.0]) < 1e-300);
    }

    #[test]
    fn linear_and_matern_closed_forms() {
        let lin = spec(KernelFamily::Linear, 3.0, 2.0);
        assert_eq!(lin.eval(&[1.0, 2.0], &[3.0, -1.0]), 4.0 * 1.0);
        let mat = spec(KernelFamily::Matern52, 0.7, 1.5);
        assert_eq!(mat.eval(&[0.2, 0.1], &[0.2, 0.1]), 2.25);
        let r = 1.0f64;
        let s = 5f64.sqrt() * r / 0.7;
        let expect = 2.25 * (1.0 + s + s * s / 3.0) * (-s).exp();
        assert!((mat.eval(&[0.0], &[1.0]) - expect).abs() < 1e-15);
    }

    #[test]
    fn grads_match_finite_differences() {
        let a = [0.4, -0.3, 1.1];
        let b = [-0.2, 0.5, 0.9];
        for family in [
            KernelFamily::Rbf,
            KernelFamily::Linear,
            KernelFamily::Matern52,
        ] {
            let sp = spec(family, 0.8, 1.7);
            let (_, gl, gs) = sp.eval_with_grad(&a, &b);
            let [ll, ls] = sp.log_params();
            let h = 1e-6;
            let f = |p: [f64; 2]| sp.with_log_params(p).unwrap().eval(&a, &b);
            let fd_l = (f([ll + h, ls]) - f([ll - h, ls])) / (2.0 * h);
            let fd_s = (f([ll, ls + h]) - f([ll, ls - h])) / (2.0 * h);
            assert!((gl - fd_l).abs() < 1e-7, "{family:?} {gl} {fd_l}");
            assert!((gs - fd_s).abs() < 1e-7, "{family:?}");
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let sp = KernelSpec::default();
        let a = vec![vec![0.0, 1.0]];
        let b = vec![vec![0.0]];
        assert!(matches!(
            kernel_matrix(&a, &b, &sp),
            Err(Error::InvalidArgument(_))
        ));
        assert!(kernel_vector(&a, &[1.0], &sp).is_err());
    }

    #[test]
    fn invalid_hyperparameters() {
        assert!(KernelSpec::rbf(0.0, 1.0).is_err());
        assert!(KernelSpec::rbf(1.0, -1.0).is_err());
        assert!(KernelSpec::rbf(1.0, 1.0)
            .unwrap()
            .with_jitter(-1.0)
            .is_err());
    }

    #[test]
    fn json_config_defaults_and_keys() {
        let sp: KernelSpec =
            serde_json::from_str(r#"{"family":"matern52","length_scale":2.0,"output_scale":3.0}"#)
                .unwrap();
        assert_eq!(sp.family(), KernelFamily::Matern52);
        assert!((sp.jitter() - 9e-6).abs() < 1e-20);
        let json = serde_json::to_string(&sp).unwrap();
        assert_eq!(
            json,
            r#"{"family":"matern52","length_scale":2.0,"output_scale":3.0,"jitter":9e-6}"#
        );
        let back: KernelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sp);
        assert!(serde_json::from_str::<KernelSpec>(r#"{"length_scale":-1}"#).is_err());
        let d: KernelSpec = serde_json::from_str("{}").unwrap();
        assert_eq!(d, KernelSpec::default());
    }
}
