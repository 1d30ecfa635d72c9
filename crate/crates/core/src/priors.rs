//! Prior log-densities and the squared-exponential covariance shared by the
//! smoothness prior and the correlated proposal.
//!
//! An impossible value (zero density) is represented as `f64::NEG_INFINITY`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-density value of a point outside the support.
pub const IMPOSSIBLE: f64 = f64::NEG_INFINITY;

/// Configuration-level description of a prior.
///
/// `Uniform`, `Gaussian` and `CauchySparse` apply independently to every
/// coordinate; `Smoothness` is a zero-mean multivariate normal with
/// squared-exponential covariance over the whole vector; `PerCoordinate`
/// assigns one scalar prior to each coordinate in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, variance: f64 },
    CauchySparse { scale: f64 },
    Smoothness { variance: f64, length_scale: f64 },
    PerCoordinate { priors: Vec<PriorSpec> },
    Composite { priors: Vec<PriorSpec> },
}

impl PriorSpec {
    /// Build the prior for parameter vectors of length `dim`.
    pub fn build(&self, dim: usize) -> Result<Prior> {
        if dim == 0 {
            return Err(Error::Input("prior dimension must be positive".into()));
        }
        let kind = match self {
            PriorSpec::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::Input(format!("uniform prior needs lo < hi, got [{lo}, {hi}]")));
                }
                PriorKind::Uniform { lo: *lo, hi: *hi }
            }
            PriorSpec::Gaussian { mean, variance } => {
                if !(mean.is_finite() && variance.is_finite() && *variance > 0.0) {
                    return Err(Error::Input(format!(
                        "gaussian prior needs finite mean and positive variance, got ({mean}, {variance})"
                    )));
                }
                PriorKind::Gaussian { mean: *mean, variance: *variance }
            }
            PriorSpec::CauchySparse { scale } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::Input(format!("cauchy scale must be positive, got {scale}")));
                }
                PriorKind::Cauchy { scale: *scale }
            }
            PriorSpec::Smoothness { variance, length_scale } => {
                PriorKind::Smoothness(build_se_covariance(dim, *variance, *length_scale)?)
            }
            PriorSpec::PerCoordinate { priors } => {
                if priors.len() != dim {
                    return Err(Error::Input(format!(
                        "per-coordinate prior lists {} entries for dimension {dim}",
                        priors.len()
                    )));
                }
                let parts = priors.iter().map(|p| p.build(1)).collect::<Result<Vec<_>>>()?;
                PriorKind::PerCoordinate(parts)
            }
            PriorSpec::Composite { priors } => {
                if priors.is_empty() {
                    return Err(Error::Input("composite prior is empty".into()));
                }
                let parts = priors.iter().map(|p| p.build(dim)).collect::<Result<Vec<_>>>()?;
                PriorKind::Composite(parts)
            }
        };
        Ok(Prior { dim, kind })
    }
}

/// A prior compiled for a fixed dimension.
#[derive(Debug, Clone)]
pub struct Prior {
    dim: usize,
    kind: PriorKind,
}

#[derive(Debug, Clone)]
enum PriorKind {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, variance: f64 },
    Cauchy { scale: f64 },
    Smoothness(SECovariance),
    PerCoordinate(Vec<Prior>),
    Composite(Vec<Prior>),
}

impl Prior {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether `theta` has positive density.
    pub fn contains(&self, theta: &[f64]) -> bool {
        matches!(self.log_density(theta), Ok(v) if v > IMPOSSIBLE)
    }

    /// Normalized log-density at `theta`; [`IMPOSSIBLE`] outside the support.
    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim {
            return Err(Error::Input(format!(
                "parameter vector has length {}, prior expects {}",
                theta.len(),
                self.dim
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Ok(IMPOSSIBLE);
        }
        let value = match &self.kind {
            PriorKind::Uniform { lo, hi } => {
                if theta.iter().all(|x| x >= lo && x <= hi) {
                    -(theta.len() as f64) * (hi - lo).ln()
                } else {
                    IMPOSSIBLE
                }
            }
            PriorKind::Gaussian { mean, variance } => {
                let norm = -0.5 * (2.0 * PI * variance).ln();
                theta.iter().map(|x| norm - (x - mean).powi(2) / (2.0 * variance)).sum()
            }
            PriorKind::Cauchy { scale } => {
                let norm = -(PI * scale).ln();
                theta.iter().map(|x| norm - (x / scale).powi(2).ln_1p()).sum()
            }
            PriorKind::Smoothness(cov) => cov.log_density(theta),
            PriorKind::PerCoordinate(parts) => {
                let mut total = 0.0;
                for (p, x) in parts.iter().zip(theta) {
                    total += p.log_density(std::slice::from_ref(x))?;
                    if total == IMPOSSIBLE {
                        break;
                    }
                }
                total
            }
            PriorKind::Composite(parts) => {
                let mut total = 0.0;
                for p in parts {
                    total += p.log_density(theta)?;
                    if total == IMPOSSIBLE {
                        break;
                    }
                }
                total
            }
        };
        Ok(if value.is_nan() { IMPOSSIBLE } else { value })
    }
}

/// Log prior density; see [`Prior::log_density`].
pub fn log_prior(prior: &Prior, theta: &[f64]) -> Result<f64> {
    prior.log_density(theta)
}

/// Squared-exponential covariance `variance * exp(-(i-j)^2 / length_scale^2)`
/// over coordinate indices, with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct SECovariance {
    variance: f64,
    length_scale: f64,
    matrix: DMatrix<f64>,
    factor: DMatrix<f64>,
    log_det: f64,
}

pub fn build_se_covariance(n: usize, variance: f64, length_scale: f64) -> Result<SECovariance> {
    if n == 0 {
        return Err(Error::Input("covariance dimension must be positive".into()));
    }
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::Input(format!("covariance variance must be positive, got {variance}")));
    }
    if !(length_scale.is_finite() && length_scale >= 1.0) {
        return Err(Error::Input(format!("length scale must be at least 1, got {length_scale}")));
    }
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        let d = i as f64 - j as f64;
        variance * (-(d * d) / (length_scale * length_scale)).exp()
    });
    let mut jittered = matrix.clone();
    for i in 0..n {
        jittered[(i, i)] += 1e-12 * variance;
    }
    let chol = Cholesky::new(jittered)
        .ok_or_else(|| Error::Numerical("squared-exponential covariance is not positive definite".into()))?;
    let factor = chol.l();
    let log_det = 2.0 * factor.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(SECovariance { variance, length_scale, matrix, factor, log_det })
}

impl SECovariance {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular factor of the jittered matrix.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// log det of the jittered matrix.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Zero-mean normal log-density.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let b = DVector::from_column_slice(x);
        let z = self
            .factor
            .solve_lower_triangular(&b)
            .expect("factor has a positive diagonal");
        -0.5 * (n as f64 * (2.0 * PI).ln() + self.log_det) - 0.5 * z.norm_squared()
    }

    /// Draw `factor * z` with `z` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dim();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += self.factor[(i, j)] * zj;
            }
            out[i] = acc;
        }
        out
    }
}

pub fn sample_mvn<R: Rng + ?Sized>(cov: &SECovariance, rng: &mut R) -> Vec<f64> {
    cov.sample(rng)
}
