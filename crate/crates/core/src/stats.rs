//! Chain summaries and reconstruction error metrics.

use crate::error::{Error, Result};
use crate::fields::Grid;
use crate::posterior::ParameterSpace;

/// Fewest samples [`summarize`] accepts.
pub const MIN_SAMPLES: usize = 10;

/// Per-coordinate statistics of a set of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub ess: Vec<f64>,
    /// `sd / sqrt(ess)`.
    pub standard_error: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
}

/// Summary of samples given as rows (one parameter vector per row).
pub fn summarize(samples: &[Vec<f64>]) -> Result<ChainSummary> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Input(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::Input("samples have inconsistent dimensions".into()));
    }
    let mut out = ChainSummary {
        mean: Vec::with_capacity(dim),
        sd: Vec::with_capacity(dim),
        ess: Vec::with_capacity(dim),
        standard_error: Vec::with_capacity(dim),
        lo95: Vec::with_capacity(dim),
        hi95: Vec::with_capacity(dim),
    };
    for i in 0..dim {
        let xs: Vec<f64> = samples.iter().map(|s| s[i]).collect();
        let m = mean(&xs);
        let sd = std_dev(&xs);
        let ess = effective_sample_size(&xs);
        let mut sorted = xs;
        sorted.sort_by(f64::total_cmp);
        out.mean.push(m);
        out.sd.push(sd);
        out.ess.push(ess);
        out.standard_error.push(sd / ess.sqrt());
        out.lo95.push(quantile_sorted(&sorted, 0.025));
        out.hi95.push(quantile_sorted(&sorted, 0.975));
    }
    Ok(out)
}

/// Arithmetic mean, accumulated relative to the first value so that a
/// constant series returns that value exactly.
/// Summary over several chains of the same target: moments and quantiles
/// of the pooled samples, ESS summed over chains.
pub fn summarize_chains(chains: &[&[Vec<f64>]]) -> Result<ChainSummary> {
    let pooled: Vec<Vec<f64>> = chains.iter().flat_map(|c| c.iter().cloned()).collect();
    let mut out = summarize(&pooled)?;
    for (i, ess) in out.ess.iter_mut().enumerate() {
        *ess = chains
            .iter()
            .filter(|c| !c.is_empty())
            .map(|c| effective_sample_size(&c.iter().map(|s| s[i]).collect::<Vec<_>>()))
            .sum::<f64>()
            .clamp(1.0, pooled.len() as f64);
        out.standard_error[i] = out.sd[i] / ess.sqrt();
    }
    Ok(out)
}

pub fn mean(xs: &[f64]) -> f64 {
    let Some(&x0) = xs.first() else { return f64::NAN };
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Type-7 quantile (linear interpolation between order statistics) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

/// `n / (1 + 2 Σ ρ_k)` with autocorrelations summed in consecutive pairs
/// until a pair sum is non-positive; clamped to `[1, n]`. A constant series
/// has ESS `n`.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return n as f64;
    }
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return n as f64;
    }
    let rho = |k: usize| -> f64 {
        centered[..n - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * c0)
    };
    // tau = -1 + 2 * sum of pair sums (rho_0 + rho_1) + (rho_2 + rho_3) + ...
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = if k == 0 { 1.0 + rho(1) } else { rho(k) + rho(k + 1) };
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    (n as f64 / tau.max(f64::MIN_POSITIVE)).clamp(1.0, n as f64)
}

/// Per-node mean and 95% band of the sampled beds on the reconstruction grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSummary {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
}

/// Expands every sample to bed heights on `grid` (bump parameters are
/// evaluated at the nodes) and summarizes per node.
pub fn field_summary(samples: &[Vec<f64>], space: ParameterSpace, grid: &Grid) -> Result<FieldSummary> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Input(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let beds = samples.iter().map(|s| space.expand(s, grid)).collect::<Result<Vec<_>>>()?;
    let n = grid.len();
    let mut out = FieldSummary {
        x: grid.nodes().to_vec(),
        mean: Vec::with_capacity(n),
        lo95: Vec::with_capacity(n),
        hi95: Vec::with_capacity(n),
    };
    for i in 0..n {
        let mut col: Vec<f64> = beds.iter().map(|b| b[i]).collect();
        out.mean.push(mean(&col));
        col.sort_by(f64::total_cmp);
        out.lo95.push(quantile_sorted(&col, 0.025));
        out.hi95.push(quantile_sorted(&col, 0.975));
    }
    Ok(out)
}

/// Reconstruction errors against a known bed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// RMS error divided by the range of the truth (a fraction).
    pub nrmse: f64,
    /// Relative L2 error, percent.
    pub rel_l2: f64,
    /// Relative max-norm error, percent.
    pub rel_linf: f64,
    /// Largest reconstructed height.
    pub peak_height: f64,
}

impl ErrorReport {
    pub fn nrmse_percent(&self) -> f64 {
        100.0 * self.nrmse
    }
}

pub fn error_report(reconstruction: &[f64], truth: &[f64]) -> Result<ErrorReport> {
    if reconstruction.len() != truth.len() || truth.is_empty() {
        return Err(Error::Input(format!(
            "reconstruction has {} values, truth {}",
            reconstruction.len(),
            truth.len()
        )));
    }
    let lo = truth.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::Domain("NRMSE is undefined for a constant truth".into()));
    }
    let n = truth.len() as f64;
    let sq: f64 = reconstruction.iter().zip(truth).map(|(r, t)| (r - t) * (r - t)).sum();
    let norm_truth = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    let max_err = reconstruction.iter().zip(truth).map(|(r, t)| (r - t).abs()).fold(0.0, f64::max);
    let max_truth = truth.iter().map(|t| t.abs()).fold(0.0, f64::max);
    Ok(ErrorReport {
        nrmse: (sq / n).sqrt() / range,
        rel_l2: 100.0 * sq.sqrt() / norm_truth,
        rel_linf: 100.0 * max_err / max_truth,
        peak_height: reconstruction.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GaussianBumpParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn as_rows(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn constant_chain() {
        let s = summarize(&as_rows(&[0.7; 50])).unwrap();
        assert_eq!(s.mean[0], 0.7);
        assert_eq!(s.sd[0], 0.0);
        assert_eq!((s.lo95[0], s.hi95[0]), (0.7, 0.7));
        assert_eq!(s.ess[0], 50.0);
    }

    #[test]
    fn pooled_summary_adds_ess() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (ra, rb) = (as_rows(&a), as_rows(&b));
        let s = summarize_chains(&[&ra, &rb]).unwrap();
        let expected = effective_sample_size(&a) + effective_sample_size(&b);
        assert!((s.ess[0] - expected).abs() < 1e-9);
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        assert!((s.mean[0] - mean(&all)).abs() < 1e-15);
    }

    #[test]
    fn too_few_samples() {
        assert!(summarize(&as_rows(&[1.0; 9])).is_err());
    }

    #[test]
    fn iid_gaussian_ess_and_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = summarize(&as_rows(&xs)).unwrap();
        assert!((s.ess[0] / 10_000.0 - 1.0).abs() < 0.2, "{}", s.ess[0]);
        assert!((s.lo95[0] + 1.96).abs() < 0.05 && (s.hi95[0] - 1.96).abs() < 0.05);
    }

    #[test]
    fn ar1_ess() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = 0.0;
        let xs: Vec<f64> = (0..100_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = 0.5 * x + z;
                x
            })
            .collect();
        let ratio = effective_sample_size(&xs) / xs.len() as f64;
        assert!((ratio - 1.0 / 3.0).abs() < 0.15 / 3.0, "{ratio}");
    }

    #[test]
    fn type7_quantiles() {
        let xs = [3.0, 1.0, 4.0, 1.0, 5.0];
        // numpy.quantile(..., method="linear")
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert!((quantile(&xs, 0.1) - 1.0).abs() < 1e-15);
        assert!((quantile(&xs, 0.9) - 4.6).abs() < 1e-12);
    }

    #[test]
    fn hand_arithmetic_errors() {
        let r = error_report(&[0.0, 0.1, 0.0], &[0.0, 0.2, 0.0]).unwrap();
        assert!((r.nrmse - (0.01f64 / 3.0).sqrt() / 0.2).abs() < 1e-12);
        assert!((r.rel_l2 - 50.0).abs() < 1e-12);
        assert!((r.rel_linf - 50.0).abs() < 1e-12);
        assert!((r.peak_height - 0.1).abs() < 1e-15);
    }

    #[test]
    fn exact_reconstruction_and_constant_truth() {
        let t = [0.0, 0.2, 0.1];
        let r = error_report(&t, &t).unwrap();
        assert_eq!((r.nrmse, r.rel_l2, r.rel_linf), (0.0, 0.0, 0.0));
        assert!(error_report(&[0.1; 3], &[0.1; 3]).is_err());
        assert!(error_report(&[0.1; 2], &t).is_err());
    }

    #[test]
    fn flat_gridded_field_summary() {
        let grid = Grid::uniform(1.5, 13.0, 64).unwrap();
        let samples = vec![vec![0.0; 64]; 20];
        let f = field_summary(&samples, ParameterSpace::Gridded { nodes: 64 }, &grid).unwrap();
        assert!(f.mean.iter().chain(&f.lo95).chain(&f.hi95).all(|&v| v == 0.0));
    }

    #[test]
    fn parametric_field_summary_expands_bump() {
        let grid = Grid::uniform(1.5, 13.0, 64).unwrap();
        let samples = vec![vec![4.0, 0.05]; 20];
        let f = field_summary(&samples, ParameterSpace::Parametric2D, &grid).unwrap();
        let p = GaussianBumpParams::new(4.0, 0.05).unwrap();
        for (x, m) in grid.nodes().iter().zip(&f.mean) {
            assert!((m - p.height_at(*x)).abs() < 1e-15);
        }
    }
}
