//! Random-walk Metropolis–Hastings with independent or squared-exponential
//! correlated Gaussian proposals, burn-in scale adaptation, and multi-chain
//! runs with a log-posterior discard rule.
//!
//! Each chain draws from a ChaCha8 generator seeded with its seed and using
//! its chain index plus one as the stream, so chains are independent and
//! reproducible whatever order they run in. Stream 0 is left to synthetic
//! noise generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::posterior::LogDensity;
use crate::priors::{build_se_covariance, SECovariance, IMPOSSIBLE};

/// Name of the per-chain generator, recorded in run outputs.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9); noise on stream 0, chain i on stream i + 1";

/// Proposals per adaptation window.
pub const ADAPT_WINDOW: usize = 100;
/// Acceptance band targeted during burn-in.
pub const TARGET_ACCEPTANCE: (f64, f64) = (0.1, 0.4);
/// A chain is discarded when its mean log-posterior is this far below the best chain's.
pub const DISCARD_GAP: f64 = 2.0;

#[derive(Debug, Clone)]
pub enum ProposalKind {
    /// Independent zero-mean Gaussian step per coordinate with these variances.
    IndependentGaussian(Vec<f64>),
    /// Multivariate Gaussian step with squared-exponential covariance.
    CorrelatedGaussian(SECovariance),
}

/// Symmetric Gaussian random-walk proposal. The step is `scale` times a draw
/// from the base distribution.
#[derive(Debug, Clone)]
pub struct Proposal {
    kind: ProposalKind,
    scale: f64,
}

impl Proposal {
    pub fn independent(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() || variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Input("proposal variances must be positive".into()));
        }
        Ok(Self { kind: ProposalKind::IndependentGaussian(variances), scale: 1.0 })
    }

    pub fn correlated(dim: usize, variance: f64, length_scale: f64) -> Result<Self> {
        let cov = build_se_covariance(dim, variance, length_scale)?;
        Ok(Self { kind: ProposalKind::CorrelatedGaussian(cov), scale: 1.0 })
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Input(format!("proposal scale must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn kind(&self) -> &ProposalKind {
        &self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ProposalKind::IndependentGaussian(v) => v.len(),
            ProposalKind::CorrelatedGaussian(c) => c.dim(),
        }
    }
}

/// `current` plus a scaled Gaussian step.
pub fn propose<R: Rng + ?Sized>(current: &[f64], proposal: &Proposal, rng: &mut R) -> Vec<f64> {
    debug_assert_eq!(current.len(), proposal.dim());
    let step = match &proposal.kind {
        ProposalKind::IndependentGaussian(vars) => vars
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(rng);
                v.sqrt() * z
            })
            .collect(),
        ProposalKind::CorrelatedGaussian(cov) => cov.sample(rng),
    };
    current.iter().zip(step).map(|(x, s)| x + proposal.scale * s).collect()
}

/// Accept a candidate with log-density `log_candidate` over `log_current`
/// with probability `min(1, exp(diff))`.
pub fn accept<R: Rng + ?Sized>(log_current: f64, log_candidate: f64, rng: &mut R) -> bool {
    if log_candidate == IMPOSSIBLE || log_candidate.is_nan() {
        return false;
    }
    let diff = log_candidate - log_current;
    if diff >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u < diff.exp()
}

/// One Metropolis–Hastings transition. Returns the next state, its
/// log-density and whether the candidate was accepted.
pub fn mh_step<M: LogDensity + ?Sized, R: Rng + ?Sized>(
    current: &[f64],
    log_current: f64,
    model: &M,
    proposal: &Proposal,
    rng: &mut R,
) -> (Vec<f64>, f64, bool) {
    let candidate = propose(current, proposal, rng);
    let log_candidate = model.log_density(&candidate);
    if accept(log_current, log_candidate, rng) {
        (candidate, log_candidate, true)
    } else {
        (current.to_vec(), log_current, false)
    }
}

/// Scale update from a window of accept/reject outcomes: shrink by 0.7 below
/// the target band, grow by 1.4 above it.
pub fn adapt_scale(window: &[bool], scale: f64) -> f64 {
    if window.is_empty() {
        return scale;
    }
    let rate = window.iter().filter(|&&a| a).count() as f64 / window.len() as f64;
    if rate < TARGET_ACCEPTANCE.0 {
        scale * 0.7
    } else if rate > TARGET_ACCEPTANCE.1 {
        scale * 1.4
    } else {
        scale
    }
}

/// Post-burn-in record of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<Vec<f64>>,
    pub log_posteriors: Vec<f64>,
    /// Outcome of the proposal that produced each retained sample.
    pub accepted: Vec<bool>,
    pub burn_in: usize,
    /// Accepted proposals during burn-in.
    pub burn_in_accepted: usize,
    pub seed: u64,
    pub stream: u64,
    pub initial: Vec<f64>,
    /// Proposal scale at the end of burn-in (and for all retained steps).
    pub scale: f64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    /// Accepted retained proposals.
    pub fn n_accepted(&self) -> usize {
        self.accepted.iter().filter(|&&a| a).count()
    }

    /// Retained proposals.
    pub fn n_proposed(&self) -> usize {
        self.accepted.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            0.0
        } else {
            self.n_accepted() as f64 / self.n_proposed() as f64
        }
    }

    pub fn mean_log_posterior(&self) -> f64 {
        if self.log_posteriors.is_empty() {
            return IMPOSSIBLE;
        }
        self.log_posteriors.iter().sum::<f64>() / self.log_posteriors.len() as f64
    }

    /// Values of coordinate `i` across retained samples.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[i]).collect()
    }
}

/// Runs `burn_in + n_samples` transitions from `init` and keeps the last
/// `n_samples`. The scale is adapted every [`ADAPT_WINDOW`] burn-in proposals
/// and frozen afterwards.
pub fn run_chain<M: LogDensity + ?Sized>(
    model: &M,
    proposal: &Proposal,
    init: &[f64],
    n_samples: usize,
    burn_in: usize,
    seed: u64,
    stream: u64,
) -> Result<Chain> {
    if init.len() != model.dim() || proposal.dim() != model.dim() {
        return Err(Error::Input(format!(
            "dimension mismatch: init {}, proposal {}, model {}",
            init.len(),
            proposal.dim(),
            model.dim()
        )));
    }
    let mut logp = model.log_density(init);
    if !logp.is_finite() {
        return Err(Error::Input(format!("initial state {init:?} has zero posterior density")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut kernel = proposal.clone();
    let mut current = init.to_vec();

    let mut window = Vec::with_capacity(ADAPT_WINDOW);
    let mut burn_in_accepted = 0;
    for _ in 0..burn_in {
        let (next, lp, ok) = mh_step(&current, logp, model, &kernel, &mut rng);
        current = next;
        logp = lp;
        burn_in_accepted += ok as usize;
        window.push(ok);
        if window.len() == ADAPT_WINDOW {
            kernel.scale = adapt_scale(&window, kernel.scale);
            window.clear();
        }
    }

    let mut samples = Vec::with_capacity(n_samples);
    let mut log_posteriors = Vec::with_capacity(n_samples);
    let mut accepted = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let (next, lp, ok) = mh_step(&current, logp, model, &kernel, &mut rng);
        current = next;
        logp = lp;
        samples.push(current.clone());
        log_posteriors.push(logp);
        accepted.push(ok);
    }
    Ok(Chain {
        samples,
        log_posteriors,
        accepted,
        burn_in,
        burn_in_accepted,
        seed,
        stream,
        initial: init.to_vec(),
        scale: kernel.scale,
    })
}

/// Chains from several starting points; `kept` indexes the chains that
/// survive the discard rule. Chains whose start had zero density are listed
/// in `failed` with the reason.
#[derive(Debug, Clone)]
pub struct MultiChainResult {
    pub chains: Vec<Chain>,
    pub kept: Vec<usize>,
    pub failed: Vec<(usize, String)>,
}

impl MultiChainResult {
    pub fn kept_chains(&self) -> impl Iterator<Item = &Chain> {
        self.kept.iter().map(move |&i| &self.chains[i])
    }

    pub fn discarded(&self) -> Vec<usize> {
        (0..self.chains.len()).filter(|i| !self.kept.contains(i)).collect()
    }
}

/// Indices whose mean log-posterior is within [`DISCARD_GAP`] of the best.
pub fn discard_rule(means: &[f64]) -> Vec<usize> {
    let best = means.iter().copied().filter(|m| m.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Vec::new();
    }
    means
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_finite() && **m >= best - DISCARD_GAP)
        .map(|(i, _)| i)
        .collect()
}

/// Runs one chain per init (in parallel), chain `i` with seed `seeds[i]` and
/// stream `i + 1`, then applies [`discard_rule`].
pub fn run_multichain<M: LogDensity + ?Sized>(
    model: &M,
    proposal: &Proposal,
    inits: &[Vec<f64>],
    n_samples: usize,
    burn_in: usize,
    seeds: &[u64],
) -> Result<MultiChainResult> {
    if inits.is_empty() || inits.len() != seeds.len() {
        return Err(Error::Input(format!(
            "need one seed per init, got {} inits and {} seeds",
            inits.len(),
            seeds.len()
        )));
    }
    let runs: Vec<Result<Chain>> = inits
        .par_iter()
        .zip(seeds.par_iter())
        .enumerate()
        .map(|(i, (init, &seed))| run_chain(model, proposal, init, n_samples, burn_in, seed, i as u64 + 1))
        .collect();

    let mut chains = Vec::new();
    let mut failed = Vec::new();
    let mut original = Vec::new();
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(c) => {
                chains.push(c);
                original.push(i);
            }
            Err(e) => failed.push((i, e.to_string())),
        }
    }
    if chains.is_empty() {
        return Err(Error::Input("every chain starts at a point of zero posterior density".into()));
    }
    let means: Vec<f64> = chains.iter().map(Chain::mean_log_posterior).collect();
    let kept = discard_rule(&means);
    Ok(MultiChainResult { chains, kept, failed })
}
