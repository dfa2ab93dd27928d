//! Random-walk Metropolis-Hastings with burn-in, thinning and an optional
//! Robbins-Monro scale adaptation, plus multi-chain execution and the
//! Gelman-Rubin and autocorrelation diagnostics.
//!
//! A proposal is `beta' = beta + s L z` with `z ~ N(0, I)`, where `L L'` is
//! either the identity or `n (X'X)^-1`. During burn-in the scalar `s` may be
//! adapted towards a target acceptance rate; it is frozen afterwards so that
//! every retained draw comes from a fixed-kernel chain.

use std::io::{self, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, Dataset, LogDensity, ModelError, ModelKind, Posterior, PriorSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("invalid MCMC configuration: {0}")]
    Config(String),
    #[error("chain {chain}: log-posterior at the starting point is not finite")]
    NonFiniteStart { chain: usize },
    #[error("need at least {needed} {what}, got {got}")]
    TooFew { what: &'static str, needed: usize, got: usize },
    #[error("coordinate {coordinate} out of range for dimension {dim}")]
    Coordinate { coordinate: usize, dim: usize },
    #[error("{0}: the draws have zero variance, the statistic is undefined")]
    ZeroVariance(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScaleMode {
    FixedScale { sigma: f64 },
    Adaptive { target_accept: f64, initial_sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceShape {
    Identity,
    GramInverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    pub mode: ScaleMode,
    pub covariance_shape: CovarianceShape,
}

impl Default for ProposalSpec {
    fn default() -> Self {
        Self {
            mode: ScaleMode::Adaptive {
                target_accept: 0.234,
                initial_sigma: 0.1,
            },
            covariance_shape: CovarianceShape::GramInverse,
        }
    }
}

impl ProposalSpec {
    pub fn validate(&self) -> Result<(), SamplerError> {
        match self.mode {
            ScaleMode::FixedScale { sigma } if !(sigma.is_finite() && sigma > 0.0) => {
                Err(SamplerError::Config(format!("sigma must be positive, got {sigma}")))
            }
            ScaleMode::Adaptive {
                target_accept,
                initial_sigma,
            } => {
                if !(target_accept > 0.1 && target_accept < 0.6) {
                    return Err(SamplerError::Config(format!(
                        "target_accept must lie in (0.1, 0.6), got {target_accept}"
                    )));
                }
                if !(initial_sigma.is_finite() && initial_sigma > 0.0) {
                    return Err(SamplerError::Config(format!(
                        "initial_sigma must be positive, got {initial_sigma}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
    pub proposal: ProposalSpec,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 50_000,
            burn_in: 10_000,
            thin: 20,
            n_chains: 2,
            seed: 0,
            proposal: ProposalSpec::default(),
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n_iter == 0 {
            return Err(SamplerError::Config("n_iter must be positive".into()));
        }
        if self.burn_in >= self.n_iter {
            return Err(SamplerError::Config(format!(
                "burn_in ({}) must be smaller than n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(SamplerError::Config("thin must be at least 1".into()));
        }
        if self.n_chains == 0 {
            return Err(SamplerError::Config("n_chains must be at least 1".into()));
        }
        self.proposal.validate()
    }

    /// `floor((n_iter - burn_in) / thin)`.
    pub fn retained_per_chain(&self) -> usize {
        self.n_iter.saturating_sub(self.burn_in) / self.thin.max(1)
    }
}

/// Retained output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub chain_index: usize,
    pub draws: Vec<DVector<f64>>,
    pub log_posterior: Vec<f64>,
    /// 1-based iteration number of each retained draw.
    pub iterations: Vec<usize>,
    /// Acceptance rate over the post-burn-in iterations.
    pub accept_rate: f64,
    /// Proposal scale in force after burn-in.
    pub scale: f64,
    pub start: DVector<f64>,
    pub warnings: Vec<String>,
}

impl Chain {
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    /// Writes `iteration, beta_0.., log_posterior` rows with a header.
    pub fn write_csv<W: Write>(&self, names: &[String], mut out: W) -> io::Result<()> {
        write!(out, "iteration")?;
        for name in names {
            write!(out, ",{name}")?;
        }
        writeln!(out, ",log_posterior")?;
        for ((it, draw), lp) in self.iterations.iter().zip(&self.draws).zip(&self.log_posterior) {
            write!(out, "{it}")?;
            for v in draw.iter() {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{lp}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    pub chains: Vec<Chain>,
}

impl ChainSet {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn dim(&self) -> usize {
        self.chains
            .first()
            .and_then(|c| c.draws.first())
            .map_or(0, |d| d.len())
    }

    pub fn retained_per_chain(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).min().unwrap_or(0)
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    /// Draws of every chain, chain by chain.
    pub fn pooled(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.chains.iter().flat_map(|c| c.draws.iter())
    }

    pub fn pooled_coordinate(&self, j: usize) -> Vec<f64> {
        self.pooled().map(|d| d[j]).collect()
    }

    pub fn pooled_mean(&self) -> DVector<f64> {
        let mut sum = DVector::zeros(self.dim());
        for d in self.pooled() {
            sum += d;
        }
        sum / self.total_draws() as f64
    }

    pub fn accept_rates(&self) -> Vec<f64> {
        self.chains.iter().map(|c| c.accept_rate).collect()
    }
}

/// The random stream of chain `chain_index`: ChaCha8 keyed by `seed` on
/// stream `chain_index`.
pub fn chain_rng(seed: u64, chain_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_index as u64);
    rng
}

/// Overdispersed start: `center +- 0.5 * scale_j`, with the sign pattern
/// chosen by `chain_index` (chain 0 all plus, chain 1 all minus, further
/// chains alternate across coordinates).
pub fn starting_point(center: &DVector<f64>, scales: &DVector<f64>, chain_index: usize) -> DVector<f64> {
    DVector::from_fn(center.len(), |j, _| {
        let flip = (chain_index + (chain_index / 2) * j) % 2 == 1;
        let sign = if flip { -1.0 } else { 1.0 };
        center[j] + sign * 0.5 * scales[j]
    })
}

/// Proposal factor `L` and per-coordinate start scales for a dataset.
pub fn proposal_geometry(
    dataset: &Dataset,
    shape: CovarianceShape,
) -> Result<(DMatrix<f64>, DVector<f64>), SamplerError> {
    let p = dataset.p();
    let chol = model::gram_cholesky(dataset);
    let cov = match &chol {
        Ok(c) => Some(c.inverse() * dataset.n() as f64),
        Err(_) => None,
    };
    let scales = match &cov {
        Some(c) => c.diagonal().map(f64::sqrt),
        None => DVector::from_element(p, 1.0),
    };
    let factor = match shape {
        CovarianceShape::Identity => DMatrix::identity(p, p),
        CovarianceShape::GramInverse => {
            let cov = cov.ok_or(ModelError::SingularGram)?;
            Cholesky::<f64, Dyn>::new(cov).ok_or(ModelError::SingularGram)?.l()
        }
    };
    Ok((factor, scales))
}

const ADAPT_DECAY: f64 = 0.6;
const LOW_ACCEPT_WARNING: f64 = 0.01;

/// Runs one chain against an arbitrary target.
pub fn run_chain_on<T: LogDensity + ?Sized>(
    target: &T,
    factor: &DMatrix<f64>,
    start: DVector<f64>,
    config: &McmcConfig,
    chain_index: usize,
) -> Result<Chain, SamplerError> {
    config.validate()?;
    let dim = target.dim();
    if start.len() != dim || factor.shape() != (dim, dim) {
        return Err(SamplerError::Config(format!(
            "start/factor dimensions do not match target dimension {dim}"
        )));
    }
    let mut rng = chain_rng(config.seed, chain_index);
    let mut current = start.clone();
    let mut current_lp = target.log_density(&current);
    if !current_lp.is_finite() {
        return Err(SamplerError::NonFiniteStart { chain: chain_index });
    }

    let (mut log_scale, adapt_target) = match config.proposal.mode {
        ScaleMode::FixedScale { sigma } => (sigma.ln(), None),
        ScaleMode::Adaptive {
            target_accept,
            initial_sigma,
        } => (initial_sigma.ln(), Some(target_accept)),
    };

    let m = config.retained_per_chain();
    let mut draws = Vec::with_capacity(m);
    let mut log_posterior = Vec::with_capacity(m);
    let mut iterations = Vec::with_capacity(m);
    let mut accepted = 0usize;
    let mut z = DVector::zeros(dim);
    let mut scale = log_scale.exp();

    for iter in 0..config.n_iter {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let proposal = &current + (factor * &z) * scale;
        let proposal_lp = target.log_density(&proposal);
        let log_alpha = if proposal_lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            (proposal_lp - current_lp).min(0.0)
        };
        let u: f64 = rng.random();
        let accept = u.ln() < log_alpha;
        if accept {
            current = proposal;
            current_lp = proposal_lp;
        }

        if iter < config.burn_in {
            if let Some(target_accept) = adapt_target {
                let step = (iter as f64 + 1.0).powf(-ADAPT_DECAY);
                log_scale += step * (log_alpha.exp() - target_accept);
                scale = log_scale.exp();
            }
            continue;
        }
        if accept {
            accepted += 1;
        }
        let kept = iter + 1 - config.burn_in;
        if kept.is_multiple_of(config.thin) {
            draws.push(current.clone());
            log_posterior.push(current_lp);
            iterations.push(iter + 1);
        }
    }

    let post = config.n_iter - config.burn_in;
    let accept_rate = accepted as f64 / post as f64;
    let mut warnings = Vec::new();
    if accept_rate < LOW_ACCEPT_WARNING {
        warnings.push(format!(
            "chain {chain_index}: acceptance rate {accept_rate:.4} is below {LOW_ACCEPT_WARNING}"
        ));
    }
    Ok(Chain {
        chain_index,
        draws,
        log_posterior,
        iterations,
        accept_rate,
        scale,
        start,
        warnings,
    })
}

/// Runs `config.n_chains` chains against `target` from overdispersed starts.
pub fn run_chains_on<T: LogDensity + ?Sized>(
    target: &T,
    factor: &DMatrix<f64>,
    center: &DVector<f64>,
    start_scales: &DVector<f64>,
    config: &McmcConfig,
) -> Result<ChainSet, SamplerError> {
    config.validate()?;
    let chains = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain_on(target, factor, starting_point(center, start_scales, c), config, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ChainSet { chains })
}

/// One chain of the regression posterior.
pub fn run_chain(
    kind: ModelKind,
    prior: &PriorSpec,
    dataset: &Dataset,
    config: &McmcConfig,
    chain_index: usize,
) -> Result<Chain, SamplerError> {
    let table = dataset.bell_table()?;
    let posterior = Posterior::new(kind, prior, dataset, &table)?;
    let (factor, scales) = proposal_geometry(dataset, config.proposal.covariance_shape)?;
    let start = starting_point(&DVector::zeros(dataset.p()), &scales, chain_index);
    run_chain_on(&posterior, &factor, start, config, chain_index)
}

/// `config.n_chains` independent chains of the regression posterior.
pub fn run_chains(
    kind: ModelKind,
    prior: &PriorSpec,
    dataset: &Dataset,
    config: &McmcConfig,
) -> Result<ChainSet, SamplerError> {
    let table = dataset.bell_table()?;
    let posterior = Posterior::new(kind, prior, dataset, &table)?;
    let (factor, scales) = proposal_geometry(dataset, config.proposal.covariance_shape)?;
    run_chains_on(&posterior, &factor, &DVector::zeros(dataset.p()), &scales, config)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Potential scale reduction factor of coordinate `coordinate`:
/// `sqrt(((m - 1)/m W + B/m) / W)`, with `W` the mean within-chain variance
/// and `B` the between-chain variance of chain means times `m`.
pub fn gelman_rubin(chains: &ChainSet, coordinate: usize) -> Result<f64, SamplerError> {
    if chains.n_chains() < 2 {
        return Err(SamplerError::TooFew {
            what: "chains",
            needed: 2,
            got: chains.n_chains(),
        });
    }
    let m = chains.retained_per_chain();
    if m < 2 {
        return Err(SamplerError::TooFew {
            what: "draws per chain",
            needed: 2,
            got: m,
        });
    }
    if coordinate >= chains.dim() {
        return Err(SamplerError::Coordinate {
            coordinate,
            dim: chains.dim(),
        });
    }
    let stats: Vec<(f64, f64)> = chains
        .chains
        .iter()
        .map(|c| mean_var(&c.coordinate(coordinate)[..m]))
        .collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let within = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    if within == 0.0 {
        return Err(SamplerError::ZeroVariance("gelman_rubin"));
    }
    let mf = m as f64;
    let between = mf * mean_var(&means).1;
    Ok((((mf - 1.0) / mf * within + between / mf) / within).sqrt())
}

/// Sample autocorrelations at lags `0..=max_lag`, normalized by the lag-0
/// autocovariance.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Result<Vec<f64>, SamplerError> {
    if x.len() <= max_lag {
        return Err(SamplerError::TooFew {
            what: "draws (more than max_lag)",
            needed: max_lag + 1,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Err(SamplerError::ZeroVariance("autocorrelation"));
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                centered.iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / c0
            }
        })
        .collect())
}
