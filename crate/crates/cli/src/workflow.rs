//! Fitting, model comparison and goodness of fit on a loaded dataset.

use bellreg_core::inference::{self, CellGrouping, CriteriaReport, GofReport, InferenceError, PosteriorReport};
use bellreg_core::model::ModelError;
use bellreg_core::sampler::{self, SamplerError};
use bellreg_core::{ChainSet, McmcConfig, ModelKind, PriorSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PriorConfig;
use crate::data::LoadedData;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("{model} model: {source}")]
    Model {
        model: ModelKind,
        #[source]
        source: ModelError,
    },
    #[error("{model} model: {source}")]
    Sampler {
        model: ModelKind,
        #[source]
        source: SamplerError,
    },
    #[error("{model} model: {source}")]
    Inference {
        model: ModelKind,
        #[source]
        source: InferenceError,
    },
}

/// Lag at which the retained-draw autocorrelation is reported.
pub const ACF_LAG: usize = 20;

/// Convergence diagnostics; `None` marks a statistic that is undefined, as
/// with a single chain or a chain that never moved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Gelman-Rubin statistic per coefficient.
    pub rhat: Vec<Option<f64>>,
    /// Largest absolute lag-1 autocorrelation over chains, per coefficient.
    pub acf_lag1: Vec<Option<f64>>,
    /// Largest absolute lag-20 autocorrelation over chains, per coefficient.
    pub acf_lag20: Vec<Option<f64>>,
}

impl Diagnostics {
    pub fn compute(chains: &ChainSet) -> Self {
        let dim = chains.dim();
        let max_abs_acf = |j: usize, lag: usize| {
            chains
                .chains
                .iter()
                .map(|c| sampler::autocorrelation(&c.coordinate(j), lag).ok().map(|r| r[lag].abs()))
                .try_fold(0.0, |acc: f64, v| v.map(|v| acc.max(v)))
        };
        Self {
            rhat: (0..dim).map(|j| sampler::gelman_rubin(chains, j).ok()).collect(),
            acf_lag1: (0..dim).map(|j| max_abs_acf(j, 1)).collect(),
            acf_lag20: (0..dim).map(|j| max_abs_acf(j, ACF_LAG)).collect(),
        }
    }

    /// Largest R-hat, `f64::MAX` when any is undefined and `None` with one
    /// chain. A finite sentinel keeps reports valid JSON.
    pub fn max_rhat(&self, n_chains: usize) -> Option<f64> {
        if n_chains < 2 {
            return None;
        }
        Some(
            self.rhat
                .iter()
                .map(|r| r.unwrap_or(f64::MAX))
                .fold(f64::NEG_INFINITY, f64::max),
        )
    }
}

/// Everything reported about one posterior fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ModelKind,
    pub prior_label: String,
    pub prior: PriorSpec,
    pub coefficient_names: Vec<String>,
    pub seed: u64,
    pub n_chains: usize,
    pub retained_per_chain: usize,
    pub total_draws: usize,
    pub accept_rates: Vec<f64>,
    pub proposal_scales: Vec<f64>,
    pub posterior: PosteriorReport,
    pub criteria: CriteriaReport,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
}

pub struct Fit {
    pub report: FitReport,
    pub chains: ChainSet,
}

pub fn fit_model(
    data: &LoadedData,
    kind: ModelKind,
    prior: &PriorConfig,
    mcmc: &McmcConfig,
    level: f64,
) -> Result<Fit, FitError> {
    let dataset = &data.dataset;
    let spec = prior
        .resolve(dataset.p())
        .map_err(|source| FitError::Model { model: kind, source })?;
    let chains = sampler::run_chains(kind, &spec, dataset, mcmc)
        .map_err(|source| FitError::Sampler { model: kind, source })?;
    let wrap = |source| FitError::Inference { model: kind, source };
    let table = dataset
        .bell_table()
        .map_err(|source| FitError::Model { model: kind, source })?;
    let posterior = inference::summarize(&chains, level).map_err(wrap)?;
    let criteria = inference::criteria(kind, dataset, &chains, &table).map_err(wrap)?;
    let warnings = chains
        .chains
        .iter()
        .flat_map(|c| c.warnings.iter().map(move |w| format!("chain {}: {w}", c.chain_index)))
        .collect();
    let report = FitReport {
        model: kind,
        prior_label: prior.label(),
        prior: spec,
        coefficient_names: data.names.clone(),
        seed: mcmc.seed,
        n_chains: chains.n_chains(),
        retained_per_chain: chains.retained_per_chain(),
        total_draws: chains.total_draws(),
        accept_rates: chains.accept_rates(),
        proposal_scales: chains.chains.iter().map(|c| c.scale).collect(),
        posterior,
        criteria,
        diagnostics: Diagnostics::compute(&chains),
        warnings,
    };
    Ok(Fit { report, chains })
}

pub fn gof_reports(data: &LoadedData, grouping: CellGrouping) -> Result<Vec<GofReport>, FitError> {
    [ModelKind::Bell, ModelKind::Poisson]
        .into_iter()
        .map(|kind| {
            inference::chisq_gof(data.dataset.y(), kind, grouping)
                .map_err(|source| FitError::Inference { model: kind, source })
        })
        .collect()
}

/// Which model each criterion prefers: larger LMPL, smaller DIC, EAIC, EBIC.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preference {
    pub lmpl: ModelKind,
    pub dic: ModelKind,
    pub eaic: ModelKind,
    pub ebic: ModelKind,
}

impl Preference {
    pub fn between(a: &FitReport, b: &FitReport) -> Self {
        let pick = |a_better: bool| if a_better { a.model } else { b.model };
        let (ca, cb) = (&a.criteria, &b.criteria);
        Self {
            lmpl: pick(ca.lmpl > cb.lmpl),
            dic: pick(ca.dic < cb.dic),
            eaic: pick(ca.eaic < cb.eaic),
            ebic: pick(ca.ebic < cb.ebic),
        }
    }

    pub fn unanimous(&self) -> Option<ModelKind> {
        let all = [self.lmpl, self.dic, self.eaic, self.ebic];
        all.iter().all(|&m| m == all[0]).then_some(all[0])
    }
}
