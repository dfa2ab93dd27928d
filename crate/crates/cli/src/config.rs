//! Run configuration: one JSON document plus command-line overrides.
//!
//! Defaults reproduce the mine-fracture analysis.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use bellreg_core::inference::CellGrouping;
use bellreg_core::model::ModelError;
use bellreg_core::sampler::ProposalSpec;
use bellreg_core::{McmcConfig, ModelKind, PriorSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::DatasetOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fit,
    Simulate,
    Gof,
    Compare,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fit => "fit",
            Self::Simulate => "simulate",
            Self::Gof => "gof",
            Self::Compare => "compare",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Bell,
    Poisson,
    #[default]
    Both,
}

impl ModelChoice {
    pub fn kinds(self) -> Vec<ModelKind> {
        match self {
            Self::Bell => vec![ModelKind::Bell],
            Self::Poisson => vec![ModelKind::Poisson],
            Self::Both => vec![ModelKind::Bell, ModelKind::Poisson],
        }
    }
}

/// Prior hyperparameters; the G-prior's `M` and `g` follow from `a_mu`,
/// `b_mu` and the design width unless `m` is pinned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PriorConfig {
    Gprior {
        #[serde(default = "default_a_mu")]
        a_mu: f64,
        #[serde(default = "default_b_mu")]
        b_mu: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<f64>,
    },
    Flat {
        #[serde(default = "default_tau")]
        tau: f64,
    },
}

fn default_a_mu() -> f64 {
    PriorSpec::DEFAULT_A_MU
}

fn default_b_mu() -> f64 {
    PriorSpec::DEFAULT_B_MU
}

fn default_tau() -> f64 {
    PriorSpec::DEFAULT_TAU
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self::gprior()
    }
}

impl PriorConfig {
    pub fn gprior() -> Self {
        Self::Gprior {
            a_mu: default_a_mu(),
            b_mu: default_b_mu(),
            m: None,
        }
    }

    pub fn flat() -> Self {
        Self::Flat { tau: default_tau() }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Gprior { .. } => "gprior",
            Self::Flat { .. } => "flat",
        }
    }

    /// Short label that tells sweep variants apart.
    pub fn label(&self) -> String {
        match *self {
            Self::Gprior { m: Some(m), .. } => format!("gprior_m{m}"),
            Self::Gprior { .. } => "gprior".into(),
            Self::Flat { tau } if tau == default_tau() => "flat".into(),
            Self::Flat { tau } => format!("flat_tau{tau}"),
        }
    }

    pub fn resolve(&self, p: usize) -> Result<PriorSpec, ModelError> {
        match *self {
            Self::Flat { tau } => PriorSpec::flat_normal(tau),
            Self::Gprior { a_mu, b_mu, m } => {
                let spec = PriorSpec::g_prior(a_mu, b_mu, p)?;
                match (spec, m) {
                    (PriorSpec::GPrior { a_mu, b_mu, g, .. }, Some(m)) => {
                        if !m.is_finite() {
                            return Err(ModelError::InvalidPrior(format!("M must be finite, got {m}")));
                        }
                        Ok(PriorSpec::GPrior { a_mu, b_mu, m, g })
                    }
                    (spec, _) => Ok(spec),
                }
            }
        }
    }
}

impl FromStr for PriorConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gprior" | "g-prior" | "g" => Ok(Self::gprior()),
            "flat" | "flat-normal" | "flat_normal" => Ok(Self::flat()),
            other => Err(format!("unknown prior {other:?}; expected gprior or flat")),
        }
    }
}

/// Sampler settings; the seed lives at the top level of [`RunConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSettings {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub proposal: ProposalSpec,
}

impl Default for McmcSettings {
    fn default() -> Self {
        let d = McmcConfig::default();
        Self {
            n_iter: d.n_iter,
            burn_in: d.burn_in,
            thin: d.thin,
            n_chains: d.n_chains,
            proposal: d.proposal,
        }
    }
}

impl McmcSettings {
    pub fn with_seed(&self, seed: u64) -> McmcConfig {
        McmcConfig {
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            thin: self.thin,
            n_chains: self.n_chains,
            seed,
            proposal: self.proposal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub n_reps: usize,
    /// Truth for every `p` in the grid; `None` uses `(0, -0.5, 1, ..., 1)`.
    pub beta_truth: Option<Vec<f64>>,
    pub priors: Vec<PriorConfig>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: vec![50, 100, 200],
            p: vec![3, 6],
            n_reps: 20,
            beta_truth: None,
            priors: vec![PriorConfig::gprior(), PriorConfig::flat()],
        }
    }
}

/// Prior sensitivity grid for `fit`: every `tau` runs a flat-normal fit and
/// every `m` a G-prior fit with the intercept mean pinned.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub tau: Vec<f64>,
    pub m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub data_path: Option<PathBuf>,
    pub data: DatasetOptions,
    pub model: ModelChoice,
    pub prior: PriorConfig,
    pub mcmc: McmcSettings,
    pub seed: u64,
    /// Credibility of the reported HPD intervals.
    pub level: f64,
    pub gof: CellGrouping,
    pub sim: SimConfig,
    pub sweep: SweepConfig,
    /// Largest tolerated Gelman-Rubin statistic.
    pub rhat_threshold: f64,
    pub allow_unconverged: bool,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            data_path: None,
            data: DatasetOptions::default(),
            model: ModelChoice::Both,
            prior: PriorConfig::gprior(),
            mcmc: McmcSettings::default(),
            seed: 0,
            level: 0.95,
            gof: CellGrouping::default(),
            sim: SimConfig::default(),
            sweep: SweepConfig::default(),
            rhat_threshold: 1.1,
            allow_unconverged: false,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Command-line values that replace configuration entries when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub model: Option<ModelChoice>,
    pub prior: Option<PriorConfig>,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub chains: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub reps: Option<usize>,
    pub n: Option<Vec<usize>>,
    pub p: Option<Vec<usize>>,
    pub allow_unconverged: bool,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.data {
            self.data_path = Some(v.clone());
        }
        if let Some(v) = o.model {
            self.model = v;
        }
        if let Some(v) = o.prior {
            self.prior = v;
        }
        if let Some(v) = o.iters {
            self.mcmc.n_iter = v;
        }
        if let Some(v) = o.burnin {
            self.mcmc.burn_in = v;
        }
        if let Some(v) = o.thin {
            self.mcmc.thin = v;
        }
        if let Some(v) = o.chains {
            self.mcmc.n_chains = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.output_dir = v.clone();
        }
        if let Some(v) = o.reps {
            self.sim.n_reps = v;
        }
        if let Some(v) = &o.n {
            self.sim.n = v.clone();
        }
        if let Some(v) = &o.p {
            self.sim.p = v.clone();
        }
        self.allow_unconverged |= o.allow_unconverged;
    }

    pub fn mcmc_config(&self) -> McmcConfig {
        self.mcmc.with_seed(self.seed)
    }

    /// Checks the fields the chosen command depends on.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let command = self.command.ok_or_else(|| invalid("no command given"))?;
        self.mcmc_config()
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(invalid(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if !(self.rhat_threshold >= 1.0) {
            return Err(invalid(format!("rhat_threshold must be at least 1, got {}", self.rhat_threshold)));
        }
        if self.gof.top == 0 || self.gof.top > 1000 {
            return Err(invalid(format!("gof.top must lie in 1..=1000, got {}", self.gof.top)));
        }
        match self.prior {
            PriorConfig::Flat { tau } if !(tau.is_finite() && tau > 0.0) => {
                return Err(invalid(format!("tau must be positive, got {tau}")));
            }
            PriorConfig::Gprior { a_mu, b_mu, m } => {
                if !(a_mu.is_finite() && a_mu > 0.0 && b_mu.is_finite() && b_mu > 0.0) {
                    return Err(invalid("a_mu and b_mu must be positive"));
                }
                if m.is_some_and(|m| !m.is_finite()) {
                    return Err(invalid("M must be finite"));
                }
            }
            PriorConfig::Flat { .. } => {}
        }
        if self.sweep.tau.iter().any(|t| !(t.is_finite() && *t > 0.0)) || self.sweep.m.iter().any(|m| !m.is_finite()) {
            return Err(invalid("sweep values must be finite and tau positive"));
        }
        match command {
            Command::Fit | Command::Gof | Command::Compare if self.data_path.is_none() => {
                Err(invalid(format!("{command} needs a data path")))
            }
            Command::Simulate => self.validate_sim(),
            _ => Ok(()),
        }
    }

    fn validate_sim(&self) -> Result<(), ConfigError> {
        let s = &self.sim;
        if s.n.is_empty() || s.p.is_empty() || s.priors.is_empty() {
            return Err(invalid("simulation grid needs at least one n, p and prior"));
        }
        if s.n_reps == 0 {
            return Err(invalid("sim.n_reps must be positive"));
        }
        for &p in &s.p {
            if p < 2 {
                return Err(invalid(format!("simulation p must be at least 2, got {p}")));
            }
            if let Some(t) = &s.beta_truth {
                if t.len() != p {
                    return Err(invalid(format!("beta_truth has {} entries but p = {p}", t.len())));
                }
            }
        }
        if let Some(&n) = s.n.iter().find(|&&n| s.p.iter().any(|&p| n <= p)) {
            return Err(invalid(format!("simulation n = {n} must exceed every p")));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let canonical = serde_json::to_vec(&c).expect("configuration serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// Prior variants a `fit` runs: the configured prior, then the sweep.
    pub fn fit_priors(&self) -> Vec<PriorConfig> {
        let mut out = vec![self.prior];
        out.extend(self.sweep.tau.iter().map(|&tau| PriorConfig::Flat { tau }));
        let (a_mu, b_mu) = match self.prior {
            PriorConfig::Gprior { a_mu, b_mu, .. } => (a_mu, b_mu),
            PriorConfig::Flat { .. } => (default_a_mu(), default_b_mu()),
        };
        out.extend(self.sweep.m.iter().map(|&m| PriorConfig::Gprior { a_mu, b_mu, m: Some(m) }));
        out
    }
}

/// Parses a JSON configuration. Structural validation is deferred to
/// [`RunConfig::validate`] so that overrides can fill gaps first.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    Ok(serde_json::from_str(text)?)
}
