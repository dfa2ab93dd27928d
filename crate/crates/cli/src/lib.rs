//! Batch front end for Bayesian Bell regression: CSV ingestion, JSON run
//! configuration, the simulation study, Bell-versus-Poisson comparison and
//! report emission.

pub mod config;
pub mod data;
pub mod report;
pub mod simulate;
pub mod workflow;

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::config::{Command, ConfigError, Overrides, RunConfig};
use crate::data::{DataError, LoadedData};
use crate::report::{DatasetInfo, RunReport};
use crate::simulate::SimError;
use crate::workflow::{Fit, FitError, Preference};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_UNCONVERGED: u8 = 4;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Data(_) | Self::Io(_) => EXIT_INPUT,
            Self::Fit(_) | Self::Sim(_) => EXIT_NUMERICAL,
        }
    }
}

/// Reads the optional JSON file, applies overrides and validates.
pub fn load_config(path: Option<&Path>, command: Command, overrides: &Overrides) -> Result<RunConfig, RunError> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| DataError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            config::parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    config.command = Some(command);
    config.apply(overrides);
    config.validate()?;
    Ok(config)
}

fn load_data(config: &RunConfig) -> Result<(LoadedData, DatasetInfo), RunError> {
    let path = config
        .data_path
        .as_deref()
        .ok_or_else(|| ConfigError::Invalid("no data path".into()))?;
    let data = data::load_dataset(path, &config.data)?;
    let info = DatasetInfo {
        path: path.to_path_buf(),
        n: data.dataset.n(),
        p: data.dataset.p(),
        names: data.names.clone(),
    };
    Ok((data, info))
}

/// Result of a run: the report plus the fitted chains, if any.
pub struct RunOutput {
    pub report: RunReport,
    pub fits: Vec<Fit>,
}

impl RunOutput {
    /// Exit status under the convergence gate.
    pub fn exit_code(&self) -> u8 {
        if self.report.converged || self.report.config.allow_unconverged {
            EXIT_OK
        } else {
            EXIT_UNCONVERGED
        }
    }
}

fn gate(config: &RunConfig, max_rhats: impl IntoIterator<Item = Option<f64>>) -> bool {
    max_rhats
        .into_iter()
        .flatten()
        .all(|r| r <= config.rhat_threshold)
}

/// Runs the configured command in memory.
pub fn execute(config: &RunConfig) -> Result<RunOutput, RunError> {
    let command = config
        .command
        .ok_or_else(|| ConfigError::Invalid("no command given".into()))?;
    let mut report = RunReport {
        command,
        seed: config.seed,
        config_hash: config.hash(),
        config: config.clone(),
        dataset: None,
        gof: Vec::new(),
        fits: Vec::new(),
        preference: None,
        simulation: None,
        converged: true,
    };
    let mut fits = Vec::new();
    let mcmc = config.mcmc_config();
    match command {
        Command::Gof => {
            let (data, info) = load_data(config)?;
            report.gof = workflow::gof_reports(&data, config.gof)?;
            report.dataset = Some(info);
        }
        Command::Fit | Command::Compare => {
            let (data, info) = load_data(config)?;
            let priors = if command == Command::Fit {
                config.fit_priors()
            } else {
                vec![config.prior]
            };
            for prior in &priors {
                for kind in config.model.kinds() {
                    fits.push(workflow::fit_model(&data, kind, prior, &mcmc, config.level)?);
                }
            }
            if command == Command::Compare {
                report.gof = workflow::gof_reports(&data, config.gof)?;
                if let [a, b] = fits.as_slice() {
                    report.preference = Some(Preference::between(&a.report, &b.report));
                }
            }
            report.fits = fits.iter().map(|f| f.report.clone()).collect();
            report.converged = gate(
                config,
                fits.iter().map(|f| f.report.diagnostics.max_rhat(f.report.n_chains)),
            );
            report.dataset = Some(info);
        }
        Command::Simulate => {
            let sim = simulate::run_simulation_study(&config.sim, &mcmc, config.level, &report.config_hash)?;
            report.converged = gate(
                config,
                sim.cells.iter().flat_map(|c| c.reps.iter().map(|r| r.max_rhat)),
            );
            report.simulation = Some(sim);
        }
    }
    Ok(RunOutput { report, fits })
}

/// Runs the command and writes `report.json`, the tables and chain dumps
/// under the configured output directory.
pub fn run(config: &RunConfig) -> Result<RunOutput, RunError> {
    let out = execute(config)?;
    let dir = &config.output_dir;
    report::write_report(dir, &out.report)?;
    report::write_tables(dir, &out.report)?;
    if !out.fits.is_empty() {
        report::write_chains(dir, &out.fits)?;
    }
    Ok(out)
}
