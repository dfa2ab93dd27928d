//! Output files: `report.json`, `table_*.csv` summaries and chain dumps.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use bellreg_core::inference::GofReport;
use bellreg_core::ModelKind;
use serde::{Deserialize, Serialize};

use crate::config::{Command, RunConfig};
use crate::simulate::SimResult;
use crate::workflow::{Fit, FitReport, Preference};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub path: PathBuf,
    pub n: usize,
    pub p: usize,
    pub names: Vec<String>,
}

/// The document written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: Command,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub dataset: Option<DatasetInfo>,
    pub gof: Vec<GofReport>,
    pub fits: Vec<FitReport>,
    pub preference: Option<Preference>,
    pub simulation: Option<SimResult>,
    /// Whether every fit passed the Gelman-Rubin gate.
    pub converged: bool,
}

impl RunReport {
    pub fn fit(&self, model: ModelKind) -> Option<&FitReport> {
        self.fits.iter().find(|f| f.model == model)
    }
}

fn create(dir: &Path, name: &str) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn write_report(dir: &Path, report: &RunReport) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = create(dir, "report.json")?;
    serde_json::to_writer_pretty(&mut out, report)?;
    writeln!(out)?;
    out.flush()
}

pub fn read_report(dir: &Path) -> io::Result<RunReport> {
    let text = fs::read_to_string(dir.join("report.json"))?;
    Ok(serde_json::from_str(&text)?)
}

fn fit_stem(fit: &FitReport, multi_prior: bool) -> String {
    if multi_prior {
        format!("{}_{}", fit.model, fit.prior_label)
    } else {
        fit.model.to_string()
    }
}

/// One `chain_<model>_<c>.csv` per chain; the prior label joins the stem
/// when several priors were fitted.
pub fn write_chains(dir: &Path, fits: &[Fit]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let multi_prior = fits.iter().any(|f| f.report.prior_label != fits[0].report.prior_label);
    let mut written = Vec::new();
    for fit in fits {
        let stem = fit_stem(&fit.report, multi_prior);
        for chain in &fit.chains.chains {
            let name = format!("chain_{stem}_{}.csv", chain.chain_index);
            let mut out = create(dir, &name)?;
            chain.write_csv(&fit.report.coefficient_names, &mut out)?;
            out.flush()?;
            written.push(dir.join(name));
        }
    }
    Ok(written)
}

/// One row per coefficient: mean, median, posterior sd and HPD bounds.
pub fn write_posterior_table<W: Write>(fits: &[FitReport], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model", "prior", "coefficient", "mean", "median", "psd", "hpd_lower", "hpd_upper", "rhat", "acf_lag20",
    ])?;
    for f in fits {
        for (j, c) in f.posterior.coefficients.iter().enumerate() {
            let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
            w.write_record([
                f.model.to_string(),
                f.prior_label.clone(),
                f.coefficient_names[j].clone(),
                c.mean.to_string(),
                c.median.to_string(),
                c.psd.to_string(),
                c.hpd_lower.to_string(),
                c.hpd_upper.to_string(),
                opt(f.diagnostics.rhat[j]),
                opt(f.diagnostics.acf_lag20[j]),
            ])?;
        }
    }
    w.flush()
}

pub fn write_criteria_table<W: Write>(fits: &[FitReport], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "prior", "lmpl", "dic", "eaic", "ebic"])?;
    for f in fits {
        let c = &f.criteria;
        w.write_record([
            f.model.to_string(),
            f.prior_label.clone(),
            c.lmpl.to_string(),
            c.dic.to_string(),
            c.eaic.to_string(),
            c.ebic.to_string(),
        ])?;
    }
    w.flush()
}

/// Observed and expected cell counts, one expected column per model,
/// followed by the test statistic rows.
pub fn write_gof_table<W: Write>(reports: &[GofReport], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["cell".to_string(), "observed".to_string()];
    header.extend(reports.iter().map(|r| format!("expected_{}", r.model)));
    w.write_record(&header)?;
    if let Some(first) = reports.first() {
        for (k, cell) in first.cells.iter().enumerate() {
            let mut row = vec![cell.label.clone(), cell.observed.to_string()];
            row.extend(reports.iter().map(|r| r.cells[k].expected.to_string()));
            w.write_record(&row)?;
        }
    }
    let mut stat_rows = [
        vec!["chi2".to_string(), String::new()],
        vec!["df".to_string(), String::new()],
        vec!["p_value".to_string(), String::new()],
    ];
    for r in reports {
        stat_rows[0].push(r.statistic.to_string());
        stat_rows[1].push(r.df.to_string());
        stat_rows[2].push(r.p_value.to_string());
    }
    for row in &stat_rows {
        w.write_record(row)?;
    }
    w.flush()
}

/// Averaged estimates per simulation cell and coefficient.
pub fn write_sim_estimates_table<W: Write>(sim: &SimResult, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n", "p", "prior", "coefficient", "truth", "mean", "psd", "hpd_lower", "hpd_upper", "coverage", "reps",
    ])?;
    for c in &sim.cells {
        // a cell without successful replications has no averages
        for j in 0..c.mean.len() {
            w.write_record([
                c.n.to_string(),
                c.p.to_string(),
                c.prior.clone(),
                format!("beta{}", j + 1),
                c.truth[j].to_string(),
                c.mean[j].to_string(),
                c.psd[j].to_string(),
                c.hpd_lower[j].to_string(),
                c.hpd_upper[j].to_string(),
                c.coverage[j].to_string(),
                c.reps_ok.to_string(),
            ])?;
        }
    }
    w.flush()
}

pub fn write_sim_errors_table<W: Write>(sim: &SimResult, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "p", "prior", "mse", "mae", "reps", "failures"])?;
    for c in &sim.cells {
        w.write_record([
            c.n.to_string(),
            c.p.to_string(),
            c.prior.clone(),
            c.mse.map_or(String::new(), |v| v.to_string()),
            c.mae.map_or(String::new(), |v| v.to_string()),
            c.reps_ok.to_string(),
            c.failures.len().to_string(),
        ])?;
    }
    w.flush()
}

/// Writes every table relevant to the report's contents.
pub fn write_tables(dir: &Path, report: &RunReport) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    if !report.fits.is_empty() {
        write_posterior_table(&report.fits, create(dir, "table_posterior.csv")?)?;
        write_criteria_table(&report.fits, create(dir, "table_criteria.csv")?)?;
    }
    if !report.gof.is_empty() {
        write_gof_table(&report.gof, create(dir, "table_gof.csv")?)?;
    }
    if let Some(sim) = &report.simulation {
        write_sim_estimates_table(sim, create(dir, "table_sim_estimates.csv")?)?;
        write_sim_errors_table(sim, create(dir, "table_sim_errors.csv")?)?;
    }
    Ok(())
}
