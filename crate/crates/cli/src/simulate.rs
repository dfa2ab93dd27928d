//! Synthetic data generation and the replicated simulation study.

use std::collections::BTreeMap;

use bellreg_core::inference::{self, InferenceError};
use bellreg_core::model::ModelError;
use bellreg_core::sampler::{self, SamplerError};
use bellreg_core::{bell, BellParam, Dataset, McmcConfig, ModelKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{PriorConfig, SimConfig};
use crate::workflow::Diagnostics;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("beta_truth has {got} entries, expected p = {expected}")]
    TruthLength { expected: usize, got: usize },
    #[error("mean {mu} at simulated row {row} is not a valid Bell mean")]
    Mean { row: usize, mu: f64 },
    #[error(transparent)]
    Bell(#[from] bell::BellError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// `(0, -0.5, 1, ..., 1)` of length `p`.
pub fn default_truth(p: usize) -> Vec<f64> {
    (0..p)
        .map(|j| match j {
            0 => 0.0,
            1 => -0.5,
            _ => 1.0,
        })
        .collect()
}

/// Intercept plus `p - 1` standard normal covariates; `y_i` is Bell with
/// mean `exp(x_i' beta)`.
pub fn simulate_dataset<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    beta_truth: &[f64],
    rng: &mut R,
) -> Result<Dataset, SimError> {
    if beta_truth.len() != p {
        return Err(SimError::TruthLength {
            expected: p,
            got: beta_truth.len(),
        });
    }
    let mut covariates = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for row in 0..n {
        let x: Vec<f64> = (1..p).map(|_| rng.sample(StandardNormal)).collect();
        let eta = beta_truth[0] + x.iter().zip(&beta_truth[1..]).map(|(a, b)| a * b).sum::<f64>();
        let mu = eta.exp();
        let theta = BellParam::from_mean(mu).map_err(|_| SimError::Mean { row, mu })?;
        y.push(bell::sample(theta, rng)?);
        covariates.push(x);
    }
    Ok(Dataset::with_intercept(y, &covariates)?)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a sequence of keys into an independent seed.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

fn tag_key(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of the simulated dataset for one replication. It does not depend on
/// the prior, so every prior in a cell is fitted to the same datasets.
pub fn data_seed(master: u64, n: usize, p: usize, rep: usize) -> u64 {
    derive_seed(master, &[n as u64, p as u64, rep as u64])
}

/// Seed of the chains for one (cell, prior, replication).
pub fn chain_seed(master: u64, n: usize, p: usize, prior_tag: &str, rep: usize) -> u64 {
    derive_seed(master, &[n as u64, p as u64, tag_key(prior_tag), rep as u64])
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: usize,
    pub mean: Vec<f64>,
    pub psd: Vec<f64>,
    pub hpd_lower: Vec<f64>,
    pub hpd_upper: Vec<f64>,
    pub covered: Vec<bool>,
    pub mse: f64,
    pub mae: f64,
    pub accept_rates: Vec<f64>,
    /// Largest R-hat over coefficients, `f64::MAX` when one is undefined.
    pub max_rhat: Option<f64>,
    /// Largest absolute lag-20 autocorrelation over chains and coefficients.
    pub max_acf_lag20: Option<f64>,
}

/// Averages over the successful replications of one (n, p, prior) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub n: usize,
    pub p: usize,
    pub prior: String,
    pub truth: Vec<f64>,
    pub reps_requested: usize,
    pub reps_ok: usize,
    pub mean: Vec<f64>,
    pub psd: Vec<f64>,
    pub hpd_lower: Vec<f64>,
    pub hpd_upper: Vec<f64>,
    /// Fraction of replications whose HPD interval holds the truth.
    pub coverage: Vec<f64>,
    /// `None` when every replication failed.
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub retained_per_chain: usize,
    pub mean_accept_rate: Option<f64>,
    pub failures: Vec<String>,
    pub reps: Vec<RepResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub seed: u64,
    pub config_hash: String,
    pub level: f64,
    pub cells: Vec<SimCell>,
}

impl SimResult {
    pub fn cell(&self, n: usize, p: usize, prior: &str) -> Option<&SimCell> {
        self.cells.iter().find(|c| c.n == n && c.p == p && c.prior == prior)
    }
}

/// Fits one simulated replication.
pub fn run_replication(
    n: usize,
    p: usize,
    truth: &[f64],
    prior: &PriorConfig,
    mcmc: &McmcConfig,
    master_seed: u64,
    rep: usize,
    level: f64,
) -> Result<RepResult, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed(master_seed, n, p, rep));
    let dataset = simulate_dataset(n, p, truth, &mut rng)?;
    let spec = prior.resolve(p)?;
    let config = McmcConfig {
        seed: chain_seed(master_seed, n, p, &prior.label(), rep),
        ..*mcmc
    };
    let chains = sampler::run_chains(ModelKind::Bell, &spec, &dataset, &config)?;
    let summary = inference::summarize(&chains, level)?;
    let mean = summary.means();
    let (mse, mae) = inference::mse_mae(&mean, truth)?;
    let c = &summary.coefficients;
    let diagnostics = Diagnostics::compute(&chains);
    let max_acf_lag20 = diagnostics
        .acf_lag20
        .iter()
        .try_fold(0.0, |acc: f64, v| v.map(|v| acc.max(v)));
    Ok(RepResult {
        rep,
        psd: c.iter().map(|s| s.psd).collect(),
        hpd_lower: c.iter().map(|s| s.hpd_lower).collect(),
        hpd_upper: c.iter().map(|s| s.hpd_upper).collect(),
        covered: c
            .iter()
            .zip(truth)
            .map(|(s, &t)| s.hpd_lower <= t && t <= s.hpd_upper)
            .collect(),
        mean,
        mse,
        mae,
        accept_rates: chains.accept_rates(),
        max_rhat: diagnostics.max_rhat(chains.n_chains()),
        max_acf_lag20,
    })
}

fn column_mean(rows: &[&Vec<f64>], j: usize) -> f64 {
    rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64
}

fn aggregate(
    n: usize,
    p: usize,
    prior: &PriorConfig,
    truth: &[f64],
    reps_requested: usize,
    retained_per_chain: usize,
    outcomes: Vec<Result<RepResult, String>>,
) -> SimCell {
    let mut reps = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => reps.push(r),
            Err(e) => failures.push(e),
        }
    }
    let k = reps.len();
    let avg = |f: &dyn Fn(&RepResult) -> &Vec<f64>| -> Vec<f64> {
        if k == 0 {
            return Vec::new();
        }
        let rows: Vec<&Vec<f64>> = reps.iter().map(f).collect();
        (0..p).map(|j| column_mean(&rows, j)).collect()
    };
    let scalar = |f: &dyn Fn(&RepResult) -> f64| -> Option<f64> {
        (k > 0).then(|| reps.iter().map(f).sum::<f64>() / k as f64)
    };
    let coverage = if k == 0 {
        Vec::new()
    } else {
        (0..p)
            .map(|j| reps.iter().filter(|r| r.covered[j]).count() as f64 / k as f64)
            .collect()
    };
    SimCell {
        n,
        p,
        prior: prior.label(),
        truth: truth.to_vec(),
        reps_requested,
        reps_ok: k,
        mean: avg(&|r| &r.mean),
        psd: avg(&|r| &r.psd),
        hpd_lower: avg(&|r| &r.hpd_lower),
        hpd_upper: avg(&|r| &r.hpd_upper),
        coverage,
        mse: scalar(&|r| r.mse),
        mae: scalar(&|r| r.mae),
        retained_per_chain,
        mean_accept_rate: scalar(&|r| r.accept_rates.iter().sum::<f64>() / r.accept_rates.len() as f64),
        failures,
        reps,
    }
}

/// Runs every (n, p, prior) cell of the grid with `n_reps` replications.
/// A failing replication is recorded in its cell and the study continues.
pub fn run_simulation_study(
    sim: &SimConfig,
    mcmc: &McmcConfig,
    level: f64,
    config_hash: &str,
) -> Result<SimResult, SimError> {
    let mut cells = Vec::new();
    for &n in &sim.n {
        for &p in &sim.p {
            let truth = match &sim.beta_truth {
                Some(t) if t.len() == p => t.clone(),
                Some(t) => {
                    return Err(SimError::TruthLength {
                        expected: p,
                        got: t.len(),
                    })
                }
                None => default_truth(p),
            };
            for prior in &sim.priors {
                cells.push((n, p, *prior, truth.clone()));
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..sim.n_reps).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<(usize, Result<RepResult, String>)> = jobs
        .par_iter()
        .map(|&(c, rep)| {
            let (n, p, prior, truth) = &cells[c];
            let out = run_replication(*n, *p, truth, prior, mcmc, mcmc.seed, rep, level)
                .map_err(|e| format!("replication {rep}: {e}"));
            (c, out)
        })
        .collect();
    let mut grouped: BTreeMap<usize, Vec<Result<RepResult, String>>> = BTreeMap::new();
    for (c, o) in outcomes {
        grouped.entry(c).or_default().push(o);
    }
    let cells = cells
        .iter()
        .enumerate()
        .map(|(c, (n, p, prior, truth))| {
            aggregate(
                *n,
                *p,
                prior,
                truth,
                sim.n_reps,
                mcmc.retained_per_chain(),
                grouped.remove(&c).unwrap_or_default(),
            )
        })
        .collect();
    Ok(SimResult {
        seed: mcmc.seed,
        config_hash: config_hash.to_string(),
        level,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_pattern() {
        assert_eq!(default_truth(3), [0.0, -0.5, 1.0]);
        assert_eq!(default_truth(6), [0.0, -0.5, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(default_truth(2), [0.0, -0.5]);
    }

    #[test]
    fn simulation_is_seeded() {
        let t = default_truth(3);
        let a = simulate_dataset(50, 3, &t, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = simulate_dataset(50, 3, &t, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let c = simulate_dataset(50, 3, &t, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!((a.n(), a.p()), (50, 3));
        assert!(a.x().column(0).iter().all(|&v| v == 1.0));
        assert!(simulate_dataset(5, 3, &[0.0, 1.0], &mut ChaCha8Rng::seed_from_u64(4)).is_err());
    }

    #[test]
    fn simulated_covariates_and_counts_look_right() {
        let t = [0.3, 0.0, 0.0];
        let d = simulate_dataset(20_000, 3, &t, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let col: Vec<f64> = d.x().column(1).iter().copied().collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(m.abs() < 0.03 && (v - 1.0).abs() < 0.05);
        // with slopes zero every count is Bell with mean e^0.3
        let mu = 0.3f64.exp();
        let ybar = d.mean_count();
        let theta = BellParam::from_mean(mu).unwrap();
        let se = (bell::variance(theta) / 20_000.0).sqrt();
        assert!((ybar - mu).abs() < 4.0 * se, "{ybar} vs {mu}");
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for n in [50, 100, 200] {
            for p in [3, 6] {
                for rep in 0..20 {
                    assert!(seen.insert(data_seed(1, n, p, rep)));
                    for tag in ["gprior", "flat"] {
                        assert!(seen.insert(chain_seed(1, n, p, tag, rep)));
                    }
                }
            }
        }
        assert_ne!(data_seed(1, 50, 3, 0), data_seed(2, 50, 3, 0));
    }

    #[test]
    fn small_study_is_reproducible() {
        let sim = SimConfig {
            n: vec![40],
            p: vec![3],
            n_reps: 2,
            beta_truth: None,
            priors: vec![PriorConfig::gprior(), PriorConfig::flat()],
        };
        let mcmc = McmcConfig {
            n_iter: 3000,
            burn_in: 1000,
            thin: 5,
            seed: 3,
            ..McmcConfig::default()
        };
        let a = run_simulation_study(&sim, &mcmc, 0.95, "h").unwrap();
        let b = run_simulation_study(&sim, &mcmc, 0.95, "h").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 2);
        for c in &a.cells {
            assert_eq!(c.reps_ok, 2, "{:?}", c.failures);
            assert_eq!(c.retained_per_chain, 400);
            assert!(c.mse.is_some_and(f64::is_finite) && c.mae.is_some_and(f64::is_finite));
            assert!(c.psd.iter().all(|v| v.is_finite() && *v > 0.0));
        }
        let g = a.cell(40, 3, "gprior").unwrap();
        let f = a.cell(40, 3, "flat").unwrap();
        assert_eq!(g.reps.len(), f.reps.len());
    }
}
