//! Posterior summaries, estimation error metrics, model-selection criteria
//! and the chi-square goodness-of-fit test on marginal counts.
//!
//! Every summary and criterion pools the retained draws of all chains.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bell::{self, BellError};
use crate::model::{self, Dataset, ModelError, ModelKind};
use crate::sampler::ChainSet;
use crate::specfun::{self, LogBellTable, SpecFunError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("need at least {needed} pooled draws, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("credibility level must lie in (0, 1), got {0}")]
    Level(f64),
    #[error("vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("log-density of observation {obs} under draw {draw} is not finite")]
    NonFiniteDensity { obs: usize, draw: usize },
    #[error("expected count {expected:.3e} in cell {cell:?} is too small; use a coarser grouping")]
    SparseCell { cell: String, expected: f64 },
    #[error("goodness of fit needs at least {0}")]
    Gof(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bell(#[from] BellError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

/// Pooled draw count below which [`summarize`] refuses to run.
pub const MIN_SUMMARY_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub mean: f64,
    pub median: f64,
    /// Posterior standard deviation (denominator `draws - 1`).
    pub psd: f64,
    pub hpd_lower: f64,
    pub hpd_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub level: f64,
    pub draws: usize,
    pub coefficients: Vec<CoefficientSummary>,
}

impl PosteriorReport {
    pub fn means(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.mean).collect()
    }
}

/// Number of sorted draws an HPD window at `level` must cover,
/// `ceil(level * n)`.
pub fn hpd_window_len(level: f64, n: usize) -> usize {
    // guard against 0.95 * 100 = 95.00000000000001
    let raw = level * n as f64;
    let k = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
    k.clamp(1, n)
}

/// Shortest interval spanning `ceil(level * n)` sorted draws; ties go to the
/// earliest window. `sorted` must be ascending.
pub fn hpd_interval(sorted: &[f64], level: f64) -> Result<(f64, f64), InferenceError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::Level(level));
    }
    if sorted.is_empty() {
        return Err(InferenceError::TooFewDraws { needed: 1, got: 0 });
    }
    let k = hpd_window_len(level, sorted.len());
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for start in 0..=sorted.len() - k {
        let width = sorted[start + k - 1] - sorted[start];
        if width < best_width {
            best_width = width;
            best = start;
        }
    }
    Ok((sorted[best], sorted[best + k - 1]))
}

/// Equal-tailed interval with the same coverage count as [`hpd_interval`].
pub fn equal_tailed_interval(sorted: &[f64], level: f64) -> Result<(f64, f64), InferenceError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::Level(level));
    }
    if sorted.is_empty() {
        return Err(InferenceError::TooFewDraws { needed: 1, got: 0 });
    }
    let k = hpd_window_len(level, sorted.len());
    let start = (sorted.len() - k) / 2;
    Ok((sorted[start], sorted[start + k - 1]))
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Summary of one coordinate's pooled draws.
pub fn summarize_draws(draws: &[f64], level: f64) -> Result<CoefficientSummary, InferenceError> {
    if draws.len() < 2 {
        return Err(InferenceError::TooFewDraws {
            needed: 2,
            got: draws.len(),
        });
    }
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let psd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (hpd_lower, hpd_upper) = hpd_interval(&sorted, level)?;
    Ok(CoefficientSummary {
        mean,
        median: median_of_sorted(&sorted),
        psd,
        hpd_lower,
        hpd_upper,
    })
}

/// Posterior mean (the squared-loss estimate), median, PSD and HPD interval
/// of every coefficient.
pub fn summarize(chains: &ChainSet, level: f64) -> Result<PosteriorReport, InferenceError> {
    let total = chains.total_draws();
    if total < MIN_SUMMARY_DRAWS {
        return Err(InferenceError::TooFewDraws {
            needed: MIN_SUMMARY_DRAWS,
            got: total,
        });
    }
    let coefficients = (0..chains.dim())
        .map(|j| summarize_draws(&chains.pooled_coordinate(j), level))
        .collect::<Result<_, _>>()?;
    Ok(PosteriorReport {
        level,
        draws: total,
        coefficients,
    })
}

/// Mean squared and mean absolute error of `estimates` against `truth`.
pub fn mse_mae(estimates: &[f64], truth: &[f64]) -> Result<(f64, f64), InferenceError> {
    if estimates.len() != truth.len() {
        return Err(InferenceError::LengthMismatch(estimates.len(), truth.len()));
    }
    if estimates.is_empty() {
        return Ok((0.0, 0.0));
    }
    let k = estimates.len() as f64;
    let (sq, abs) = estimates
        .iter()
        .zip(truth)
        .fold((0.0, 0.0), |(s, a), (e, t)| (s + (e - t).powi(2), a + (e - t).abs()));
    Ok((sq / k, abs / k))
}

/// Log-density of every observation under every pooled draw, stored
/// observation-major: `values[i][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseLogLik {
    pub values: Vec<Vec<f64>>,
}

impl PointwiseLogLik {
    pub fn compute(
        kind: ModelKind,
        dataset: &Dataset,
        draws: &[DVector<f64>],
        table: &LogBellTable,
    ) -> Result<Self, InferenceError> {
        let mut values = vec![Vec::with_capacity(draws.len()); dataset.n()];
        for (k, beta) in draws.iter().enumerate() {
            let eta = model::linear_predictor(dataset, beta)?;
            for (i, (&y, &e)) in dataset.y().iter().zip(eta.iter()).enumerate() {
                let v = model::log_density(kind, y, e, i, table)
                    .map_err(|_| InferenceError::NonFiniteDensity { obs: i, draw: k })?;
                values[i].push(v);
            }
        }
        Ok(Self { values })
    }

    pub fn n_draws(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Total log-likelihood of each draw, summed in observation order.
    pub fn per_draw_totals(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.n_draws()];
        for row in &self.values {
            for (t, v) in totals.iter_mut().zip(row) {
                *t += v;
            }
        }
        totals
    }

    /// Harmonic-mean CPO of every observation,
    /// `CPO_i = [ (1/M) sum_k 1 / f(y_i | beta_k) ]^-1`, in log space.
    pub fn log_cpo(&self) -> Vec<f64> {
        let log_m = (self.n_draws() as f64).ln();
        self.values
            .iter()
            .map(|row| {
                let neg: Vec<f64> = row.iter().map(|v| -v).collect();
                log_m - specfun::log_sum_exp(&neg)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub lmpl: f64,
    pub dic: f64,
    pub eaic: f64,
    pub ebic: f64,
    pub cpo: Vec<f64>,
    /// Mean over draws of the total log-likelihood.
    pub mean_log_likelihood: f64,
    /// Log-likelihood at the pooled posterior mean.
    pub log_likelihood_at_mean: f64,
    pub n: usize,
    pub p: usize,
    pub draws: usize,
}

fn pooled_draws(chains: &ChainSet) -> Result<Vec<DVector<f64>>, InferenceError> {
    let draws: Vec<DVector<f64>> = chains.pooled().cloned().collect();
    if draws.is_empty() {
        return Err(InferenceError::TooFewDraws { needed: 1, got: 0 });
    }
    Ok(draws)
}

/// `DIC = 2 [ -2 mean_m log L(beta_m) + log L(beta_bar) ]`.
pub fn dic_from_parts(mean_log_likelihood: f64, log_likelihood_at_mean: f64) -> f64 {
    2.0 * (-2.0 * mean_log_likelihood + log_likelihood_at_mean)
}

/// `(EAIC, EBIC) = (-2 Lbar + 2p, -2 Lbar + p ln n)`.
pub fn eaic_ebic_from_parts(mean_log_likelihood: f64, p: usize, n: usize) -> (f64, f64) {
    let base = -2.0 * mean_log_likelihood;
    (base + 2.0 * p as f64, base + p as f64 * (n as f64).ln())
}

/// Every criterion from one pass over the pooled draws.
pub fn criteria(
    kind: ModelKind,
    dataset: &Dataset,
    chains: &ChainSet,
    table: &LogBellTable,
) -> Result<CriteriaReport, InferenceError> {
    let draws = pooled_draws(chains)?;
    criteria_from_draws(kind, dataset, &draws, table)
}

pub fn criteria_from_draws(
    kind: ModelKind,
    dataset: &Dataset,
    draws: &[DVector<f64>],
    table: &LogBellTable,
) -> Result<CriteriaReport, InferenceError> {
    if draws.is_empty() {
        return Err(InferenceError::TooFewDraws { needed: 1, got: 0 });
    }
    let pointwise = PointwiseLogLik::compute(kind, dataset, draws, table)?;
    let log_cpo = pointwise.log_cpo();
    let lmpl = log_cpo.iter().sum();
    let totals = pointwise.per_draw_totals();
    let mean_log_likelihood = totals.iter().sum::<f64>() / totals.len() as f64;

    let mut beta_bar = DVector::zeros(dataset.p());
    for d in draws {
        beta_bar += d;
    }
    beta_bar /= draws.len() as f64;
    let log_likelihood_at_mean = model::log_likelihood(kind, dataset, &beta_bar, table)?;

    let (eaic, ebic) = eaic_ebic_from_parts(mean_log_likelihood, dataset.p(), dataset.n());
    Ok(CriteriaReport {
        lmpl,
        dic: dic_from_parts(mean_log_likelihood, log_likelihood_at_mean),
        eaic,
        ebic,
        cpo: log_cpo.iter().map(|v| v.exp()).collect(),
        mean_log_likelihood,
        log_likelihood_at_mean,
        n: dataset.n(),
        p: dataset.p(),
        draws: draws.len(),
    })
}

/// CPO of every observation and the log-marginal pseudo-likelihood.
pub fn cpo_lmpl(
    kind: ModelKind,
    dataset: &Dataset,
    chains: &ChainSet,
    table: &LogBellTable,
) -> Result<(Vec<f64>, f64), InferenceError> {
    let draws = pooled_draws(chains)?;
    let log_cpo = PointwiseLogLik::compute(kind, dataset, &draws, table)?.log_cpo();
    let lmpl = log_cpo.iter().sum();
    Ok((log_cpo.into_iter().map(f64::exp).collect(), lmpl))
}

pub fn dic(kind: ModelKind, dataset: &Dataset, chains: &ChainSet, table: &LogBellTable) -> Result<f64, InferenceError> {
    Ok(criteria(kind, dataset, chains, table)?.dic)
}

pub fn eaic_ebic(
    kind: ModelKind,
    dataset: &Dataset,
    chains: &ChainSet,
    table: &LogBellTable,
) -> Result<(f64, f64), InferenceError> {
    let draws = pooled_draws(chains)?;
    let totals = PointwiseLogLik::compute(kind, dataset, &draws, table)?.per_draw_totals();
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    Ok(eaic_ebic_from_parts(mean, dataset.p(), dataset.n()))
}

/// Cells `0, 1, ..., top - 1` and a final `>= top` cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellGrouping {
    pub top: u64,
}

impl Default for CellGrouping {
    fn default() -> Self {
        Self { top: 5 }
    }
}

impl CellGrouping {
    pub fn n_cells(&self) -> usize {
        self.top as usize + 1
    }

    pub fn cell_of(&self, y: u64) -> usize {
        y.min(self.top) as usize
    }

    pub fn label(&self, cell: usize) -> String {
        if cell as u64 == self.top {
            format!(">={}", self.top)
        } else {
            cell.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofCell {
    pub label: String,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub model: ModelKind,
    /// Fitted marginal parameter: `theta` for Bell, `lambda` for Poisson.
    pub parameter: f64,
    pub cells: Vec<GofCell>,
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Smallest expected cell count accepted by [`chisq_gof`].
pub const MIN_EXPECTED: f64 = 1e-8;

/// Pearson chi-square test of the marginal counts against a Bell or Poisson
/// law fitted by its mean, with `df = cells - 1`.
pub fn chisq_gof(y: &[u64], kind: ModelKind, grouping: CellGrouping) -> Result<GofReport, InferenceError> {
    if y.is_empty() {
        return Err(InferenceError::Gof("one observation"));
    }
    if grouping.top == 0 {
        return Err(InferenceError::Gof("two cells"));
    }
    let n = y.len() as f64;
    let ybar = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let cells = grouping.n_cells();

    let (parameter, log_probs): (f64, Vec<f64>) = match kind {
        ModelKind::Bell => {
            let theta = bell::mle_theta(ybar)?;
            let table = LogBellTable::build(grouping.top as usize)?;
            let lp = (0..grouping.top)
                .map(|k| bell::log_pmf(k, theta, &table))
                .collect::<Result<_, _>>()?;
            (theta.theta(), lp)
        }
        ModelKind::Poisson => {
            if !(ybar > 0.0) {
                return Err(InferenceError::Bell(BellError::DegenerateMean(ybar)));
            }
            let lp = (0..grouping.top)
                .map(|k| k as f64 * ybar.ln() - ybar - specfun::log_factorial(k))
                .collect();
            (ybar, lp)
        }
    };

    let mut probs: Vec<f64> = log_probs.iter().map(|v| v.exp()).collect();
    let head: f64 = probs.iter().sum();
    probs.push((1.0 - head).max(0.0));

    let mut observed = vec![0u64; cells];
    for &v in y {
        observed[grouping.cell_of(v)] += 1;
    }

    let mut statistic = 0.0;
    let mut out = Vec::with_capacity(cells);
    for (j, (&obs, &prob)) in observed.iter().zip(&probs).enumerate() {
        let expected = n * prob;
        if !(expected >= MIN_EXPECTED) {
            return Err(InferenceError::SparseCell {
                cell: grouping.label(j),
                expected,
            });
        }
        statistic += (obs as f64 - expected).powi(2) / expected;
        out.push(GofCell {
            label: grouping.label(j),
            observed: obs,
            expected,
        });
    }
    let df = (cells - 1) as u32;
    Ok(GofReport {
        model: kind,
        parameter,
        cells: out,
        statistic,
        df,
        p_value: specfun::chisq_sf(statistic, df)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Chain;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn chains_of(draws: Vec<Vec<f64>>) -> ChainSet {
        let chain = Chain {
            chain_index: 0,
            draws: draws.into_iter().map(DVector::from_vec).collect(),
            log_posterior: vec![],
            iterations: vec![],
            accept_rate: 0.3,
            scale: 1.0,
            start: DVector::zeros(1),
            warnings: vec![],
        };
        ChainSet { chains: vec![chain] }
    }

    fn toy() -> Dataset {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.1, 1.0, -0.5, 1.0, 0.9, 1.0, 0.0, 1.0, 1.3]);
        Dataset::new(vec![1, 0, 4, 2, 6], x).unwrap()
    }

    // Every window of k sorted draws, shortest first-found.
    fn brute_force_hpd(sorted: &[f64], k: usize) -> (f64, f64) {
        let mut best: Option<(f64, f64)> = None;
        for i in 0..sorted.len() {
            for j in i..sorted.len() {
                if j - i + 1 != k {
                    continue;
                }
                let cand = (sorted[i], sorted[j]);
                if best.is_none_or(|b| cand.1 - cand.0 < b.1 - b.0) {
                    best = Some(cand);
                }
            }
        }
        best.unwrap()
    }

    #[test]
    fn hpd_of_one_to_hundred() {
        let draws: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(hpd_window_len(0.95, 100), 95);
        assert_eq!(hpd_interval(&draws, 0.95).unwrap(), (1.0, 95.0));
        assert_eq!(brute_force_hpd(&draws, 95), (1.0, 95.0));
        assert!(hpd_interval(&draws, 1.0).is_err());
        assert!(hpd_interval(&draws, 0.0).is_err());
    }

    #[test]
    fn summarize_symmetric() {
        let draws: Vec<Vec<f64>> = (-100..=100).map(|i| vec![f64::from(i) / 10.0]).collect();
        let r = summarize(&chains_of(draws), 0.9).unwrap();
        let c = &r.coefficients[0];
        assert_relative_eq!(c.mean, c.median, epsilon = 1e-12);
        assert_relative_eq!(c.mean, 0.0, epsilon = 1e-12);
        assert!(c.hpd_lower < 0.0 && c.hpd_upper > 0.0);
        let few = summarize(&chains_of(vec![vec![1.0]; 50]), 0.95);
        assert!(matches!(few, Err(InferenceError::TooFewDraws { .. })));
    }

    #[test]
    fn mse_mae_examples() {
        assert_eq!(mse_mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
        let (mse, mae) = mse_mae(&[0.1, -0.6, 1.1], &[0.0, -0.5, 1.0]).unwrap();
        assert_relative_eq!(mse, 0.01, epsilon = 1e-12);
        assert_relative_eq!(mae, 0.1, epsilon = 1e-12);
        // G-prior estimates at n = 50, p = 3
        let (mse, mae) = mse_mae(&[-0.0984, -0.4743, 1.0369], &[0.0, -0.5, 1.0]).unwrap();
        assert!((mae - 0.0537).abs() < 5e-5, "{mae}");
        assert!((mse - 0.0039).abs() < 5e-5, "{mse}");
        assert!(mse_mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn single_draw_criteria() {
        let d = toy();
        let table = d.bell_table().unwrap();
        let beta = vec![0.4, 0.7];
        let set = chains_of(vec![beta.clone()]);
        let b = DVector::from_vec(beta);
        for kind in [ModelKind::Bell, ModelKind::Poisson] {
            let (cpo, lmpl) = cpo_lmpl(kind, &d, &set, &table).unwrap();
            let eta = model::linear_predictor(&d, &b).unwrap();
            for (i, c) in cpo.iter().enumerate() {
                let f = model::log_density(kind, d.y()[i], eta[i], i, &table).unwrap().exp();
                assert_relative_eq!(*c, f, max_relative = 1e-12);
            }
            let ll = model::log_likelihood(kind, &d, &b, &table).unwrap();
            assert_relative_eq!(lmpl, ll, epsilon = 1e-10);
            assert_relative_eq!(dic(kind, &d, &set, &table).unwrap(), -2.0 * ll, epsilon = 1e-10);
        }
    }

    #[test]
    fn identical_draws_behave_like_one() {
        let d = toy();
        let table = d.bell_table().unwrap();
        let set = chains_of(vec![vec![0.2, 0.3]; 7]);
        let one = chains_of(vec![vec![0.2, 0.3]]);
        let a = criteria(ModelKind::Bell, &d, &set, &table).unwrap();
        let b = criteria(ModelKind::Bell, &d, &one, &table).unwrap();
        for (x, y) in a.cpo.iter().zip(&b.cpo) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
        assert_relative_eq!(a.dic, -2.0 * a.log_likelihood_at_mean, epsilon = 1e-9);
    }

    #[test]
    fn eaic_ebic_arithmetic() {
        let (eaic, ebic) = eaic_ebic_from_parts(-70.0, 5, 44);
        assert_eq!(eaic, 150.0);
        assert_relative_eq!(ebic, 140.0 + 5.0 * 44f64.ln(), epsilon = 1e-12);
        assert_eq!(dic_from_parts(-70.0, -68.0), 144.0);
    }

    #[test]
    fn criteria_identities() {
        let d = toy();
        let table = d.bell_table().unwrap();
        let draws: Vec<Vec<f64>> = (0..200)
            .map(|k| vec![0.3 + 0.01 * ((k * 7 % 13) as f64 - 6.0), 0.6 + 0.02 * ((k * 5 % 11) as f64 - 5.0)])
            .collect();
        let set = chains_of(draws);
        for kind in [ModelKind::Bell, ModelKind::Poisson] {
            let r = criteria(kind, &d, &set, &table).unwrap();
            let lmpl: f64 = r.cpo.iter().map(|c| c.ln()).sum();
            assert!((r.lmpl - lmpl).abs() < 1e-10);
            assert!((r.ebic - r.eaic - r.p as f64 * ((r.n as f64).ln() - 2.0)).abs() < 1e-12);
            let dic = -4.0 * r.mean_log_likelihood + 2.0 * r.log_likelihood_at_mean;
            assert!((r.dic - dic).abs() < 1e-10);
            let (e1, e2) = eaic_ebic(kind, &d, &set, &table).unwrap();
            assert_eq!((e1, e2), (r.eaic, r.ebic));
        }
    }

    #[test]
    fn non_finite_density_is_reported() {
        let d = toy();
        let table = d.bell_table().unwrap();
        let set = chains_of(vec![vec![0.0, 0.0], vec![0.0, 1000.0]]);
        assert!(matches!(
            criteria(ModelKind::Bell, &d, &set, &table),
            Err(InferenceError::NonFiniteDensity { obs: 2, draw: 1 })
        ));
    }

    #[test]
    fn gof_mine_counts() {
        // count histogram 0..=5 of 10, 7, 8, 8, 4, 7 with 98 fractures in total
        let mut y = Vec::new();
        for (v, c) in [(0u64, 10), (1, 7), (2, 8), (3, 8), (4, 4), (5, 7)] {
            y.extend(std::iter::repeat_n(v, c));
        }
        let bell = chisq_gof(&y, ModelKind::Bell, CellGrouping::default()).unwrap();
        assert_eq!(bell.df, 5);
        assert!((bell.statistic - 1.216).abs() < 0.02, "{}", bell.statistic);
        assert!((bell.p_value - 0.943).abs() < 0.002);
        let pois = chisq_gof(&y, ModelKind::Poisson, CellGrouping::default()).unwrap();
        assert!((pois.statistic - 12.523).abs() < 0.02, "{}", pois.statistic);
        assert!((pois.p_value - 0.028).abs() < 0.002);
        for r in [&bell, &pois] {
            let total: f64 = r.cells.iter().map(|c| c.expected).sum();
            assert!((total - 44.0).abs() < 1e-6);
            assert_eq!(r.cells.iter().map(|c| c.observed).sum::<u64>(), 44);
            assert_eq!(r.cells[5].label, ">=5");
        }
    }

    #[test]
    fn gof_errors() {
        assert!(chisq_gof(&[], ModelKind::Bell, CellGrouping::default()).is_err());
        assert!(chisq_gof(&[0, 0, 0], ModelKind::Bell, CellGrouping::default()).is_err());
        assert!(chisq_gof(&[0, 0, 0], ModelKind::Poisson, CellGrouping::default()).is_err());
        let sparse = chisq_gof(&[0, 1, 0], ModelKind::Poisson, CellGrouping { top: 30 });
        assert!(matches!(sparse, Err(InferenceError::SparseCell { .. })));
    }

    #[test]
    fn gof_poisson_by_hand() {
        // ybar = 1.75, cells 0, 1, 2, >=3
        let y = vec![0, 1, 1, 2, 3, 0, 5, 2];
        let r = chisq_gof(&y, ModelKind::Poisson, CellGrouping { top: 3 }).unwrap();
        let lam: f64 = 1.75;
        let p: Vec<f64> = vec![(-lam).exp(), lam * (-lam).exp(), lam * lam / 2.0 * (-lam).exp()];
        let mut probs = p.clone();
        probs.push(1.0 - p.iter().sum::<f64>());
        let obs = [2.0, 2.0, 2.0, 2.0];
        let stat: f64 = obs.iter().zip(&probs).map(|(o, q)| (o - 8.0 * q).powi(2) / (8.0 * q)).sum();
        assert_relative_eq!(r.statistic, stat, max_relative = 1e-12);
        assert_eq!(r.df, 3);
        assert_eq!(r.parameter, lam);
    }

    proptest! {
        #[test]
        fn hpd_matches_brute_force_and_beats_equal_tails(
            mut draws in proptest::collection::vec(-50.0f64..50.0, 2..120),
            level in 0.5f64..0.99,
        ) {
            draws.sort_by(f64::total_cmp);
            let k = hpd_window_len(level, draws.len());
            let (lo, hi) = hpd_interval(&draws, level).unwrap();
            let (blo, bhi) = brute_force_hpd(&draws, k);
            prop_assert_eq!((lo, hi), (blo, bhi));
            let (elo, ehi) = equal_tailed_interval(&draws, level).unwrap();
            prop_assert!(hi - lo <= ehi - elo);
            let inside = draws.iter().filter(|&&v| v >= lo && v <= hi).count();
            prop_assert!(inside as f64 >= level * draws.len() as f64 - 1e-9);
        }

        #[test]
        fn gof_statistic_ignores_observation_order(
            mut y in proptest::collection::vec(0u64..8, 5..60),
            seed in 0u64..1000,
        ) {
            prop_assume!(y.iter().any(|&v| v > 0));
            let a = chisq_gof(&y, ModelKind::Bell, CellGrouping { top: 4 }).unwrap();
            let len = y.len();
            y.rotate_left((seed as usize) % len);
            y.reverse();
            let b = chisq_gof(&y, ModelKind::Bell, CellGrouping { top: 4 }).unwrap();
            prop_assert!((a.statistic - b.statistic).abs() < 1e-12);
            let total: f64 = a.cells.iter().map(|c| c.expected).sum();
            prop_assert!((total - len as f64).abs() < 1e-6);
        }
    }
}
