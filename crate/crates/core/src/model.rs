//! Regression layer: datasets, Bell and Poisson log-likelihoods under the log
//! link, the flat-normal and G-prior, and the unnormalized log-posterior.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::specfun::{self, LogBellTable, SpecFunError};

/// Linear predictors outside `[-ETA_LIMIT, ETA_LIMIT]` give a log-density of
/// `-inf`, so proposals landing there are always rejected.
pub const ETA_LIMIT: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dataset needs n >= p >= 1, got n = {n}, p = {p}")]
    Shape { n: usize, p: usize },
    #[error("response has {y} entries but the design matrix has {x} rows")]
    LengthMismatch { y: usize, x: usize },
    #[error("first design column must be the intercept (all ones); row {row} holds {value}")]
    MissingIntercept { row: usize, value: f64 },
    #[error("design matrix entry ({row}, {col}) is not finite")]
    NonFiniteCovariate { row: usize, col: usize },
    #[error("coefficient vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("linear predictor {eta} at observation {index} is outside [-{ETA_LIMIT}, {ETA_LIMIT}]")]
    PredictorOutOfRange { index: usize, eta: f64 },
    #[error("log-density is not finite at observation {index}")]
    NonFinite { index: usize },
    #[error("count {y} exceeds the Bell table (max index {max_index})")]
    TableTooShort { y: u64, max_index: usize },
    #[error("X'X is singular or not positive definite; drop collinear columns")]
    SingularGram,
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

/// Counts `y` with a design matrix whose first column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<u64>,
    x: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: Vec<u64>, x: DMatrix<f64>) -> Result<Self, ModelError> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(ModelError::LengthMismatch { y: y.len(), x: n });
        }
        if p == 0 || n < p {
            return Err(ModelError::Shape { n, p });
        }
        for row in 0..n {
            for col in 0..p {
                if !x[(row, col)].is_finite() {
                    return Err(ModelError::NonFiniteCovariate { row, col });
                }
            }
            if x[(row, 0)] != 1.0 {
                return Err(ModelError::MissingIntercept {
                    row,
                    value: x[(row, 0)],
                });
            }
        }
        Ok(Self { y, x })
    }

    /// Builds the design from covariate rows, prepending the intercept.
    pub fn with_intercept(y: Vec<u64>, covariates: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n = covariates.len();
        let k = covariates.first().map_or(0, Vec::len);
        let mut x = DMatrix::from_element(n, k + 1, 1.0);
        for (i, row) in covariates.iter().enumerate() {
            if row.len() != k {
                return Err(ModelError::DimensionMismatch {
                    expected: k,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                x[(i, j + 1)] = v;
            }
        }
        Self::new(y, x)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn max_count(&self) -> u64 {
        self.y.iter().copied().max().unwrap_or(0)
    }

    pub fn mean_count(&self) -> f64 {
        self.y.iter().map(|&v| v as f64).sum::<f64>() / self.n() as f64
    }

    /// Rows `rows` as a new dataset (the intercept invariant carries over).
    pub fn subset(&self, rows: &[usize]) -> Result<Self, ModelError> {
        let y = rows.iter().map(|&r| self.y[r]).collect();
        let x = self.x.select_rows(rows.iter());
        Self::new(y, x)
    }

    /// `X'X`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.x.tr_mul(&self.x)
    }

    /// A Bell table long enough for this dataset's counts.
    pub fn bell_table(&self) -> Result<LogBellTable, ModelError> {
        let max = usize::try_from(self.max_count()).unwrap_or(usize::MAX);
        Ok(LogBellTable::build(max.max(1))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bell,
    Poisson,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bell => "bell",
            Self::Poisson => "poisson",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "bell" => Ok(Self::Bell),
            "poisson" => Ok(Self::Poisson),
            other => Err(format!("unknown model {other:?} (expected bell or poisson)")),
        }
    }
}

/// Prior on the regression coefficients.
///
/// `GPrior` is `N_p(M u, g n (X'X)^-1)` with `u = (1, 0, ..., 0)`, where the
/// intercept mean and scale come from an expert prior on the mean count:
/// `M = digamma(a_mu) + ln(b_mu)` and `g = trigamma(a_mu) / p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    FlatNormal { tau: f64 },
    GPrior { a_mu: f64, b_mu: f64, m: f64, g: f64 },
}

impl PriorSpec {
    pub const DEFAULT_TAU: f64 = 100.0;
    pub const DEFAULT_A_MU: f64 = 1.0;
    pub const DEFAULT_B_MU: f64 = 1.0;

    pub fn flat_normal(tau: f64) -> Result<Self, ModelError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(ModelError::InvalidPrior(format!("tau must be positive, got {tau}")));
        }
        Ok(Self::FlatNormal { tau })
    }

    /// `p` counts every design column, intercept included.
    pub fn g_prior(a_mu: f64, b_mu: f64, p: usize) -> Result<Self, ModelError> {
        if !(a_mu.is_finite() && a_mu > 0.0 && b_mu.is_finite() && b_mu > 0.0) {
            return Err(ModelError::InvalidPrior(format!(
                "a_mu and b_mu must be positive, got {a_mu}, {b_mu}"
            )));
        }
        if p == 0 {
            return Err(ModelError::InvalidPrior("p must be at least 1".into()));
        }
        let m = specfun::digamma(a_mu)? + b_mu.ln();
        let g = specfun::trigamma(a_mu)? / p as f64;
        Ok(Self::GPrior { a_mu, b_mu, m, g })
    }

    pub fn default_g_prior(p: usize) -> Result<Self, ModelError> {
        Self::g_prior(Self::DEFAULT_A_MU, Self::DEFAULT_B_MU, p)
    }

    pub fn default_flat() -> Self {
        Self::FlatNormal {
            tau: Self::DEFAULT_TAU,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::FlatNormal { .. } => "flat",
            Self::GPrior { .. } => "gprior",
        }
    }
}

pub fn check_beta(dataset: &Dataset, beta: &DVector<f64>) -> Result<(), ModelError> {
    if beta.len() != dataset.p() {
        return Err(ModelError::DimensionMismatch {
            expected: dataset.p(),
            got: beta.len(),
        });
    }
    Ok(())
}

/// `eta = X beta`; the mean is `mu_i = exp(eta_i)`.
pub fn linear_predictor(dataset: &Dataset, beta: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
    check_beta(dataset, beta)?;
    Ok(&dataset.x * beta)
}

/// Bell log-density of one count at linear predictor `eta`.
///
/// With `theta = W0(e^eta)` the identity `theta e^theta = e^eta` gives
/// `ln theta = eta - theta`, so no logarithm of a tiny `theta` is formed.
#[inline]
pub fn bell_log_density(y: u64, eta: f64, table: &LogBellTable) -> Result<f64, ModelError> {
    let log_bell = table.get(y).ok_or(ModelError::TableTooShort {
        y,
        max_index: table.max_index(),
    })?;
    let theta = specfun::lambert_w0_exp(eta)?;
    let y_term = if y == 0 { 0.0 } else { y as f64 * (eta - theta) };
    Ok(y_term + 1.0 - theta.exp() + log_bell - specfun::log_factorial(y))
}

#[inline]
pub fn poisson_log_density(y: u64, eta: f64) -> f64 {
    let y_term = if y == 0 { 0.0 } else { y as f64 * eta };
    y_term - eta.exp() - specfun::log_factorial(y)
}

/// Per-observation log-density for `kind`, with the predictor guard applied.
#[inline]
pub fn log_density(
    kind: ModelKind,
    y: u64,
    eta: f64,
    index: usize,
    table: &LogBellTable,
) -> Result<f64, ModelError> {
    if !(eta.abs() <= ETA_LIMIT) {
        return Err(ModelError::PredictorOutOfRange { index, eta });
    }
    let v = match kind {
        ModelKind::Bell => bell_log_density(y, eta, table)?,
        ModelKind::Poisson => poisson_log_density(y, eta),
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::NonFinite { index })
    }
}

fn sum_log_density(
    kind: ModelKind,
    dataset: &Dataset,
    beta: &DVector<f64>,
    table: &LogBellTable,
) -> Result<f64, ModelError> {
    let eta = linear_predictor(dataset, beta)?;
    let mut total = 0.0;
    for (i, (&y, &e)) in dataset.y.iter().zip(eta.iter()).enumerate() {
        total += log_density(kind, y, e, i, table)?;
    }
    Ok(total)
}

/// Bell regression log-likelihood, including the `ln B_y - ln y!` constants.
pub fn bell_log_likelihood(
    dataset: &Dataset,
    beta: &DVector<f64>,
    table: &LogBellTable,
) -> Result<f64, ModelError> {
    sum_log_density(ModelKind::Bell, dataset, beta, table)
}

/// Poisson regression log-likelihood, including `-ln y!`.
pub fn poisson_log_likelihood(dataset: &Dataset, beta: &DVector<f64>) -> Result<f64, ModelError> {
    // The Poisson path never reads the Bell table.
    static EMPTY: std::sync::OnceLock<LogBellTable> = std::sync::OnceLock::new();
    let table = EMPTY.get_or_init(|| LogBellTable::build(1).expect("tiny table"));
    sum_log_density(ModelKind::Poisson, dataset, beta, table)
}

pub fn log_likelihood(
    kind: ModelKind,
    dataset: &Dataset,
    beta: &DVector<f64>,
    table: &LogBellTable,
) -> Result<f64, ModelError> {
    match kind {
        ModelKind::Bell => bell_log_likelihood(dataset, beta, table),
        ModelKind::Poisson => poisson_log_likelihood(dataset, beta),
    }
}

/// Cholesky factor of `X'X`, rejecting numerically rank-deficient designs.
pub fn gram_cholesky(dataset: &Dataset) -> Result<Cholesky<f64, Dyn>, ModelError> {
    let gram = dataset.gram();
    let max_diag = gram.diagonal().max();
    let chol = Cholesky::<f64, Dyn>::new(gram).ok_or(ModelError::SingularGram)?;
    if chol.l().diagonal().iter().any(|d| !(d * d > 1e-12 * max_diag)) {
        return Err(ModelError::SingularGram);
    }
    Ok(chol)
}

/// A prior with its data-dependent pieces (the Cholesky factor of `X'X`,
/// normalizing constants) computed once.
#[derive(Debug, Clone)]
pub enum PreparedPrior {
    FlatNormal {
        tau: f64,
        log_norm: f64,
    },
    GPrior {
        mean: DVector<f64>,
        /// `X'X / (g n)`
        precision: DMatrix<f64>,
        log_norm: f64,
    },
}

impl PreparedPrior {
    pub fn new(prior: &PriorSpec, dataset: &Dataset) -> Result<Self, ModelError> {
        let p = dataset.p() as f64;
        match *prior {
            PriorSpec::FlatNormal { tau } => {
                if !(tau.is_finite() && tau > 0.0) {
                    return Err(ModelError::InvalidPrior(format!("tau must be positive, got {tau}")));
                }
                Ok(Self::FlatNormal {
                    tau,
                    log_norm: -0.5 * p * (2.0 * PI * tau * tau).ln(),
                })
            }
            PriorSpec::GPrior { m, g, .. } => {
                if !(g.is_finite() && g > 0.0 && m.is_finite()) {
                    return Err(ModelError::InvalidPrior(format!("need finite M and g > 0, got {m}, {g}")));
                }
                let gram = dataset.gram();
                let chol = gram_cholesky(dataset)?;
                let log_det_gram = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                if !log_det_gram.is_finite() {
                    return Err(ModelError::SingularGram);
                }
                let scale = g * dataset.n() as f64;
                // covariance g n (X'X)^-1 has log-determinant p ln(g n) - ln|X'X|
                let log_det_cov = p * scale.ln() - log_det_gram;
                let mut mean = DVector::zeros(dataset.p());
                mean[0] = m;
                Ok(Self::GPrior {
                    mean,
                    precision: gram / scale,
                    log_norm: -0.5 * (p * (2.0 * PI).ln() + log_det_cov),
                })
            }
        }
    }

    pub fn log_density(&self, beta: &DVector<f64>) -> f64 {
        match self {
            Self::FlatNormal { tau, log_norm } => log_norm - beta.norm_squared() / (2.0 * tau * tau),
            Self::GPrior {
                mean,
                precision,
                log_norm,
            } => {
                let d = beta - mean;
                log_norm - 0.5 * d.dot(&(precision * &d))
            }
        }
    }
}

/// Normalized log prior density of `beta`.
pub fn log_prior(prior: &PriorSpec, beta: &DVector<f64>, dataset: &Dataset) -> Result<f64, ModelError> {
    check_beta(dataset, beta)?;
    Ok(PreparedPrior::new(prior, dataset)?.log_density(beta))
}

/// Unnormalized log posterior, `log_likelihood + log_prior`.
pub fn log_posterior(
    kind: ModelKind,
    prior: &PriorSpec,
    dataset: &Dataset,
    beta: &DVector<f64>,
    table: &LogBellTable,
) -> Result<f64, ModelError> {
    Ok(log_likelihood(kind, dataset, beta, table)? + log_prior(prior, beta, dataset)?)
}

/// Anything the sampler can target.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log-density up to a constant; `-inf` outside the support.
    fn log_density(&self, beta: &DVector<f64>) -> f64;
}

/// The regression posterior with its prior prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    kind: ModelKind,
    dataset: &'a Dataset,
    table: &'a LogBellTable,
    prior: PreparedPrior,
}

impl<'a> Posterior<'a> {
    pub fn new(
        kind: ModelKind,
        prior: &PriorSpec,
        dataset: &'a Dataset,
        table: &'a LogBellTable,
    ) -> Result<Self, ModelError> {
        if kind == ModelKind::Bell && (table.max_index() as u64) < dataset.max_count() {
            return Err(ModelError::TableTooShort {
                y: dataset.max_count(),
                max_index: table.max_index(),
            });
        }
        Ok(Self {
            kind,
            dataset,
            table,
            prior: PreparedPrior::new(prior, dataset)?,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn try_log_density(&self, beta: &DVector<f64>) -> Result<f64, ModelError> {
        let ll = sum_log_density(self.kind, self.dataset, beta, self.table)?;
        Ok(ll + self.prior.log_density(beta))
    }
}

impl LogDensity for Posterior<'_> {
    fn dim(&self) -> usize {
        self.dataset.p()
    }

    fn log_density(&self, beta: &DVector<f64>) -> f64 {
        self.try_log_density(beta).unwrap_or(f64::NEG_INFINITY)
    }
}
