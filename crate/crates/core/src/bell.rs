//! The Bell distribution `f(y) = theta^y e^(1 - e^theta) B_y / y!`.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::specfun::{self, LogBellNumbers, LogBellTable, SpecFunError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BellError {
    #[error("Bell parameter must be finite and in (0, {max}], got {0}", max = BellParam::MAX_THETA)]
    InvalidTheta(f64),
    #[error("count {y} exceeds the Bell table (max index {max_index})")]
    TableTooShort { y: u64, max_index: usize },
    #[error("sample mean must be positive and finite, got {0}")]
    DegenerateMean(f64),
    #[error("inversion sampler exhausted {0} terms without reaching the uniform draw")]
    InversionExhausted(usize),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

/// The Bell parameter `theta`, finite and in `(0, 700]` so that `e^theta`
/// stays representable.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BellParam(f64);

impl BellParam {
    pub const MAX_THETA: f64 = 700.0;

    pub fn new(theta: f64) -> Result<Self, BellError> {
        if theta.is_finite() && theta > 0.0 && theta <= Self::MAX_THETA {
            Ok(Self(theta))
        } else {
            Err(BellError::InvalidTheta(theta))
        }
    }

    #[inline]
    pub fn theta(self) -> f64 {
        self.0
    }

    /// The parameter whose mean is `mu`, i.e. `W0(mu)`.
    pub fn from_mean(mu: f64) -> Result<Self, BellError> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(BellError::DegenerateMean(mu));
        }
        Self::new(specfun::lambert_w0(mu)?)
    }
}

impl TryFrom<f64> for BellParam {
    type Error = BellError;

    fn try_from(theta: f64) -> Result<Self, BellError> {
        Self::new(theta)
    }
}

impl From<BellParam> for f64 {
    fn from(p: BellParam) -> f64 {
        p.0
    }
}

/// Log-probability of `y` under `Bell(theta)`.
pub fn log_pmf(y: u64, theta: BellParam, table: &LogBellTable) -> Result<f64, BellError> {
    let log_bell = table.get(y).ok_or(BellError::TableTooShort {
        y,
        max_index: table.max_index(),
    })?;
    let t = theta.theta();
    let y_term = if y == 0 { 0.0 } else { y as f64 * t.ln() };
    Ok(y_term + (1.0 - t.exp()) + log_bell - specfun::log_factorial(y))
}

pub fn mean(theta: BellParam) -> f64 {
    let t = theta.theta();
    t * t.exp()
}

pub fn variance(theta: BellParam) -> f64 {
    mean(theta) * (1.0 + theta.theta())
}

/// Terms consumed before [`sample`] gives up.
pub const INVERSION_MAX_TERMS: usize = 1_000_000;

const CACHED_BELL_TERMS: usize = 1024;

fn cached_log_bell() -> &'static LogBellTable {
    static TABLE: OnceLock<LogBellTable> = OnceLock::new();
    TABLE.get_or_init(|| LogBellTable::build(CACHED_BELL_TERMS - 1).expect("within bounds"))
}

/// One exact draw from `Bell(theta)` by sequential inversion.
///
/// Log-pmf terms are accumulated from `y = 0` until their running sum passes
/// a uniform draw. Terms are formed in log space, so the leading terms may
/// underflow to zero for large `theta` without affecting the result.
pub fn sample<R: Rng + ?Sized>(theta: BellParam, rng: &mut R) -> Result<u64, BellError> {
    let u: f64 = rng.random();
    let t = theta.theta();
    let log_theta = t.ln();
    let log_p0 = 1.0 - t.exp();
    let mu = mean(theta);

    let cached = cached_log_bell().values();
    let mut overflow: Option<LogBellNumbers> = None;
    let mut cumulative = 0.0;
    let mut log_fact = 0.0;
    for y in 0..INVERSION_MAX_TERMS {
        let log_bell = match cached.get(y) {
            Some(&v) => v,
            None => {
                let stream = overflow.get_or_insert_with(|| {
                    let mut s = LogBellNumbers::new();
                    s.nth(y - 1);
                    s
                });
                stream.next().expect("infinite stream")
            }
        };
        if y > 0 {
            log_fact += (y as f64).ln();
        }
        let term = (y as f64 * log_theta + log_p0 + log_bell - log_fact).exp();
        cumulative += term;
        if u < cumulative {
            return Ok(y as u64);
        }
        // Past the mean, a term lost in the rounding of the running sum means
        // `u` sits in the last ulp below one.
        if y as f64 > mu && term <= cumulative * f64::EPSILON * 1e-3 {
            return Ok(y as u64);
        }
    }
    Err(BellError::InversionExhausted(INVERSION_MAX_TERMS))
}

/// Moment estimator of `theta` from a sample mean, `W0(ybar)`.
pub fn mle_theta(ybar: f64) -> Result<BellParam, BellError> {
    BellParam::from_mean(ybar)
}
