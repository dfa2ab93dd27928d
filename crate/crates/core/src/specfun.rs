//! Scalar special functions used throughout the crate.
//!
//! Everything here is a pure function of its arguments. The only stateful
//! object is [`LogBellTable`], which is immutable once built and can be shared
//! freely between threads.

use std::f64::consts::{E, PI};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SpecFunError {
    #[error("{function}: argument {value} is outside the domain")]
    Domain { function: &'static str, value: f64 },
}

fn domain(function: &'static str, value: f64) -> SpecFunError {
    SpecFunError::Domain { function, value }
}

const HALLEY_MAX_ITER: usize = 64;

/// Above this log-argument the Lambert W iteration runs on `w + ln w = ln x`
/// so that `e^w` is never formed.
const LAMBERT_LOG_SWITCH: f64 = 20.0;

/// Principal branch of the Lambert W function on `[0, inf)`.
///
/// Halley iteration on `w e^w - x = 0`, started from `ln(1 + x)` below `e`
/// and from `ln x - ln ln x` above it.
pub fn lambert_w0(x: f64) -> Result<f64, SpecFunError> {
    if x.is_nan() || x < 0.0 {
        return Err(domain("lambert_w0", x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let log_x = x.ln();
    if log_x > LAMBERT_LOG_SWITCH {
        return Ok(lambert_w0_log_domain(log_x));
    }
    let mut w = if x < E {
        x.ln_1p()
    } else {
        log_x - log_x.ln()
    };
    for _ in 0..HALLEY_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let w1 = w + 1.0;
        let step = f / (ew * w1 - (w + 2.0) * f / (2.0 * w1));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(w)
}

/// `W0(exp(log_x))` without forming `exp(log_x)`.
///
/// Used by the regression likelihood, where the argument is `mu = exp(eta)`.
pub fn lambert_w0_exp(log_x: f64) -> Result<f64, SpecFunError> {
    if log_x.is_nan() {
        return Err(domain("lambert_w0_exp", log_x));
    }
    if log_x > LAMBERT_LOG_SWITCH {
        Ok(lambert_w0_log_domain(log_x))
    } else {
        lambert_w0(log_x.exp())
    }
}

// Halley on g(w) = w + ln w - L; only called for L > 20 where w > 2.
fn lambert_w0_log_domain(log_x: f64) -> f64 {
    if log_x.is_infinite() {
        return f64::INFINITY;
    }
    let mut w = log_x - log_x.ln();
    for _ in 0..HALLEY_MAX_ITER {
        let g = w + w.ln() - log_x;
        let g1 = 1.0 + 1.0 / w;
        let g2 = -1.0 / (w * w);
        let step = g / (g1 - 0.5 * g * g2 / g1);
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w {
            break;
        }
    }
    w
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Log-sum-exp over a slice; `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max.is_infinite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Streams `ln B_0, ln B_1, ...` using the Bell triangle carried in log space.
///
/// Each row starts with the last entry of the previous row and every
/// following entry is the sum of its left neighbour and the entry above that
/// neighbour; the first entry of row `n` is `B_n`. Every update is a single
/// two-term log-add-exp of positive quantities, so no cancellation occurs.
#[derive(Debug, Clone, Default)]
pub struct LogBellNumbers {
    row: Vec<f64>,
}

impl LogBellNumbers {
    pub fn new() -> Self {
        Self { row: Vec::new() }
    }
}

impl Iterator for LogBellNumbers {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.row.is_empty() {
            self.row.push(0.0);
            return Some(0.0);
        }
        let mut next = Vec::with_capacity(self.row.len() + 1);
        let mut acc = *self.row.last().expect("row is non-empty");
        next.push(acc);
        for &above in &self.row {
            acc = log_add_exp(acc, above);
            next.push(acc);
        }
        self.row = next;
        Some(self.row[0])
    }
}

/// Natural logs of the Bell numbers `B_0..=B_max_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogBellTable {
    values: Vec<f64>,
}

impl LogBellTable {
    /// Largest index accepted by [`build`](Self::build).
    pub const MAX_INDEX: usize = 1_000_000;

    pub fn build(max_index: usize) -> Result<Self, SpecFunError> {
        if max_index > Self::MAX_INDEX {
            return Err(domain("build_log_bell_table", max_index as f64));
        }
        let values = LogBellNumbers::new().take(max_index + 1).collect();
        Ok(Self { values })
    }

    pub fn max_index(&self) -> usize {
        self.values.len() - 1
    }

    #[inline]
    pub fn get(&self, y: u64) -> Option<f64> {
        usize::try_from(y).ok().and_then(|i| self.values.get(i).copied())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `build_log_bell_table` under its functional name.
pub fn build_log_bell_table(max_index: usize) -> Result<LogBellTable, SpecFunError> {
    LogBellTable::build(max_index)
}

const PSI_SHIFT: f64 = 6.0;

/// Digamma function for `x > 0`.
pub fn digamma(x: f64) -> Result<f64, SpecFunError> {
    if x.is_nan() || x <= 0.0 {
        return Err(domain("digamma", x));
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut x = x;
    let mut acc = 0.0;
    // psi(x) = psi(x + 1) - 1/x
    while x < PSI_SHIFT {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli tail: B_2k / (2k x^2k), k = 1..7
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    Ok(acc + x.ln() - 0.5 * inv - tail)
}

/// Trigamma function for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64, SpecFunError> {
    if x.is_nan() || x <= 0.0 {
        return Err(domain("trigamma", x));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let mut x = x;
    let mut acc = 0.0;
    // psi'(x) = psi'(x + 1) + 1/x^2
    while x < PSI_SHIFT {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B_2k / x^(2k+1), k = 1..7
    let tail = inv
        * inv2
        * (1.0 / 6.0
            - inv2
                * (1.0 / 30.0
                    - inv2
                        * (1.0 / 42.0
                            - inv2
                                * (1.0 / 30.0
                                    - inv2
                                        * (5.0 / 66.0
                                            - inv2 * (691.0 / 2730.0 - inv2 * 7.0 / 6.0))))));
    Ok(acc + inv + 0.5 * inv2 + tail)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> Result<f64, SpecFunError> {
    if x.is_nan() || x <= 0.0 {
        return Err(domain("ln_gamma", x));
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        let s = (PI * x).sin();
        return Ok((PI / s).ln() - ln_gamma(1.0 - x)?);
    }
    let z = x - 1.0;
    let mut series = LANCZOS_COEF[0];
    for (k, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        series += c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    Ok(0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + series.ln())
}

/// `ln(y!)`.
pub fn log_factorial(y: u64) -> f64 {
    if y < 2 {
        return 0.0;
    }
    ln_gamma(y as f64 + 1.0).expect("y + 1 is positive")
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 100_000;

fn check_gamma_args(function: &'static str, a: f64, x: f64) -> Result<(), SpecFunError> {
    if a.is_nan() || a <= 0.0 || a.is_infinite() {
        return Err(domain(function, a));
    }
    if x.is_nan() || x < 0.0 {
        return Err(domain(function, x));
    }
    Ok(())
}

fn log_gamma_prefactor(a: f64, x: f64) -> f64 {
    a * x.ln() - x - ln_gamma(a).expect("a > 0 checked by caller")
}

/// Lower regularized incomplete gamma `P(a, x)` by its power series.
/// Converges for every `x` but slowly once `x` is well above `a`.
pub(crate) fn gamma_p_series(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    (sum.ln() + log_gamma_prefactor(a, x)).exp().min(1.0)
}

/// Upper regularized incomplete gamma `Q(a, x)` by continued fraction
/// (modified Lentz). Valid for `x > a + 1`-ish; callers choose the region.
fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (h.ln() + log_gamma_prefactor(a, x)).exp().min(1.0)
}

/// Lower regularized incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> Result<f64, SpecFunError> {
    check_gamma_args("regularized_gamma_p", a, x)?;
    if x.is_infinite() {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        Ok(gamma_p_series(a, x))
    } else {
        Ok(1.0 - gamma_q_continued_fraction(a, x))
    }
}

/// Upper regularized incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64, SpecFunError> {
    check_gamma_args("regularized_gamma_q", a, x)?;
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        Ok(1.0 - gamma_p_series(a, x))
    } else {
        Ok(gamma_q_continued_fraction(a, x))
    }
}

/// `P(chi2_df > x)`.
pub fn chisq_sf(x: f64, df: u32) -> Result<f64, SpecFunError> {
    if df == 0 {
        return Err(domain("chisq_sf", 0.0));
    }
    if x.is_nan() || x < 0.0 {
        return Err(domain("chisq_sf", x));
    }
    regularized_gamma_q(0.5 * f64::from(df), 0.5 * x)
}

/// `P(chi2_df <= x)`.
pub fn chisq_cdf(x: f64, df: u32) -> Result<f64, SpecFunError> {
    if df == 0 {
        return Err(domain("chisq_cdf", 0.0));
    }
    if x.is_nan() || x < 0.0 {
        return Err(domain("chisq_cdf", x));
    }
    regularized_gamma_p(0.5 * f64::from(df), 0.5 * x)
}
