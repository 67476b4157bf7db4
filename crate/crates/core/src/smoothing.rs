//! Random truncation points for the alternating series estimator.
//!
//! The series `Σ (-1)^i (i+1) λ^i Z_{i+1}` has coefficients growing like `λ^i`;
//! averaging its truncation over an independent random location `L` multiplies
//! the i-th coefficient by the tail probability `P(L >= i)`. Everything here is
//! computed in log space so `λ^i` never overflows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ln_factorial, log_sum_exp};

/// Law of the truncation variable `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothingSpec {
    /// No truncation: `P(L >= i) = 1` for every `i`.
    None,
    Poisson { beta: f64 },
    Binomial { trials: u64, p: f64 },
}

impl SmoothingSpec {
    pub fn poisson(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid(format!("Poisson smoothing needs beta > 0, got {beta}")));
        }
        Ok(Self::Poisson { beta })
    }

    pub fn binomial(trials: u64, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("Binomial smoothing needs 0 < p < 1, got {p}")));
        }
        Ok(Self::Binomial { trials, p })
    }

    /// Binomial(x₀, 2/(λ+2)) smoothing.
    pub fn binomial2(lambda: f64, trials: u64) -> Result<Self> {
        check_lambda_positive(lambda)?;
        Self::binomial(trials, 2.0 / (lambda + 2.0))
    }

    /// Binomial(x₀, 1/(λ+1)) smoothing, i.e. the Euler transform truncated at x₀.
    /// No optimal `x₀` is known for this family; the caller chooses it.
    pub fn euler(lambda: f64, trials: u64) -> Result<Self> {
        check_lambda_positive(lambda)?;
        Self::binomial(trials, 1.0 / (lambda + 1.0))
    }

    /// Poisson smoothing at the MSE-bound minimiser [`optimal_poisson_beta`].
    pub fn optimal_poisson(lambda: f64, n: f64) -> Result<Self> {
        Self::poisson(optimal_poisson_beta(lambda, n)?)
    }

    /// Binomial(x̃₀, 2/(λ+2)) smoothing with x̃₀ from [`optimal_binomial_x0`].
    pub fn optimal_binomial2(lambda: f64, n: f64) -> Result<Self> {
        Self::binomial2(lambda, optimal_binomial_x0(lambda, n)?)
    }

    /// `ln P(L >= i)`; `-inf` when the tail is empty.
    pub fn log_tail(&self, i: u64) -> f64 {
        if i == 0 {
            return 0.0;
        }
        match *self {
            SmoothingSpec::None => 0.0,
            SmoothingSpec::Poisson { beta } => poisson_log_tail(beta, i),
            SmoothingSpec::Binomial { trials, p } => binomial_log_tail(trials, p, i),
        }
    }

    /// `P(L >= i)`.
    pub fn tail_probability(&self, i: u64) -> f64 {
        self.log_tail(i).exp()
    }

    /// Upper bound on every `|c_i|`: `E[(L+1) λ^L]` for a proper smoothing law, and the
    /// exact maximum of the unsmoothed coefficients (infinite when `λ >= 1`).
    pub fn max_coefficient_bound(&self, lambda: f64) -> f64 {
        match *self {
            SmoothingSpec::None => {
                if lambda < 1.0 {
                    max_unsmoothed_coefficient(lambda)
                } else {
                    f64::INFINITY
                }
            }
            SmoothingSpec::Poisson { beta } => (beta * (lambda - 1.0)).exp() * (1.0 + beta * lambda),
            SmoothingSpec::Binomial { trials, p } => {
                // E[(L+1)λ^L] = (1-p+pλ)^{x0} + x0 pλ (1-p+pλ)^{x0-1}
                let q = 1.0 - p + p * lambda;
                let x0 = trials as f64;
                q.powf(x0) + x0 * p * lambda * q.powf(x0 - 1.0)
            }
        }
    }
}

fn check_lambda_positive(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// `(j*+1) λ^{j*}` with `j* = max(0, ⌊(2λ−1)/(1−λ)⌋)`.
pub(crate) fn psi_unchecked(lambda: f64) -> f64 {
    let j = peak_ratio(lambda).floor().max(0.0);
    (j + 1.0) * lambda.powf(j)
}

/// Index of the largest `(i+1) λ^i` for `0 < λ < 1`. The ratio of consecutive terms is
/// `λ(i+2)/(i+1)`, which is at least 1 exactly while `i <= (2λ−1)/(1−λ)`, so the peak
/// sits at the ceiling of that quantity (ties at both neighbours when it is an integer).
pub fn unsmoothed_argmax(lambda: f64) -> u64 {
    peak_ratio(lambda).ceil().max(0.0) as u64
}

/// `(2λ−1)/(1−λ)`, snapped to an integer when rounding has only just missed one.
fn peak_ratio(lambda: f64) -> f64 {
    let x = (2.0 * lambda - 1.0) / (1.0 - lambda);
    if (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0) {
        x.round()
    } else {
        x
    }
}

/// `max_i (i+1) λ^i` for `0 < λ < 1`.
pub fn max_unsmoothed_coefficient(lambda: f64) -> f64 {
    let j = unsmoothed_argmax(lambda) as f64;
    (j + 1.0) * lambda.powf(j)
}

/// `ln P(Poisson(beta) >= i)` for `i >= 1`.
fn poisson_log_tail(beta: f64, i: u64) -> f64 {
    let fi = i as f64;
    if fi > beta {
        // P(L >= i) = pmf(i) * Σ_m beta^m i!/(i+m)!, all terms positive
        let log_pmf = -beta + fi * beta.ln() - ln_factorial(i);
        let (mut term, mut sum) = (1.0f64, 1.0f64);
        let mut m = 1.0;
        loop {
            term *= beta / (fi + m);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            m += 1.0;
        }
        log_pmf + sum.ln()
    } else {
        // i <= beta: the tail is at least about one half, so 1 - CDF is well conditioned
        let log_pmfs: Vec<f64> = (0..i)
            .map(|k| -beta + k as f64 * beta.ln() - ln_factorial(k))
            .collect();
        let cdf = log_sum_exp(&log_pmfs).exp();
        (-cdf).ln_1p()
    }
}

/// `ln P(Binomial(trials, p) >= i)` by direct pmf summation.
fn binomial_log_tail(trials: u64, p: f64, i: u64) -> f64 {
    if i > trials {
        return f64::NEG_INFINITY;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let lf = ln_factorial(trials);
    let terms: Vec<f64> = (i..=trials)
        .map(|k| lf - ln_factorial(k) - ln_factorial(trials - k) + k as f64 * lp + (trials - k) as f64 * lq)
        .collect();
    log_sum_exp(&terms).min(0.0)
}

/// Signed series coefficients `c_i = (-1)^i (i+1) λ^i P(L >= i)` held as `(sign, ln|c_i|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSeq {
    log_abs: Vec<f64>,
    sign: Vec<i8>,
}

impl CoefficientSeq {
    pub fn len(&self) -> usize {
        self.sign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sign.is_empty()
    }

    pub fn log_abs(&self) -> &[f64] {
        &self.log_abs
    }

    pub fn signs(&self) -> &[i8] {
        &self.sign
    }

    /// `c_i` reconstructed in linear space (may overflow to ±inf for huge `λ^i`).
    pub fn value(&self, i: usize) -> f64 {
        match self.sign[i] {
            0 => 0.0,
            s => s as f64 * self.log_abs[i].exp(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }
}

/// Coefficients `c_0..=c_max_i` of the smoothed series for a given `λ > 0`.
pub fn coefficients(spec: &SmoothingSpec, lambda: f64, max_i: u64) -> Result<CoefficientSeq> {
    check_lambda_positive(lambda)?;
    let ln_lambda = lambda.ln();
    let mut log_abs = Vec::with_capacity(max_i as usize + 1);
    let mut sign = Vec::with_capacity(max_i as usize + 1);
    for i in 0..=max_i {
        let lt = spec.log_tail(i);
        if lt == f64::NEG_INFINITY {
            log_abs.push(f64::NEG_INFINITY);
            sign.push(0);
            continue;
        }
        log_abs.push(((i + 1) as f64).ln() + i as f64 * ln_lambda + lt);
        sign.push(if i % 2 == 0 { 1 } else { -1 });
    }
    Ok(CoefficientSeq { log_abs, sign })
}

/// Poisson parameter minimising the MSE bound `e^{-2β}n² + n e^{2β(2λ-1)}`:
/// `β̃ = ln(n / (2λ-1)) / (4λ)`.
pub fn optimal_poisson_beta(lambda: f64, n: f64) -> Result<f64> {
    if !(lambda >= 1.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("optimal beta requires lambda >= 1, got {lambda}")));
    }
    let denom = 2.0 * lambda - 1.0;
    if !(n > denom && n.is_finite()) {
        return Err(Error::invalid(format!(
            "optimal beta requires n > 2*lambda - 1 (n = {n}, 2*lambda - 1 = {denom})"
        )));
    }
    Ok((n / denom).ln() / (4.0 * lambda))
}

/// Number of trials minimising the Binomial(x₀, 2/(λ+2)) MSE bound:
/// `x̃₀ = ⌊(3/10) log₃(nλ² / ((λ+1)(λ²(3^{10/3}-1) - 4λ - 4)))⌋`, clamped at 0.
pub fn optimal_binomial_x0(lambda: f64, n: f64) -> Result<u64> {
    if !(lambda >= 1.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("optimal x0 requires lambda >= 1, got {lambda}")));
    }
    let denom = (lambda + 1.0) * (lambda * lambda * (3f64.powf(10.0 / 3.0) - 1.0) - 4.0 * lambda - 4.0);
    let arg = n * lambda * lambda / denom;
    if !(arg > 0.0 && arg.is_finite()) {
        return Err(Error::invalid(format!(
            "optimal x0 undefined: log argument {arg} is not positive (lambda = {lambda}, n = {n})"
        )));
    }
    let interior = 0.3 * arg.ln() / 3f64.ln();
    Ok(if interior <= 0.0 { 0 } else { interior.floor() as u64 })
}
