//! Closed-form risk bounds: the variance bound below `λ = 1`, MSE/NMSE upper bounds
//! for both smoothing laws, limits of predictability and the minimax lower bound.

use std::collections::BTreeMap;
use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smoothing::{optimal_binomial_x0, optimal_poisson_beta, psi_unchecked};

const LN_3: f64 = 1.098_612_288_668_109_8;

fn check_lambda_ge1(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 1.0) {
        return Err(Error::invalid(format!("bound requires lambda >= 1, got {lambda}")));
    }
    Ok(())
}

/// `Ψ(λ) = (j*+1) λ^{j*}` with `j* = max(0, ⌊(2λ−1)/(1−λ)⌋)`, the largest `|c_i|` of
/// the unsmoothed series.
pub fn psi(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid(format!("psi is defined for 0 < lambda < 1, got {lambda}")));
    }
    Ok(psi_unchecked(lambda))
}

/// Variance bound of the unbiased estimator: `Ψ(λ)² E[Z̄₁] − E[Z₁^pop]/(λ+1)`.
pub fn variance_bound_lt1(lambda: f64, expected_zbar1: f64, expected_z1_population: f64) -> Result<f64> {
    let p = psi(lambda)?;
    Ok(p * p * expected_zbar1 - expected_z1_population / (lambda + 1.0))
}

/// `A(λ) = 2λ / (2λ−1)^{1 − 1/(2λ)}`.
pub fn a_constant(lambda: f64) -> Result<f64> {
    check_lambda_ge1(lambda)?;
    let m = 2.0 * lambda - 1.0;
    Ok(2.0 * lambda * (-(1.0 - 1.0 / (2.0 * lambda)) * m.ln()).exp())
}

/// `sup_{λ>=1} A(λ)`; `A` decreases from `A(1) = 2` towards 1.
pub const A_MAX: f64 = 2.0;

/// `e^{−2β} n² + n e^{2β(2λ−1)}`.
pub fn mse_bound_poisson(lambda: f64, n: f64, beta: f64) -> Result<f64> {
    check_lambda_ge1(lambda)?;
    if !(n > 0.0 && beta >= 0.0) {
        return Err(Error::invalid(format!("need n > 0 and beta >= 0, got n = {n}, beta = {beta}")));
    }
    Ok((-2.0 * beta).exp() * n * n + n * (2.0 * beta * (2.0 * lambda - 1.0)).exp())
}

/// `A(λ)/n^{1/(2λ)}`, which is exactly the MSE bound at `β̃` divided by `n²`.
pub fn nmse_bound_poisson(lambda: f64, n: f64) -> Result<f64> {
    check_lambda_ge1(lambda)?;
    // validates n > 2λ − 1
    optimal_poisson_beta(lambda, n)?;
    Ok(a_constant(lambda)? * n.powf(-1.0 / (2.0 * lambda)))
}

/// `n (λ/(λ+2))^{2x₀} [3^{10x₀/3} + n (λ/(2(λ+1)))²]`.
pub fn mse_bound_binomial2(lambda: f64, n: f64, x0: u64) -> Result<f64> {
    check_lambda_ge1(lambda)?;
    if n <= 0.0 {
        return Err(Error::invalid(format!("need n > 0, got {n}")));
    }
    let x = x0 as f64;
    let q = lambda / (2.0 * (lambda + 1.0));
    let log_shrink = 2.0 * x * (lambda / (lambda + 2.0)).ln();
    Ok(n * log_shrink.exp() * ((10.0 * x / 3.0 * LN_3).exp() + n * q * q))
}

/// Rate exponent of the Binomial NMSE bound, `3 log₃(1 + 2/λ)/5`.
pub fn nmse_exponent_binomial2(lambda: f64) -> Result<f64> {
    check_lambda_ge1(lambda)?;
    Ok(3.0 * (2.0 / lambda).ln_1p() / (5.0 * LN_3))
}

/// MSE bound at the integer `x̃₀`, divided by `n²`.
pub fn nmse_bound_binomial2(lambda: f64, n: f64) -> Result<f64> {
    let x0 = optimal_binomial_x0(lambda, n)?;
    Ok(mse_bound_binomial2(lambda, n, x0)? / (n * n))
}

/// `C(λ)`: the NMSE bound times `n^{3log₃(1+2/λ)/5}` when `x₀` takes its unrounded
/// optimum `0.3 log₃(nD)`. With that choice the product no longer depends on `n` and
/// equals `D^{−e}(D + (λ/(2(λ+1)))²)`, where `e` is the rate exponent and
/// `D = λ²/((λ+1)(λ²(3^{10/3}−1) − 4λ − 4))`.
pub fn c_constant(lambda: f64) -> Result<f64> {
    let e = nmse_exponent_binomial2(lambda)?;
    let d = lambda * lambda
        / ((lambda + 1.0) * (lambda * lambda * ((10.0f64 / 3.0 * LN_3).exp() - 1.0) - 4.0 * lambda - 4.0));
    let q = lambda / (2.0 * (lambda + 1.0));
    Ok((-e * d.ln()).exp() * (d + q * q))
}

/// `sup_{λ>=1} C(λ)`, located by a log-spaced scan and golden-section refinement.
pub fn c_max() -> f64 {
    let c = |ln_l: f64| c_constant(ln_l.exp()).expect("lambda >= 1");
    let steps = 400;
    let hi = 12.0f64; // λ up to e¹² ≈ 1.6e5; C tends to 1/4 beyond
    let (mut best_i, mut best) = (0usize, f64::NEG_INFINITY);
    for i in 0..=steps {
        let v = c(hi * i as f64 / steps as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let step = hi / steps as f64;
    let mut a = (best_i as f64 - 1.0).max(0.0) * step;
    let mut b = (best_i as f64 + 1.0) * step;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if c(x1) < c(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    c(0.5 * (a + b)).max(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingKind {
    Poisson,
    Binomial2,
}

/// Coefficient of `log n` in the largest `λ` for which the NMSE bound stays below `δ`:
/// `1/(2 log(A/δ))` for Poisson and `6/(5 log 3 · log(C/δ))` for Binomial.
pub fn predictability_limit(kind: SmoothingKind, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    predictability_limit_with(kind, delta, match kind {
        SmoothingKind::Poisson => A_MAX,
        SmoothingKind::Binomial2 => c_max(),
    })
}

/// As [`predictability_limit`] with an explicit constant in place of `A` or `C`.
pub fn predictability_limit_with(kind: SmoothingKind, delta: f64, constant: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }
    let log_ratio = (constant / delta).ln();
    if !(log_ratio > 0.0) {
        return Err(Error::Unbounded(format!(
            "delta = {delta} is not below the constant {constant}; the limit is infinite"
        )));
    }
    Ok(match kind {
        SmoothingKind::Poisson => 1.0 / (2.0 * log_ratio),
        SmoothingKind::Binomial2 => 6.0 / (5.0 * LN_3 * log_ratio),
    })
}

/// Minimax lower bound on the NMSE of any estimator, up to the universal constant `k`.
pub fn minimax_lower_bound(lambda: f64, n: f64, k: f64) -> Result<f64> {
    if !(lambda + 1.0 > E * E) {
        return Err(Error::invalid(format!(
            "the lower bound needs lambda + 1 > e^2 (about 7.389), got lambda = {lambda}"
        )));
    }
    if !(n >= 3.0) {
        return Err(Error::invalid(format!("the lower bound needs n >= 3, got {n}")));
    }
    if !(k > 0.0) {
        return Err(Error::invalid(format!("constant K must be positive, got {k}")));
    }
    let ln_n = n.ln();
    if lambda + 1.0 > ln_n {
        return Ok(k);
    }
    let base = ln_n.sqrt() / (n * (1.0 + lambda));
    Ok(k * (1.0 + lambda) / ln_n * (E * E / (1.0 + lambda) * base.ln()).exp())
}

/// A family of bound values over a grid of `λ` at fixed `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub kind: String,
    pub n: f64,
    /// `(λ, value)`, sorted by `λ`.
    pub points: Vec<(f64, f64)>,
    pub constants: BTreeMap<String, f64>,
}

/// Evaluates every bound on `steps+1` evenly spaced `λ` in `[lambda_min, lambda_max]`
/// for each `n`. Points outside a bound's domain are skipped.
pub fn bound_curves(lambda_min: f64, lambda_max: f64, steps: usize, ns: &[f64], k: f64) -> Result<Vec<BoundCurve>> {
    if !(lambda_min > 0.0 && lambda_max >= lambda_min && lambda_max.is_finite()) {
        return Err(Error::invalid(format!(
            "need 0 < lambda_min <= lambda_max, got [{lambda_min}, {lambda_max}]"
        )));
    }
    if ns.is_empty() {
        return Err(Error::invalid("at least one n is required"));
    }
    let steps = steps.max(1);
    let grid: Vec<f64> = (0..=steps)
        .map(|i| lambda_min + (lambda_max - lambda_min) * i as f64 / steps as f64)
        .collect();
    type BoundFn = fn(f64, f64, f64) -> Result<f64>;
    let kinds: [(&str, BoundFn); 6] = [
        ("psi", |l, _, _| psi(l)),
        ("a_lambda", |l, _, _| a_constant(l)),
        ("c_lambda", |l, _, _| c_constant(l)),
        ("nmse_poisson", |l, n, _| nmse_bound_poisson(l, n)),
        ("nmse_binomial2", |l, n, _| nmse_bound_binomial2(l, n)),
        ("minimax_lower", minimax_lower_bound),
    ];
    let mut out = Vec::new();
    for &n in ns {
        if !(n > 0.0) {
            return Err(Error::invalid(format!("n must be positive, got {n}")));
        }
        for (kind, f) in kinds {
            let points: Vec<(f64, f64)> = grid
                .iter()
                .filter_map(|&l| f(l, n, k).ok().map(|v| (l, v)))
                .collect();
            if points.is_empty() {
                continue;
            }
            let mut constants = BTreeMap::new();
            if kind == "minimax_lower" {
                constants.insert("K".to_string(), k);
            }
            out.push(BoundCurve { kind: kind.to_string(), n, points, constants });
        }
    }
    Ok(out)
}
