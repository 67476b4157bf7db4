//! Best approximation of `g(x) = e^{−2Bx}` on `[1/ξ, 1]` and the lower bounds on its
//! error used in the minimax argument.
//!
//! Rescaling `[1/ξ, 1]` onto `[-1, 1]` turns `g` into `e^{−2B/ξ} γ` with
//! `γ(t) = e^{−C(t+1)}` and `C = B(1 − 1/ξ)`, so everything reduces to `E_L(γ)`.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use super::bessel::ln_bessel_i;
use super::remez::{clenshaw, remez_best_approx, BestApproxResult};
use crate::error::{Error, Result};

/// The approximation problem for one `(ξ, B, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyApproxProblem {
    pub xi: f64,
    pub b: f64,
    pub l: usize,
}

impl PolyApproxProblem {
    pub fn new(xi: f64, b: f64, l: usize) -> Result<Self> {
        if !(xi > 1.0 && xi.is_finite()) {
            return Err(Error::invalid(format!("xi must exceed 1, got {xi}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::invalid(format!("B must be positive, got {b}")));
        }
        Ok(Self { xi, b, l })
    }

    /// `ξ = (2c₀/e) min{(1+λ) ln n, ln² n}` and `B = n(1+λ)ξ/(2S)` with `S = ⌈n(1+λ)⌉`.
    pub fn from_n_lambda(n: f64, lambda: f64, l: usize, c0: f64) -> Result<Self> {
        if !(n > 1.0 && lambda > 0.0 && c0 > 0.0) {
            return Err(Error::invalid(format!(
                "need n > 1, lambda > 0 and c0 > 0; got n = {n}, lambda = {lambda}, c0 = {c0}"
            )));
        }
        let ln_n = n.ln();
        let xi = (2.0 * c0 / E) * ((1.0 + lambda) * ln_n).min(ln_n * ln_n);
        let total = n * (1.0 + lambda);
        let s = total.ceil();
        Self::new(xi, total * xi / (2.0 * s), l)
    }

    /// `C = B(1 − 1/ξ)`.
    pub fn c(&self) -> f64 {
        self.b * (1.0 - 1.0 / self.xi)
    }

    /// Whether `B` lies in `[ξ/2 / (1 + 1/(n(1+λ))), ξ/2]`.
    pub fn b_in_range(&self, n: f64, lambda: f64) -> bool {
        let upper = self.xi / 2.0;
        let lower = upper / (1.0 + 1.0 / (n * (1.0 + lambda)));
        // relative slack for the rounding in ξ/(2S)
        self.b <= upper * (1.0 + 1e-14) && self.b >= lower * (1.0 - 1e-14)
    }
}

/// The default `c₀ = 1/e`.
pub const DEFAULT_C0: f64 = 1.0 / E;

/// `E_L(γ, [-1,1])` for `γ(t) = e^{−C(t+1)}`.
///
/// `γ = e^{−C}[I₀(C) + 2 Σ_k (−1)^k I_k(C) T_k]`, and the part of degree `<= L` is
/// reproduced exactly by any competitor, so the exchange runs on the Chebyshev tail
/// `Σ_{k>L}` alone. That keeps the residual at full relative precision even when
/// `E_L` is far below the rounding level of `γ` itself.
pub fn best_approx_gamma(c: f64, l: usize) -> Result<BestApproxResult> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("C must be positive, got {c}")));
    }
    // ln|a_k| with a_k = 2(−1)^k e^{−C} I_k(C)
    let ln_a = |k: usize| 2f64.ln() - c + ln_bessel_i(k as u64, c);
    let scale_ln = ln_a(l + 1);
    let mut tail = vec![0.0; l + 1];
    let mut k = l + 1;
    loop {
        let rel = (ln_a(k) - scale_ln).exp();
        tail.push(if k % 2 == 0 { rel } else { -rel });
        if (k as f64) > c && rel < 1e-22 {
            break;
        }
        k += 1;
    }
    let scaled = remez_best_approx(|t| clenshaw(&tail, t), (-1.0, 1.0), l)?;
    let scale = scale_ln.exp();

    // the best approximation of γ is its own head plus the best approximation of the tail
    let mut coeffs: Vec<f64> = (0..=l)
        .map(|j| {
            let head = (ln_a(j) - if j == 0 { 2f64.ln() } else { 0.0 }).exp();
            if j % 2 == 0 { head } else { -head }
        })
        .collect();
    for (cj, sj) in coeffs.iter_mut().zip(&scaled.coeffs) {
        *cj += scale * sj;
    }
    Ok(BestApproxResult {
        error: scale * scaled.error,
        levelled_error: scale * scaled.levelled_error,
        alternation_residuals: scaled.alternation_residuals.iter().map(|r| scale * r).collect(),
        coeffs,
        ..scaled
    })
}

/// `(K, K e^{−C} I_{L+4K}(C))` for `K = 1..=⌈C⌉`.
pub fn bessel_sum_terms(c: f64, l: usize) -> Vec<(u64, f64)> {
    let kmax = c.ceil().max(1.0) as u64;
    (1..=kmax)
        .map(|k| (k, k as f64 * (ln_bessel_i(l as u64 + 4 * k, c) - c).exp()))
        .collect()
}

/// `max_K K e^{−C} I_{L+4K}(C)` over `K = 1..=⌈C⌉`, with the maximising `K`.
pub fn bessel_sum_lower_bound(c: f64, l: usize) -> (u64, f64) {
    bessel_sum_terms(c, l)
        .into_iter()
        .fold((1, f64::NEG_INFINITY), |best, t| if t.1 > best.1 { t } else { best })
}

/// Shape of the lower bound on `E_L(g)` without its constant: 1 when `L <= √(ξ/2)`,
/// `√ξ e^{−L²/ξ} / (L (1 + (2L/ξ)²)^{1/4})` beyond.
pub fn decay_shape(xi: f64, l: usize) -> f64 {
    let lf = l as f64;
    if lf <= (xi / 2.0).sqrt() {
        1.0
    } else {
        xi.sqrt() * (-lf * lf / xi).exp() / (lf * (1.0 + (2.0 * lf / xi).powi(2)).powf(0.25))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxBoundsReport {
    pub xi: f64,
    pub b: f64,
    pub c: f64,
    pub l: usize,
    /// `E_L(γ, [-1, 1])`.
    pub e_gamma: f64,
    /// `E_L(g, [1/ξ, 1]) = e^{−2B/ξ} E_L(γ)`.
    pub e_g: f64,
    pub bessel_sum_bound: f64,
    pub bessel_sum_best_k: u64,
    pub bessel_sum_holds: bool,
    /// Whether every individual `K` term stays below `E_L(γ)`.
    pub bessel_sum_holds_each_k: bool,
    /// `"constant"` when `L <= √(ξ/2)`, `"gaussian"` otherwise.
    pub decay_branch: String,
    pub decay_shape: f64,
    /// `E_L(g)` divided by the shape: the constant the bound would need here.
    pub implied_k: f64,
    pub exchanges: usize,
}

pub fn approx_bounds(problem: &PolyApproxProblem) -> Result<ApproxBoundsReport> {
    let c = problem.c();
    let best = best_approx_gamma(c, problem.l)?;
    let e_gamma = best.error;
    let e_g = (-2.0 * problem.b / problem.xi).exp() * e_gamma;
    let terms = bessel_sum_terms(c, problem.l);
    let (bessel_sum_best_k, bessel_sum_bound) = bessel_sum_lower_bound(c, problem.l);
    let shape = decay_shape(problem.xi, problem.l);
    let constant_branch = (problem.l as f64) <= (problem.xi / 2.0).sqrt();
    Ok(ApproxBoundsReport {
        xi: problem.xi,
        b: problem.b,
        c,
        l: problem.l,
        e_gamma,
        e_g,
        bessel_sum_bound,
        bessel_sum_best_k,
        bessel_sum_holds: e_gamma >= bessel_sum_bound,
        bessel_sum_holds_each_k: terms.iter().all(|t| e_gamma >= t.1),
        decay_branch: if constant_branch { "constant" } else { "gaussian" }.to_string(),
        decay_shape: shape,
        implied_k: e_g / shape,
        exchanges: best.exchanges,
    })
}
