//! Concentration parameter of a Dirichlet-process prior, fitted by matching the
//! expected number of distinct cells.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::FrequencyProfile;

/// Index range of the moment equation `K_n = Σ_j ϑ/(ϑ+j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaConvention {
    /// `j = 1..n-1`.
    #[default]
    Shifted,
    /// `j = 0..n-1`, the usual Ewens expectation.
    Standard,
}

impl ThetaConvention {
    fn first_index(self) -> f64 {
        match self {
            ThetaConvention::Shifted => 1.0,
            ThetaConvention::Standard => 0.0,
        }
    }
}

impl fmt::Display for ThetaConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThetaConvention::Shifted => "shifted",
            ThetaConvention::Standard => "standard",
        })
    }
}

impl FromStr for ThetaConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shifted" => Ok(ThetaConvention::Shifted),
            "standard" => Ok(ThetaConvention::Standard),
            _ => Err(Error::invalid(format!("unknown theta convention '{s}'"))),
        }
    }
}

/// `ψ(a+d) − ψ(a)` for `a > 0`, `d >= 0`, without the cancellation of subtracting two
/// digammas. `d` is passed separately because `a + d` may not be representable.
fn digamma_difference(mut a: f64, d: f64) -> f64 {
    let mut b = a + d;
    let mut acc = 0.0;
    // ψ(x+1) = ψ(x) + 1/x: shift both arguments up until the asymptotic series is accurate
    while a < 10.0 {
        acc += 1.0 / a - 1.0 / b;
        a += 1.0;
        b += 1.0;
    }
    let (a2, b2) = (a * a, b * b);
    acc + (d / a).ln_1p() + d / (2.0 * a * b) + d * (a + b) / (12.0 * a2 * b2)
        - (1.0 / (a2 * a2) - 1.0 / (b2 * b2)) / 120.0
        + (1.0 / (a2 * a2 * a2) - 1.0 / (b2 * b2 * b2)) / 252.0
}

/// Right side of the moment equation, `Σ_{j=j0}^{n-1} ϑ/(ϑ+j)`.
pub fn dirichlet_theta_equation(theta: f64, n: u64, convention: ThetaConvention) -> f64 {
    let j0 = convention.first_index();
    let n = n as f64;
    if n <= j0 {
        return 0.0;
    }
    if n < 64.0 {
        let mut s = 0.0;
        let mut j = j0;
        while j < n {
            s += theta / (theta + j);
            j += 1.0;
        }
        return s;
    }
    // Σ_{j=j0}^{n-1} 1/(ϑ+j) = ψ(ϑ+n) − ψ(ϑ+j0)
    theta * digamma_difference(theta + j0, n - j0)
}

/// Solves the moment equation for `ϑ` given the observed number of occupied cells.
pub fn fit_dirichlet_theta(profile: &FrequencyProfile, convention: ThetaConvention) -> Result<f64> {
    let n = profile.n();
    let k = profile.k() as f64;
    if n == 0 {
        return Err(Error::invalid("cannot fit theta on an empty profile"));
    }
    // The right side increases from its ϑ→0 limit to its ϑ→∞ supremum.
    let (inf, sup) = match convention {
        ThetaConvention::Shifted => (0.0, (n - 1) as f64),
        ThetaConvention::Standard => (1.0, n as f64),
    };
    if k >= sup {
        return Err(Error::Unbounded(format!(
            "K_n = {k} reaches the supremum {sup} of the moment equation; theta is infinite"
        )));
    }
    if k <= inf {
        return Err(Error::Unbounded(format!(
            "K_n = {k} equals the theta -> 0 limit of the moment equation; no positive root"
        )));
    }
    let f = |ln_theta: f64| dirichlet_theta_equation(ln_theta.exp(), n, convention) - k;

    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while f(lo) > 0.0 {
        lo -= 2.0 * (hi - lo);
        if lo < -700.0 {
            return Err(Error::NonConvergence { routine: "fit_dirichlet_theta", detail: "no lower bracket".into() });
        }
    }
    while f(hi) < 0.0 {
        hi += 2.0 * (hi - lo);
        if hi > 700.0 {
            return Err(Error::NonConvergence { routine: "fit_dirichlet_theta", detail: "no upper bracket".into() });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile_nk(n: u64, k: u64) -> FrequencyProfile {
        // k-1 singletons and one cell absorbing the rest
        assert!(k >= 1 && n >= k);
        let mut freqs = vec![1u64; (k - 1) as usize];
        freqs.push(n - (k - 1));
        FrequencyProfile::from_frequencies(freqs)
    }

    #[test]
    fn three_records_one_cell() {
        let theta = fit_dirichlet_theta(&profile_nk(3, 1), ThetaConvention::Shifted).unwrap();
        assert!((theta - 2f64.sqrt()).abs() < 1e-12);
        let resid = theta / (theta + 1.0) + theta / (theta + 2.0) - 1.0;
        assert!(resid.abs() < 1e-10);
    }

    #[test]
    fn unbounded_cases() {
        assert!(matches!(
            fit_dirichlet_theta(&profile_nk(2, 1), ThetaConvention::Shifted),
            Err(Error::Unbounded(_))
        ));
        assert!(matches!(
            fit_dirichlet_theta(&profile_nk(5, 5), ThetaConvention::Standard),
            Err(Error::Unbounded(_))
        ));
        assert!(fit_dirichlet_theta(&FrequencyProfile::default(), ThetaConvention::Shifted).is_err());
    }

    #[test]
    fn digamma_difference_matches_direct_sum() {
        for &(theta, n) in &[(0.3, 100u64), (7.5, 1000), (2.7e5, 100_000), (1e9, 500)] {
            let direct: f64 = (1..n).map(|j| theta / (theta + j as f64)).sum();
            let fast = dirichlet_theta_equation(theta, n, ThetaConvention::Shifted);
            assert!((direct - fast).abs() <= 1e-11 * direct, "{theta} {n}: {direct} vs {fast}");
        }
    }

    #[test]
    fn root_reproduces_k() {
        for &(n, k) in &[(10u64, 4u64), (1000, 37), (100_000, 64_000), (100_000, 99_990)] {
            for conv in [ThetaConvention::Shifted, ThetaConvention::Standard] {
                let theta = fit_dirichlet_theta(&profile_nk(n, k), conv).unwrap();
                let back = dirichlet_theta_equation(theta, n, conv);
                assert!((back - k as f64).abs() < 1e-8, "{n} {k} {conv}: {back}");
            }
        }
    }

    #[test]
    fn standard_convention_is_ewens_expectation() {
        // Σ_{j=0}^{n-1} with ϑ = 1 is the harmonic number H_n
        let h4 = 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
        assert!((dirichlet_theta_equation(1.0, 4, ThetaConvention::Standard) - h4).abs() < 1e-15);
        assert!((dirichlet_theta_equation(1.0, 4, ThetaConvention::Shifted) - (h4 - 1.0)).abs() < 1e-15);
    }
}
