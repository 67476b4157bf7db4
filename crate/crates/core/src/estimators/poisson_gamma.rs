//! Poisson-Gamma superpopulation fit used by the Bethlehem and Skinner estimators.
//!
//! Cell probabilities are Gamma(α, β) with `α = 1/(Kβ)`, so sample counts are negative
//! binomial. Only occupied cells are observed, hence the zero-truncated likelihood.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ln_factorial, CompensatedSum};
use crate::profile::FrequencyProfile;

/// How the superpopulation model is matched to the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonGammaProtocol {
    /// Counts have exposure `n`, `K̂ = n̄ K_n / Z₁`, and only an interior maximum is accepted.
    #[default]
    Sample,
    /// Counts are treated as population-scale (exposure `n̄`), `K̂ = n̄ K_n / n`, and a
    /// likelihood that keeps rising towards `β → 0` is resolved to the Poisson limit.
    Population,
}

impl fmt::Display for PoissonGammaProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoissonGammaProtocol::Sample => "sample",
            PoissonGammaProtocol::Population => "population",
        })
    }
}

impl FromStr for PoissonGammaProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(PoissonGammaProtocol::Sample),
            "population" => Ok(PoissonGammaProtocol::Population),
            _ => Err(Error::invalid(format!("unknown Poisson-Gamma protocol '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonGammaFit {
    pub alpha: f64,
    pub beta: f64,
    /// Estimated number of cells in the population.
    pub k_hat: f64,
    /// The maximum sits at the `β → 0` end of the search range; `β` is that end point,
    /// where both estimators agree with their Poisson limits to about `1e-10`.
    #[serde(default)]
    pub poisson_limit: bool,
}

impl PoissonGammaFit {
    pub fn as_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("alpha".to_string(), self.alpha),
            ("beta".to_string(), self.beta),
            ("k_hat".to_string(), self.k_hat),
        ])
    }
}

/// Zero-truncated negative-binomial log-likelihood at `ln β`, with `α = 1/(Kβ)`.
fn log_likelihood(entries: &[(u64, u64)], n: f64, cells: f64, ln_beta: f64) -> f64 {
    let beta = ln_beta.exp();
    let alpha = 1.0 / (cells * beta);
    let u = n * beta;
    let ln1p_u = u.ln_1p();
    let ln_odds = u.ln() - ln1p_u;
    let alpha_ln1p = alpha * ln1p_u;
    // ln P(count > 0) = ln(1 − (1+u)^{−α})
    let ln_nonzero = (-(-alpha_ln1p).exp_m1()).ln();

    let mut ll = CompensatedSum::new();
    let mut rising = 0.0;
    let mut next = 0u64;
    for &(i, count) in entries {
        // entries ascend in i, so the rising factorial α(α+1)…(α+i−1) is extended incrementally
        while next < i {
            rising += (alpha + next as f64).ln();
            next += 1;
        }
        let per_cell = rising - ln_factorial(i) + i as f64 * ln_odds - alpha_ln1p - ln_nonzero;
        ll.add(count as f64 * per_cell);
    }
    ll.value()
}

const GRID_LO: f64 = -25.0;
const GRID_HI: f64 = 25.0;
const GRID_STEPS: usize = 200;

/// Maximises the likelihood over `ln(nβ)` by a coarse grid followed by golden-section search.
/// Returns `ln β` and whether the `β → 0` boundary was accepted.
fn maximise(entries: &[(u64, u64)], n: f64, cells: f64, accept_poisson_limit: bool) -> Result<(f64, bool)> {
    let ln_n = n.ln();
    let ll = |ln_u: f64| log_likelihood(entries, n, cells, ln_u - ln_n);
    let step = (GRID_HI - GRID_LO) / GRID_STEPS as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for s in 0..=GRID_STEPS {
        let v = ll(GRID_LO + s as f64 * step);
        if v > best.1 {
            best = (s, v);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::NonConvergence {
            routine: "fit_poisson_gamma",
            detail: "log-likelihood is not finite anywhere on the search grid".into(),
        });
    }
    if best.0 == 0 && accept_poisson_limit {
        return Ok((GRID_LO - ln_n, true));
    }
    if best.0 == 0 || best.0 == GRID_STEPS {
        let side = if best.0 == 0 { "beta -> 0 (Poisson limit)" } else { "beta -> infinity" };
        return Err(Error::NonConvergence {
            routine: "fit_poisson_gamma",
            detail: format!("likelihood increases towards {side}; no interior maximum"),
        });
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = GRID_LO + (best.0 - 1) as f64 * step;
    let mut b = GRID_LO + (best.0 + 1) as f64 * step;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (ll(x1), ll(x2));
    for _ in 0..200 {
        if b - a < 1e-10 {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = ll(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = ll(x1);
        }
    }
    Ok((0.5 * (a + b) - ln_n, false))
}

fn fit_with_cells(profile: &FrequencyProfile, cells: f64, exposure: f64, accept_limit: bool) -> Result<PoissonGammaFit> {
    if profile.is_empty() {
        return Err(Error::invalid("cannot fit a Poisson-Gamma model to an empty profile"));
    }
    if !(cells.is_finite() && cells > 0.0) {
        return Err(Error::invalid(format!("number of cells must be positive, got {cells}")));
    }
    let entries: Vec<(u64, u64)> = profile.entries().collect();
    let (ln_beta, poisson_limit) = maximise(&entries, exposure, cells, accept_limit)?;
    let beta = ln_beta.exp();
    Ok(PoissonGammaFit { alpha: 1.0 / (cells * beta), beta, k_hat: cells, poisson_limit })
}

/// Fits `(α, β)` with the cell count estimated as `K̂ = n̄ K_n / Z₁`.
pub fn fit_poisson_gamma(profile: &FrequencyProfile, population_size: u64) -> Result<PoissonGammaFit> {
    fit_poisson_gamma_with(profile, population_size, PoissonGammaProtocol::Sample)
}

pub fn fit_poisson_gamma_with(
    profile: &FrequencyProfile,
    population_size: u64,
    protocol: PoissonGammaProtocol,
) -> Result<PoissonGammaFit> {
    if profile.is_empty() {
        return Err(Error::invalid("cannot fit a Poisson-Gamma model to an empty profile"));
    }
    let nbar = population_size as f64;
    let k = profile.k() as f64;
    match protocol {
        PoissonGammaProtocol::Sample => {
            let z1 = profile.singletons();
            if z1 == 0 {
                return Err(Error::invalid("no sample uniques: the cell-count estimate n̄·K_n/Z₁ is undefined"));
            }
            fit_with_cells(profile, nbar * k / z1 as f64, profile.n() as f64, false)
        }
        PoissonGammaProtocol::Population => {
            fit_with_cells(profile, nbar * k / profile.n() as f64, nbar, true)
        }
    }
}

/// Sample-protocol fit with a known number of population cells.
pub fn fit_poisson_gamma_with_cells(profile: &FrequencyProfile, cells: f64) -> Result<PoissonGammaFit> {
    fit_with_cells(profile, cells, profile.n() as f64, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, Poisson};

    #[test]
    fn k_hat_formula() {
        let p = FrequencyProfile::from_z([(1, 2), (2, 1)]).unwrap();
        let k_hat = 8.0 * 3.0 / 2.0;
        assert_eq!(k_hat, 12.0);
        // whether or not the likelihood has an interior maximum, K̂ enters as the constraint
        if let Ok(fit) = fit_poisson_gamma(&p, 8) {
            assert_eq!(fit.k_hat, 12.0);
            assert!((fit.alpha * fit.beta * fit.k_hat - 1.0).abs() < 1e-10);
        }
        let no_uniques = FrequencyProfile::from_z([(2, 3)]).unwrap();
        assert!(fit_poisson_gamma(&no_uniques, 100).is_err());
    }

    #[test]
    fn likelihood_matches_direct_pmf() {
        let entries = [(1u64, 5u64), (3, 2)];
        let (n, cells, beta) = (20.0f64, 10.0f64, 0.03f64);
        let alpha = 1.0 / (cells * beta);
        let u = n * beta;
        let pmf = |i: u64| {
            let mut r = 1.0;
            for j in 0..i {
                r *= alpha + j as f64;
            }
            let fact: f64 = (1..=i).map(|k| k as f64).product();
            r / fact * (u / (1.0 + u)).powi(i as i32) * (1.0 + u).powf(-alpha)
        };
        let p0 = pmf(0);
        let direct = 5.0 * (pmf(1) / (1.0 - p0)).ln() + 2.0 * (pmf(3) / (1.0 - p0)).ln();
        let ll = log_likelihood(&entries, n, cells, beta.ln());
        assert!((ll - direct).abs() < 1e-12);
    }

    #[test]
    fn recovers_beta_from_simulated_data() {
        let (cells, alpha, beta, n) = (5000usize, 2.0, 1e-4, 5e4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gamma = Gamma::new(alpha, beta).unwrap();
        let counts = (0..cells).map(|_| {
            let mean = n * gamma.sample(&mut rng);
            if mean > 0.0 {
                Poisson::new(mean).unwrap().sample(&mut rng) as u64
            } else {
                0
            }
        });
        let profile = FrequencyProfile::from_frequencies(counts.filter(|&c| c > 0));
        let fit = fit_poisson_gamma_with_cells(&profile, cells as f64).unwrap();
        assert!((fit.beta / beta - 1.0).abs() < 0.1, "beta = {}", fit.beta);
        assert!((fit.alpha * fit.beta * fit.k_hat - 1.0).abs() < 1e-10);
    }

    #[test]
    fn population_protocol_reaches_poisson_limit() {
        // equal-probability cells are underdispersed relative to any Gamma mixture
        let profile = FrequencyProfile::from_z([(1, 700), (2, 120), (3, 15)]).unwrap();
        let nbar = 10 * profile.n();
        assert!(matches!(fit_poisson_gamma(&profile, nbar), Ok(_) | Err(Error::NonConvergence { .. })));
        let fit = fit_poisson_gamma_with(&profile, nbar, PoissonGammaProtocol::Population).unwrap();
        let k_hat = nbar as f64 * profile.k() as f64 / profile.n() as f64;
        assert_eq!(fit.k_hat, k_hat);
        assert!(fit.poisson_limit);
        // (1 + n̄β)^{-(1+α)} → exp(−n̄/K̂)
        let v = (-(1.0 + fit.alpha) * (nbar as f64 * fit.beta).ln_1p()).exp();
        let limit = (-(nbar as f64) / k_hat).exp();
        assert!((v / limit - 1.0).abs() < 1e-9);
    }

    #[test]
    fn population_protocol_interior_fit() {
        // heavy-tailed counts need overdispersion even at population scale
        let profile = FrequencyProfile::from_z([(1, 500), (2, 100), (5, 30), (40, 10), (300, 2)]).unwrap();
        let fit = fit_poisson_gamma_with(&profile, 11 * profile.n(), PoissonGammaProtocol::Population).unwrap();
        assert!(!fit.poisson_limit);
        assert!((fit.alpha * fit.beta * fit.k_hat - 1.0).abs() < 1e-10);
        assert_eq!("population".parse::<PoissonGammaProtocol>().unwrap(), PoissonGammaProtocol::Population);
        assert!("frame".parse::<PoissonGammaProtocol>().is_err());
    }
}
