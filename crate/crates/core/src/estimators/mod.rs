//! Estimators of τ₁, the number of sample uniques that are also population uniques.
//!
//! The nonparametric series estimators only need the frequency profile and the
//! ratio `λ` of unobserved to observed records. The baselines additionally need the
//! population size `n̄` and, for the parametric ones, a fitted Poisson-Gamma prior.

mod dirichlet;
mod poisson_gamma;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dirichlet::{dirichlet_theta_equation, fit_dirichlet_theta, ThetaConvention};
pub use poisson_gamma::{
    fit_poisson_gamma, fit_poisson_gamma_with, fit_poisson_gamma_with_cells, PoissonGammaFit, PoissonGammaProtocol,
};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::profile::FrequencyProfile;
use crate::smoothing::{coefficients, SmoothingSpec};

/// The estimators this crate implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Alternating series without smoothing, for `λ < 1`.
    Unbiased,
    /// Series smoothed with Poisson(β) truncation.
    Poisson,
    /// Series smoothed with Binomial(x₀, 2/(λ+2)) truncation.
    Binomial2,
    Naive,
    Dirichlet,
    Bethlehem,
    Skinner,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::Unbiased,
        EstimatorKind::Poisson,
        EstimatorKind::Binomial2,
        EstimatorKind::Naive,
        EstimatorKind::Dirichlet,
        EstimatorKind::Bethlehem,
        EstimatorKind::Skinner,
    ];

    /// The six estimators compared on simulated tables, in table row order.
    pub const TABLE: [EstimatorKind; 6] = [
        EstimatorKind::Binomial2,
        EstimatorKind::Poisson,
        EstimatorKind::Naive,
        EstimatorKind::Dirichlet,
        EstimatorKind::Bethlehem,
        EstimatorKind::Skinner,
    ];

    /// Estimators applicable at this `λ`: the unbiased series below 1, the smoothed
    /// ones from 1 upwards, and the four baselines always.
    pub fn applicable(lambda: f64) -> Vec<EstimatorKind> {
        let mut out = if lambda < 1.0 {
            vec![EstimatorKind::Unbiased]
        } else {
            vec![EstimatorKind::Binomial2, EstimatorKind::Poisson]
        };
        out.extend([
            EstimatorKind::Naive,
            EstimatorKind::Dirichlet,
            EstimatorKind::Bethlehem,
            EstimatorKind::Skinner,
        ]);
        out
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Unbiased => "unbiased",
            EstimatorKind::Poisson => "poisson",
            EstimatorKind::Binomial2 => "binomial2",
            EstimatorKind::Naive => "naive",
            EstimatorKind::Dirichlet => "dirichlet",
            EstimatorKind::Bethlehem => "bethlehem",
            EstimatorKind::Skinner => "skinner",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown estimator '{s}'")))
    }
}

/// One estimate together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: EstimatorKind,
    pub value: f64,
    /// `value` clipped to `[0, Z₁]`.
    pub clamped: f64,
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub smoothing: Option<SmoothingSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fitted: Option<BTreeMap<String, f64>>,
}

impl EstimateReport {
    fn new(name: EstimatorKind, value: f64, lambda: f64, profile: &FrequencyProfile) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonConvergence {
                routine: "estimate",
                detail: format!("{name} produced a non-finite value"),
            });
        }
        Ok(Self {
            name,
            value,
            clamped: value.clamp(0.0, profile.singletons() as f64),
            lambda,
            smoothing: None,
            fitted: None,
        })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive and finite, got {lambda}")));
    }
    Ok(())
}

/// `Σ_{i>=0} (-1)^i (i+1) λ^i Z_{i+1}`, unbiased for `E[τ₁]` when `λ < 1`.
pub fn tau1_unbiased(profile: &FrequencyProfile, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda >= 1.0 {
        return Err(Error::invalid(format!(
            "the unsmoothed series needs lambda < 1 (got {lambda}); use a smoothed estimator"
        )));
    }
    series_sum(profile, lambda, &SmoothingSpec::None)
}

/// `Σ_i (-1)^i (i+1) λ^i P(L >= i) Z_{i+1}` for `λ >= 1` and a proper smoothing law.
pub fn tau1_smoothed(profile: &FrequencyProfile, lambda: f64, spec: &SmoothingSpec) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda < 1.0 {
        return Err(Error::invalid(format!(
            "smoothed estimators are for lambda >= 1 (got {lambda}); use the unbiased series"
        )));
    }
    if matches!(spec, SmoothingSpec::None) {
        return Err(Error::invalid("lambda >= 1 requires a Poisson or Binomial smoothing law"));
    }
    series_sum(profile, lambda, spec)
}

/// Shared series evaluation; terms are added in ascending `i` with compensation.
pub(crate) fn series_sum(profile: &FrequencyProfile, lambda: f64, spec: &SmoothingSpec) -> Result<f64> {
    let max_f = profile.max_frequency();
    if max_f == 0 {
        return Ok(0.0);
    }
    let c = coefficients(spec, lambda, max_f - 1)?;
    let mut acc = CompensatedSum::new();
    for (freq, count) in profile.entries() {
        let i = (freq - 1) as usize;
        if c.signs()[i] == 0 {
            continue;
        }
        let mut term = c.value(i) * count as f64;
        if !term.is_finite() {
            // |c_i| alone may overflow while count·|c_i| is still meaningful in log space
            term = c.signs()[i] as f64 * (c.log_abs()[i] + (count as f64).ln()).exp();
        }
        acc.add(term);
    }
    let v = acc.value();
    if !v.is_finite() {
        return Err(Error::NonConvergence {
            routine: "series estimator",
            detail: format!("series overflowed at lambda = {lambda} with max frequency {max_f}"),
        });
    }
    Ok(v)
}

fn check_population(profile: &FrequencyProfile, population_size: u64) -> Result<()> {
    if population_size == 0 || population_size < profile.n() {
        return Err(Error::invalid(format!(
            "population size {population_size} must be positive and at least the sample size {}",
            profile.n()
        )));
    }
    Ok(())
}

/// Sample uniques scaled by the sampling fraction: `Z₁ n / n̄`.
pub fn tau1_naive(profile: &FrequencyProfile, population_size: u64) -> Result<f64> {
    check_population(profile, population_size)?;
    Ok(profile.singletons() as f64 * profile.n() as f64 / population_size as f64)
}

/// Dirichlet-process smoothing of the naive estimator: `Z₁ (n+ϑ-1)/(n̄+ϑ-1)`.
pub fn tau1_dirichlet(
    profile: &FrequencyProfile,
    population_size: u64,
    convention: ThetaConvention,
) -> Result<(f64, f64)> {
    check_population(profile, population_size)?;
    let theta = fit_dirichlet_theta(profile, convention)?;
    Ok((dirichlet_formula(profile, population_size, theta), theta))
}

pub(crate) fn dirichlet_formula(profile: &FrequencyProfile, population_size: u64, theta: f64) -> f64 {
    let n = profile.n() as f64;
    let nbar = population_size as f64;
    profile.singletons() as f64 * (n + theta - 1.0) / (nbar + theta - 1.0)
}

/// Sample share of the expected population uniques: `n (1 + n̄β)^{-(1+α)}`.
pub fn bethlehem_formula(n: f64, population_size: f64, fit: &PoissonGammaFit) -> f64 {
    n * (-(1.0 + fit.alpha) * (population_size * fit.beta).ln_1p()).exp()
}

/// `K_n ((1 + n̄β)/(1 + nβ))^{-(1+α)}`.
pub fn skinner_formula(k: f64, n: f64, population_size: f64, fit: &PoissonGammaFit) -> f64 {
    let log_ratio = (population_size * fit.beta).ln_1p() - (n * fit.beta).ln_1p();
    k * (-(1.0 + fit.alpha) * log_ratio).exp()
}

pub fn tau1_bethlehem(profile: &FrequencyProfile, population_size: u64) -> Result<(f64, PoissonGammaFit)> {
    tau1_bethlehem_with(profile, population_size, PoissonGammaProtocol::Sample)
}

pub fn tau1_bethlehem_with(
    profile: &FrequencyProfile,
    population_size: u64,
    protocol: PoissonGammaProtocol,
) -> Result<(f64, PoissonGammaFit)> {
    check_population(profile, population_size)?;
    let fit = fit_poisson_gamma_with(profile, population_size, protocol)?;
    Ok((bethlehem_formula(profile.n() as f64, population_size as f64, &fit), fit))
}

pub fn tau1_skinner(profile: &FrequencyProfile, population_size: u64) -> Result<(f64, PoissonGammaFit)> {
    tau1_skinner_with(profile, population_size, PoissonGammaProtocol::Sample)
}

pub fn tau1_skinner_with(
    profile: &FrequencyProfile,
    population_size: u64,
    protocol: PoissonGammaProtocol,
) -> Result<(f64, PoissonGammaFit)> {
    check_population(profile, population_size)?;
    let fit = fit_poisson_gamma_with(profile, population_size, protocol)?;
    let v = skinner_formula(profile.k() as f64, profile.n() as f64, population_size as f64, &fit);
    Ok((v, fit))
}

/// Settings shared by a batch of estimates on one profile.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub lambda: f64,
    /// Population size `n̄`; defaults to `round((1+λ) n)` when absent.
    pub population_size: Option<u64>,
    /// Override for the Poisson smoothing parameter (default: `β̃(λ, n)`).
    pub beta: Option<f64>,
    /// Override for the Binomial smoothing trials (default: `x̃₀(λ, n)`).
    pub x0: Option<u64>,
    pub theta_convention: ThetaConvention,
    pub poisson_gamma: PoissonGammaProtocol,
}

impl EstimatorConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            population_size: None,
            beta: None,
            x0: None,
            theta_convention: ThetaConvention::Shifted,
            poisson_gamma: PoissonGammaProtocol::Sample,
        }
    }

    pub fn with_population(mut self, population_size: u64) -> Self {
        self.population_size = Some(population_size);
        self
    }

    fn population_for(&self, profile: &FrequencyProfile) -> u64 {
        self.population_size
            .unwrap_or_else(|| ((1.0 + self.lambda) * profile.n() as f64).round() as u64)
    }

    /// Smoothing law used by `kind`, if it is a series estimator.
    pub fn smoothing_for(&self, kind: EstimatorKind, n: u64) -> Result<Option<SmoothingSpec>> {
        let n = n as f64;
        Ok(match kind {
            EstimatorKind::Unbiased => Some(SmoothingSpec::None),
            EstimatorKind::Poisson => Some(match self.beta {
                Some(beta) => SmoothingSpec::poisson(beta)?,
                None => SmoothingSpec::optimal_poisson(self.lambda, n)?,
            }),
            EstimatorKind::Binomial2 => Some(match self.x0 {
                Some(x0) => SmoothingSpec::binomial2(self.lambda, x0)?,
                None => SmoothingSpec::optimal_binomial2(self.lambda, n)?,
            }),
            _ => None,
        })
    }
}

/// Runs one estimator and packages the result.
pub fn estimate(profile: &FrequencyProfile, kind: EstimatorKind, config: &EstimatorConfig) -> Result<EstimateReport> {
    let lambda = config.lambda;
    check_lambda(lambda)?;
    let nbar = config.population_for(profile);
    let report = |value: f64| EstimateReport::new(kind, value, lambda, profile);
    match kind {
        EstimatorKind::Unbiased => {
            let mut r = report(tau1_unbiased(profile, lambda)?)?;
            r.smoothing = Some(SmoothingSpec::None);
            Ok(r)
        }
        EstimatorKind::Poisson | EstimatorKind::Binomial2 => {
            let spec = config
                .smoothing_for(kind, profile.n())?
                .expect("series estimators always carry a smoothing law");
            let mut r = report(tau1_smoothed(profile, lambda, &spec)?)?;
            r.smoothing = Some(spec);
            Ok(r)
        }
        EstimatorKind::Naive => report(tau1_naive(profile, nbar)?),
        EstimatorKind::Dirichlet => {
            let (v, theta) = tau1_dirichlet(profile, nbar, config.theta_convention)?;
            let mut r = report(v)?;
            r.fitted = Some(BTreeMap::from([("theta".to_string(), theta)]));
            Ok(r)
        }
        EstimatorKind::Bethlehem | EstimatorKind::Skinner => {
            let (v, fit) = if kind == EstimatorKind::Bethlehem {
                tau1_bethlehem_with(profile, nbar, config.poisson_gamma)?
            } else {
                tau1_skinner_with(profile, nbar, config.poisson_gamma)?
            };
            let mut r = report(v)?;
            r.fitted = Some(fit.as_map());
            Ok(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(entries: &[(u64, u64)]) -> FrequencyProfile {
        FrequencyProfile::from_z(entries.iter().copied()).unwrap()
    }

    #[test]
    fn unbiased_examples() {
        assert_eq!(tau1_unbiased(&FrequencyProfile::default(), 0.5).unwrap(), 0.0);
        assert_eq!(tau1_unbiased(&profile(&[(1, 3), (2, 1)]), 0.5).unwrap(), 2.0);
        assert_eq!(tau1_unbiased(&profile(&[(1, 5)]), 0.9).unwrap(), 5.0);
        assert!(tau1_unbiased(&profile(&[(1, 5)]), 1.0).is_err());
        assert!(tau1_unbiased(&profile(&[(1, 5)]), -0.1).is_err());
    }

    #[test]
    fn smoothed_examples() {
        let single = profile(&[(1, 17)]);
        for spec in [SmoothingSpec::Poisson { beta: 0.3 }, SmoothingSpec::Binomial { trials: 3, p: 0.2 }] {
            assert_eq!(tau1_smoothed(&single, 4.0, &spec).unwrap(), 17.0);
        }
        let v = tau1_smoothed(&profile(&[(1, 2), (2, 1)]), 2.0, &SmoothingSpec::Poisson { beta: 1.0 }).unwrap();
        assert!((v + 0.528_482_235_314_230_7).abs() < 1e-13);
        let v = tau1_smoothed(
            &profile(&[(1, 4), (2, 2), (3, 1)]),
            9.0,
            &SmoothingSpec::Binomial { trials: 1, p: 2.0 / 11.0 },
        )
        .unwrap();
        assert!((v + 2.545_454_545_454_545).abs() < 1e-13);
        assert!(tau1_smoothed(&single, 2.0, &SmoothingSpec::None).is_err());
        assert!(tau1_smoothed(&single, 0.5, &SmoothingSpec::Poisson { beta: 1.0 }).is_err());
    }

    #[test]
    fn naive_examples() {
        let p = profile(&[(1, 8), (2, 1)]);
        assert!((tau1_naive(&p, 100).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(tau1_naive(&FrequencyProfile::default(), 100).unwrap(), 0.0);
        assert!(tau1_naive(&p, 5).is_err());
        assert!(tau1_naive(&FrequencyProfile::default(), 0).is_err());
    }

    #[test]
    fn dirichlet_limits() {
        let p = profile(&[(1, 8), (2, 1)]);
        let limit = dirichlet_formula(&p, 100, 0.0);
        assert!((limit - 8.0 * 9.0 / 99.0).abs() < 1e-14);
        let no_uniques = profile(&[(2, 3), (3, 1)]);
        let (v, _) = tau1_dirichlet(&no_uniques, 50, ThetaConvention::Shifted).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn parametric_limits() {
        let tiny = PoissonGammaFit { alpha: 1.0, beta: 1e-300, k_hat: 1.0, poisson_limit: false };
        assert!((bethlehem_formula(1e5, 1e6, &tiny) - 1e5).abs() < 1e-6);
        assert!((skinner_formula(5e4, 1e5, 1e6, &tiny) - 5e4).abs() < 1e-6);
        let fit = PoissonGammaFit { alpha: 1.0, beta: 1e-5, k_hat: 1e5, poisson_limit: false };
        assert!((skinner_formula(5e4, 1e5, 1e6, &fit) - 1_652.892_561_983_471).abs() < 1e-9);
    }

    #[test]
    fn degenerate_binomial_returns_singletons() {
        let p = profile(&[(1, 11), (2, 4), (5, 2), (9, 1)]);
        for lambda in [1.0, 3.5, 40.0] {
            let spec = SmoothingSpec::binomial(0, 0.3).unwrap();
            assert_eq!(tau1_smoothed(&p, lambda, &spec).unwrap(), 11.0);
        }
    }

    #[test]
    fn large_poisson_beta_recovers_unbiased_series() {
        let p = profile(&[(1, 7), (2, 3), (3, 2), (6, 1)]);
        let exact = tau1_unbiased(&p, 0.7).unwrap();
        let mut last_gap = f64::INFINITY;
        for beta in [5.0, 20.0, 80.0] {
            let v = series_sum(&p, 0.7, &SmoothingSpec::Poisson { beta }).unwrap();
            let gap = (v - exact).abs();
            assert!(gap <= last_gap);
            last_gap = gap;
        }
        assert!(last_gap < 1e-10);
    }

    #[test]
    fn estimator_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("bogus".parse::<EstimatorKind>().is_err());
        assert_eq!(EstimatorKind::applicable(9.0).len(), 6);
        assert_eq!(EstimatorKind::applicable(0.5)[0], EstimatorKind::Unbiased);
    }

    #[test]
    fn estimate_all_reports() {
        let p = profile(&[(1, 60), (2, 12), (3, 4), (4, 1)]);
        let cfg = EstimatorConfig::new(9.0).with_population(1000);
        let reports: Vec<_> = EstimatorKind::applicable(9.0)
            .into_iter()
            .map(|k| estimate(&p, k, &cfg).unwrap())
            .collect();
        assert_eq!(reports.len(), 6);
        for r in &reports {
            assert!(r.value.is_finite());
            assert!(r.clamped >= 0.0 && r.clamped <= 60.0);
        }
        let naive = &reports[2];
        assert!((naive.value - 60.0 * 100.0 / 1000.0).abs() < 1e-12);
        assert!(reports[3].fitted.as_ref().unwrap().contains_key("theta"));
        assert!(reports[4].fitted.as_ref().unwrap().contains_key("k_hat"));
        assert_eq!(
            reports[1].smoothing,
            Some(SmoothingSpec::optimal_poisson(9.0, 100.0).unwrap())
        );
    }

    fn arb_profile() -> impl Strategy<Value = FrequencyProfile> {
        prop::collection::vec((1u64..12, 1u64..30), 0..8)
            .prop_map(|v| FrequencyProfile::from_z(v).unwrap())
    }

    proptest! {
        #[test]
        fn smoothed_is_linear_in_profile(a in arb_profile(), b in arb_profile(), beta in 0.05f64..3.0, lambda in 1.0f64..12.0) {
            let spec = SmoothingSpec::Poisson { beta };
            let sum = a.merge(&b);
            let lhs = tau1_smoothed(&sum, lambda, &spec).unwrap();
            let rhs = tau1_smoothed(&a, lambda, &spec).unwrap() + tau1_smoothed(&b, lambda, &spec).unwrap();
            let scale = 1.0 + lhs.abs().max(rhs.abs());
            prop_assert!((lhs - rhs).abs() <= 1e-9 * scale);
        }

        #[test]
        fn naive_and_dirichlet_are_at_most_singletons(p in arb_profile(), extra in 0u64..10_000) {
            let nbar = p.n().max(1) + extra;
            let z1 = p.singletons() as f64;
            let naive = tau1_naive(&p, nbar).unwrap();
            prop_assert!(naive <= z1 && naive >= 0.0);
            if let Ok((d, _)) = tau1_dirichlet(&p, nbar, ThetaConvention::Shifted) {
                prop_assert!(d <= z1 * (1.0 + 1e-12) && d >= 0.0);
            }
        }
    }
}
