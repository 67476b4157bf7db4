//! Synthetic populations, samples and the Monte Carlo harness around the estimators.
//!
//! Each iteration owns a ChaCha stream derived from `(seed, iteration)`, and results are
//! reduced in iteration order, so a report depends only on the scenario and its seed,
//! never on the number of worker threads.

mod tables;

use std::collections::BTreeMap;
use std::fmt;

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use tables::{reproduce_table, table_scenarios, TableReport, TABLE_POPULATION, TABLE_SAMPLE};

use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorConfig, EstimatorKind, PoissonGammaProtocol};
use crate::numeric::compensated_sum;
use crate::profile::{true_tau1_dense, CellCounts, FrequencyProfile, PairedCounts};

/// Law of the cell probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// `p_j ∝ j^{−s}`.
    Zipf { s: f64 },
    Uniform,
    /// One draw from the symmetric Dirichlet(β, …, β).
    SymDirichlet { beta: f64 },
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Zipf { s } => write!(f, "zipf_{s}"),
            Family::Uniform => f.write_str("uniform"),
            Family::SymDirichlet { beta } => write!(f, "dirichlet_{beta}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Independent Poisson counts: sample `Poiss(n p_j)`, rest `Poiss((n̄−n) p_j)`.
    Poisson,
    /// Exactly `n̄` categorical records, of which the first `n` form the sample.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub family: Family,
    pub cells: usize,
    pub population_size: u64,
    pub sample_size: u64,
    pub iterations: usize,
    pub seed: u64,
    pub mode: SamplingMode,
    /// Fitting protocol for the Bethlehem and Skinner estimators.
    #[serde(default)]
    pub poisson_gamma: PoissonGammaProtocol,
}

impl Scenario {
    pub fn new(family: Family, cells: usize, population_size: u64, sample_size: u64) -> Self {
        Self {
            family,
            cells,
            population_size,
            sample_size,
            iterations: 100,
            seed: 0,
            mode: SamplingMode::Fixed,
            poisson_gamma: PoissonGammaProtocol::Sample,
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: SamplingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_poisson_gamma(mut self, protocol: PoissonGammaProtocol) -> Self {
        self.poisson_gamma = protocol;
        self
    }

    /// `λ = (n̄ − n)/n`.
    pub fn lambda(&self) -> f64 {
        (self.population_size - self.sample_size) as f64 / self.sample_size as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(Error::invalid("a scenario needs at least one cell"));
        }
        if self.sample_size == 0 || self.sample_size >= self.population_size {
            return Err(Error::invalid(format!(
                "need 0 < n < n̄, got n = {}, n̄ = {}",
                self.sample_size, self.population_size
            )));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("a scenario needs at least one iteration"));
        }
        match self.family {
            Family::Zipf { s } if !(s > 0.0 && s.is_finite()) => {
                Err(Error::invalid(format!("Zipf exponent must be positive, got {s}")))
            }
            Family::SymDirichlet { beta } if !(beta > 0.0 && beta.is_finite()) => {
                Err(Error::invalid(format!("Dirichlet parameter must be positive, got {beta}")))
            }
            _ => Ok(()),
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// RNG stream reserved for drawing the probability vector.
const PROBABILITY_STREAM: u64 = u64::MAX;

/// Cell probabilities of `family` over `cells` cells.
pub fn generate_probabilities<R: Rng + ?Sized>(family: Family, cells: usize, rng: &mut R) -> Result<Vec<f64>> {
    if cells == 0 {
        return Err(Error::invalid("need at least one cell"));
    }
    let weights: Vec<f64> = match family {
        Family::Uniform => vec![1.0; cells],
        Family::Zipf { s } => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("Zipf exponent must be positive, got {s}")));
            }
            (1..=cells).map(|j| (j as f64).powf(-s)).collect()
        }
        Family::SymDirichlet { beta } => {
            let gamma = Gamma::new(beta, 1.0)
                .map_err(|e| Error::invalid(format!("Dirichlet parameter {beta}: {e}")))?;
            (0..cells).map(|_| gamma.sample(rng)).collect()
        }
    };
    let total = compensated_sum(weights.iter().copied());
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NonConvergence {
            routine: "generate_probabilities",
            detail: "weights do not sum to a positive finite value".into(),
        });
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Cell-indexed sample and population counts of one draw.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseDraw {
    pub sample: Vec<u32>,
    pub population: Vec<u32>,
}

impl DenseDraw {
    pub fn profile(&self) -> FrequencyProfile {
        FrequencyProfile::from_frequencies(self.sample.iter().map(|&c| c as u64))
    }

    pub fn true_tau1(&self) -> u64 {
        true_tau1_dense(&self.sample, &self.population).expect("draws respect the pairing")
    }

    pub fn population_total(&self) -> u64 {
        self.population.iter().map(|&c| c as u64).sum()
    }

    pub fn into_paired(self) -> PairedCounts<usize> {
        let sample = CellCounts::from_pairs(self.sample.iter().enumerate().map(|(j, &c)| (j, c as u64)));
        let population = CellCounts::from_pairs(self.population.iter().enumerate().map(|(j, &c)| (j, c as u64)));
        PairedCounts::new(sample, population).expect("draws respect the pairing")
    }
}

/// Sampler for one probability vector, reusable across iterations.
pub struct Sampler {
    probabilities: Vec<f64>,
    alias: Option<WeightedAliasIndex<f64>>,
}

impl Sampler {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() || probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("probabilities must be finite and nonnegative"));
        }
        // the alias table is only needed for fixed-size draws; build it lazily
        Ok(Self { probabilities, alias: None })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    fn alias(&mut self) -> Result<&WeightedAliasIndex<f64>> {
        if self.alias.is_none() {
            let table = WeightedAliasIndex::new(self.probabilities.clone())
                .map_err(|e| Error::invalid(format!("cannot build alias table: {e}")))?;
            self.alias = Some(table);
        }
        Ok(self.alias.as_ref().expect("just built"))
    }

    pub fn prepare(&mut self, mode: SamplingMode) -> Result<()> {
        if mode == SamplingMode::Fixed {
            self.alias()?;
        }
        Ok(())
    }

    /// One draw of sample and population counts.
    ///
    /// Fixed mode draws `population_size` records and takes the first `sample_size` as
    /// the sample, which is a uniform subsample without replacement since draws are
    /// exchangeable. Poisson mode draws the sample and the unobserved rest independently.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        mode: SamplingMode,
        sample_size: u64,
        population_size: u64,
        rng: &mut R,
    ) -> Result<DenseDraw> {
        let c = self.probabilities.len();
        let mut sample = vec![0u32; c];
        let mut population = vec![0u32; c];
        match mode {
            SamplingMode::Fixed => {
                let alias = self
                    .alias
                    .as_ref()
                    .ok_or_else(|| Error::invalid("call prepare(Fixed) before fixed-size draws"))?;
                for r in 0..population_size {
                    let j = alias.sample(rng);
                    population[j] += 1;
                    if r < sample_size {
                        sample[j] += 1;
                    }
                }
            }
            SamplingMode::Poisson => {
                let rest = (population_size - sample_size) as f64;
                for (j, &p) in self.probabilities.iter().enumerate() {
                    let y = poisson(sample_size as f64 * p, rng);
                    let m = poisson(rest * p, rng);
                    sample[j] = y;
                    population[j] = y + m;
                }
            }
        }
        Ok(DenseDraw { sample, population })
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u32
}

/// One sample/population pair under `scenario`'s sizes and mode.
pub fn draw_population_and_sample<R: Rng + ?Sized>(
    probabilities: &[f64],
    scenario: &Scenario,
    rng: &mut R,
) -> Result<PairedCounts<usize>> {
    let mut sampler = Sampler::new(probabilities.to_vec())?;
    sampler.prepare(scenario.mode)?;
    Ok(sampler
        .draw(scenario.mode, scenario.sample_size, scenario.population_size, rng)?
        .into_paired())
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN, count };
        }
        let mean = compensated_sum(values.iter().copied()) / count as f64;
        let sd = if count < 2 {
            0.0
        } else {
            (compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (count - 1) as f64).sqrt()
        };
        Self { mean, sd, count }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        self.sd / (self.count as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimate: Summary,
    /// `estimate − τ₁` per iteration.
    pub error: Summary,
    /// Mean of `(estimate − τ₁)²`.
    pub mse: f64,
    pub failures: usize,
    /// First failure message, if any.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: Scenario,
    pub lambda: f64,
    pub true_tau1: Summary,
    /// Cells observed at least once in the sample, `Z̄₁`.
    pub occupied: Summary,
    pub estimators: BTreeMap<EstimatorKind, EstimatorSummary>,
}

impl SimulationReport {
    pub fn true_tau1_mean(&self) -> f64 {
        self.true_tau1.mean
    }

    pub fn estimator(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.estimators.get(&kind)
    }
}

struct IterationOutcome {
    tau1: f64,
    occupied: f64,
    estimates: Vec<(EstimatorKind, std::result::Result<f64, String>)>,
}

/// Runs every estimator applicable at the scenario's `λ` over all iterations.
pub fn run_scenario(scenario: &Scenario) -> Result<SimulationReport> {
    run_scenario_with(scenario, &EstimatorKind::applicable(scenario.lambda()))
}

/// As [`run_scenario`] with an explicit estimator list.
pub fn run_scenario_with(scenario: &Scenario, kinds: &[EstimatorKind]) -> Result<SimulationReport> {
    scenario.validate()?;
    let lambda = scenario.lambda();
    let probabilities = generate_probabilities(scenario.family, scenario.cells, &mut scenario.rng(PROBABILITY_STREAM))?;
    let mut sampler = Sampler::new(probabilities)?;
    sampler.prepare(scenario.mode)?;

    let outcomes: Vec<IterationOutcome> = (0..scenario.iterations)
        .into_par_iter()
        .map(|it| -> Result<IterationOutcome> {
            let mut rng = scenario.rng(it as u64);
            let draw = sampler.draw(scenario.mode, scenario.sample_size, scenario.population_size, &mut rng)?;
            let profile = draw.profile();
            let mut config = EstimatorConfig::new(lambda).with_population(draw.population_total());
            config.poisson_gamma = scenario.poisson_gamma;
            let estimates = kinds
                .iter()
                .map(|&k| (k, estimate(&profile, k, &config).map(|r| r.value).map_err(|e| e.to_string())))
                .collect();
            Ok(IterationOutcome { tau1: draw.true_tau1() as f64, occupied: profile.k() as f64, estimates })
        })
        .collect::<Result<_>>()?;

    let taus: Vec<f64> = outcomes.iter().map(|o| o.tau1).collect();
    let occupied: Vec<f64> = outcomes.iter().map(|o| o.occupied).collect();
    let mut estimators = BTreeMap::new();
    for (idx, &kind) in kinds.iter().enumerate() {
        let mut values = Vec::with_capacity(outcomes.len());
        let mut errors = Vec::with_capacity(outcomes.len());
        let mut failures = 0;
        let mut first_failure = None;
        for o in &outcomes {
            match &o.estimates[idx].1 {
                Ok(v) => {
                    values.push(*v);
                    errors.push(v - o.tau1);
                }
                Err(msg) => {
                    failures += 1;
                    first_failure.get_or_insert_with(|| msg.clone());
                }
            }
        }
        let mse = if errors.is_empty() {
            f64::NAN
        } else {
            compensated_sum(errors.iter().map(|e| e * e)) / errors.len() as f64
        };
        estimators.insert(
            kind,
            EstimatorSummary {
                estimate: Summary::from_values(&values),
                error: Summary::from_values(&errors),
                mse,
                failures,
                first_failure,
            },
        );
    }
    Ok(SimulationReport {
        scenario: scenario.clone(),
        lambda,
        true_tau1: Summary::from_values(&taus),
        occupied: Summary::from_values(&occupied),
        estimators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(generate_probabilities(Family::Uniform, 4, &mut rng).unwrap(), vec![0.25; 4]);
        let z = generate_probabilities(Family::Zipf { s: 1.0 }, 3, &mut rng).unwrap();
        for (got, want) in z.iter().zip([6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        let d = generate_probabilities(Family::SymDirichlet { beta: 0.5 }, 1000, &mut rng).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d.iter().all(|&p| p > 0.0 && p < 1.0));
        assert!(generate_probabilities(Family::Zipf { s: 0.0 }, 3, &mut rng).is_err());
        assert!(generate_probabilities(Family::SymDirichlet { beta: -1.0 }, 3, &mut rng).is_err());
        assert!(generate_probabilities(Family::Uniform, 0, &mut rng).is_err());
    }

    #[test]
    fn single_cell_fixed_draw() {
        let s = Scenario::new(Family::Uniform, 1, 5, 2);
        let pair = draw_population_and_sample(&[1.0], &s, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(pair.population().get(&0), 5);
        assert_eq!(pair.sample().get(&0), 2);
    }

    #[test]
    fn fixed_mode_conserves_totals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = generate_probabilities(Family::Zipf { s: 0.8 }, 500, &mut rng).unwrap();
        let mut sampler = Sampler::new(p).unwrap();
        sampler.prepare(SamplingMode::Fixed).unwrap();
        for _ in 0..20 {
            let d = sampler.draw(SamplingMode::Fixed, 300, 2000, &mut rng).unwrap();
            assert_eq!(d.sample.iter().map(|&c| c as u64).sum::<u64>(), 300);
            assert_eq!(d.population_total(), 2000);
            assert!(d.sample.iter().zip(&d.population).all(|(s, p)| s <= p));
        }
    }

    #[test]
    fn poisson_mode_marginals() {
        // chi-square goodness of fit of the first cell's sample counts against Poisson(n p)
        let p = vec![0.5, 0.3, 0.2];
        let sampler = Sampler::new(p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 4u64;
        let mean = n as f64 * 0.5;
        let mut hist = [0usize; 6];
        let draws = 10_000;
        for _ in 0..draws {
            let d = sampler.draw(SamplingMode::Poisson, n, 10, &mut rng).unwrap();
            hist[(d.sample[0] as usize).min(5)] += 1;
            assert!(d.sample.iter().zip(&d.population).all(|(s, p)| s <= p));
        }
        let mut pmf = [0.0f64; 6];
        let mut term = (-mean).exp();
        for (k, slot) in pmf.iter_mut().enumerate().take(5) {
            *slot = term;
            term *= mean / (k + 1) as f64;
        }
        pmf[5] = 1.0 - pmf[..5].iter().sum::<f64>();
        let chi2: f64 = hist
            .iter()
            .zip(&pmf)
            .map(|(&o, &q)| {
                let e = q * draws as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        // 99th percentile of chi-square with 5 degrees of freedom
        assert!(chi2 < 15.086, "chi2 = {chi2}");
    }

    #[test]
    fn single_iteration_report_is_the_run() {
        let s = Scenario::new(Family::Uniform, 200, 1100, 100).with_iterations(1).with_seed(5);
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.true_tau1.count, 1);
        assert_eq!(r.true_tau1.sd, 0.0);
        let mut rng = s.rng(0);
        let mut sampler = Sampler::new(vec![1.0 / 200.0; 200]).unwrap();
        sampler.prepare(SamplingMode::Fixed).unwrap();
        let d = sampler.draw(SamplingMode::Fixed, 100, 1100, &mut rng).unwrap();
        assert_eq!(r.true_tau1.mean, d.true_tau1() as f64);
        let naive = &r.estimators[&EstimatorKind::Naive];
        assert_eq!(naive.estimate.mean, d.profile().singletons() as f64 * 100.0 / 1100.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let s = Scenario::new(Family::Zipf { s: 0.5 }, 1000, 5500, 500).with_iterations(12).with_seed(9);
        assert_eq!(run_scenario(&s).unwrap(), run_scenario(&s).unwrap());
        let other = run_scenario(&s.clone().with_seed(10)).unwrap();
        assert_ne!(run_scenario(&s).unwrap().true_tau1, other.true_tau1);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let s = Scenario::new(Family::SymDirichlet { beta: 1.0 }, 800, 4400, 400).with_iterations(16).with_seed(2);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_scenario(&s).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn rejects_invalid_scenarios() {
        assert!(Scenario::new(Family::Uniform, 10, 100, 100).validate().is_err());
        assert!(Scenario::new(Family::Uniform, 0, 100, 10).validate().is_err());
        assert!(Scenario::new(Family::Uniform, 10, 100, 10).with_iterations(0).validate().is_err());
        assert!(Scenario::new(Family::Zipf { s: -1.0 }, 10, 100, 10).validate().is_err());
    }
}
