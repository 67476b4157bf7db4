//! The three standard simulation tables: seven probability families at three table sizes.

use serde::{Deserialize, Serialize};

use super::{run_scenario_with, Family, SamplingMode, Scenario, SimulationReport};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, PoissonGammaProtocol};

/// Total population size behind the tables: a sample of `10⁵` records plus
/// `10⁶` unobserved ones, i.e. `λ = 10`.
pub const TABLE_POPULATION: u64 = 1_100_000;
pub const TABLE_SAMPLE: u64 = 100_000;

const FAMILIES: [Family; 7] = [
    Family::Zipf { s: 0.2 },
    Family::Zipf { s: 0.5 },
    Family::Zipf { s: 0.8 },
    Family::Zipf { s: 1.0 },
    Family::Uniform,
    Family::SymDirichlet { beta: 0.5 },
    Family::SymDirichlet { beta: 1.0 },
];

fn table_cells(table: u8) -> Result<usize> {
    match table {
        1 => Ok(300_000),
        2 => Ok(600_000),
        3 => Ok(900_000),
        _ => Err(Error::invalid(format!("tables are numbered 1 to 3, got {table}"))),
    }
}

fn scaled(v: u64, scale: f64) -> u64 {
    ((v as f64 * scale).round() as u64).max(1)
}

/// The seven column scenarios of `table`, with cells and both sizes multiplied by `scale`.
pub fn table_scenarios(table: u8, seed: u64, iterations: usize, scale: f64) -> Result<Vec<Scenario>> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::invalid(format!("scale must lie in (0, 1], got {scale}")));
    }
    if iterations == 0 {
        return Err(Error::invalid("at least one iteration is required"));
    }
    let cells = scaled(table_cells(table)? as u64, scale) as usize;
    let population = scaled(TABLE_POPULATION, scale);
    let sample = scaled(TABLE_SAMPLE, scale);
    Ok(FAMILIES
        .iter()
        .enumerate()
        .map(|(col, &family)| Scenario {
            family,
            cells,
            population_size: population,
            sample_size: sample,
            iterations,
            // every column gets its own seed so columns are independent
            seed: seed.wrapping_add(1_000_003 * col as u64),
            mode: SamplingMode::Fixed,
            poisson_gamma: PoissonGammaProtocol::Population,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub table: u8,
    pub scale: f64,
    pub columns: Vec<SimulationReport>,
}

impl TableReport {
    /// Column labels in table order.
    pub fn labels(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.scenario.family.to_string()).collect()
    }
}

/// Runs every column of `table` with the six table estimators.
pub fn reproduce_table(table: u8, seed: u64, iterations: usize, scale: f64) -> Result<TableReport> {
    let columns = table_scenarios(table, seed, iterations, scale)?
        .iter()
        .map(|s| run_scenario_with(s, &EstimatorKind::TABLE))
        .collect::<Result<Vec<_>>>()?;
    Ok(TableReport { table, scale, columns })
}
