//! Cell frequencies and the frequency-of-frequencies profile.
//!
//! Every estimator in this crate consumes a [`FrequencyProfile`]: the number of
//! cells observed exactly `i` times, for each `i >= 1`. Profiles are built either
//! from raw cell identifiers (one per record) or from pre-aggregated cell counts.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse map from cell identifier to its (strictly positive) frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellCounts<K: Eq + Hash> {
    counts: HashMap<K, u64>,
    total: u64,
}

impl<K: Eq + Hash> Default for CellCounts<K> {
    fn default() -> Self {
        Self {
            counts: HashMap::new(),
            total: 0,
        }
    }
}

impl<K: Eq + Hash> CellCounts<K> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tallies one record per identifier.
    pub fn from_records<I: IntoIterator<Item = K>>(records: I) -> Self {
        let mut out = Self::new();
        for r in records {
            out.add(r, 1);
        }
        out
    }

    /// Builds counts from `(cell, frequency)` pairs. Zero frequencies are dropped and
    /// repeated cells accumulate.
    pub fn from_pairs<I: IntoIterator<Item = (K, u64)>>(pairs: I) -> Self {
        let mut out = Self::new();
        for (cell, count) in pairs {
            out.add(cell, count);
        }
        out
    }

    pub fn add(&mut self, cell: K, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(cell).or_insert(0) += count;
        self.total += count;
    }

    pub fn get(&self, cell: &K) -> u64 {
        self.counts.get(cell).copied().unwrap_or(0)
    }

    /// Sum of all frequencies (the number of records).
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of occupied cells.
    pub fn occupied(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, u64)> {
        self.counts.iter().map(|(k, &v)| (k, v))
    }

    pub fn profile(&self) -> FrequencyProfile {
        FrequencyProfile::from_frequencies(self.counts.values().copied())
    }
}

/// Frequency-of-frequencies summary `(Z_1, Z_2, ...)` of a sample.
///
/// Only nonzero `Z_i` are stored. `n = Σ i·Z_i` and `k = Σ Z_i` are kept alongside
/// and checked whenever a profile is deserialized.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct FrequencyProfile {
    n: u64,
    k: u64,
    z: BTreeMap<u64, u64>,
}

#[derive(Deserialize)]
struct RawProfile {
    n: u64,
    k: u64,
    z: BTreeMap<u64, u64>,
}

impl TryFrom<RawProfile> for FrequencyProfile {
    type Error = Error;

    fn try_from(raw: RawProfile) -> Result<Self> {
        let profile = FrequencyProfile::from_z(raw.z)?;
        if profile.n != raw.n || profile.k != raw.k {
            return Err(Error::invalid(format!(
                "profile totals inconsistent: declared n={}, k={} but z implies n={}, k={}",
                raw.n, raw.k, profile.n, profile.k
            )));
        }
        Ok(profile)
    }
}

impl FrequencyProfile {
    /// Profile from the frequency of every occupied cell; zeros are ignored.
    pub fn from_frequencies<I: IntoIterator<Item = u64>>(freqs: I) -> Self {
        let mut z = BTreeMap::new();
        let (mut n, mut k) = (0u64, 0u64);
        for f in freqs.into_iter().filter(|&f| f > 0) {
            *z.entry(f).or_insert(0) += 1;
            n += f;
            k += 1;
        }
        Self { n, k, z }
    }

    /// Profile of a record sequence where each item names the record's cell.
    pub fn from_records<K: Eq + Hash, I: IntoIterator<Item = K>>(records: I) -> Self {
        CellCounts::from_records(records).profile()
    }

    /// Profile from explicit `i -> Z_i` entries. Zero entries are dropped; `i = 0` is rejected.
    pub fn from_z<I: IntoIterator<Item = (u64, u64)>>(entries: I) -> Result<Self> {
        let mut z = BTreeMap::new();
        let (mut n, mut k) = (0u64, 0u64);
        for (i, zi) in entries {
            if i == 0 {
                return Err(Error::invalid("frequency index 0 is not part of a profile"));
            }
            if zi == 0 {
                continue;
            }
            *z.entry(i).or_insert(0) += zi;
            n = i
                .checked_mul(zi)
                .and_then(|m| n.checked_add(m))
                .ok_or_else(|| Error::invalid("profile size overflows u64"))?;
            k += zi;
        }
        Ok(Self { n, k, z })
    }

    /// Number of records.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Number of occupied cells.
    pub fn k(&self) -> u64 {
        self.k
    }

    /// `Z_i`, zero when absent.
    pub fn z(&self, i: u64) -> u64 {
        self.z.get(&i).copied().unwrap_or(0)
    }

    /// Number of sample uniques, `Z_1`.
    pub fn singletons(&self) -> u64 {
        self.z(1)
    }

    /// Number of cells observed at least `i` times.
    pub fn z_bar(&self, i: u64) -> Result<u64> {
        if i == 0 {
            return Err(Error::invalid("z_bar index must be at least 1"));
        }
        Ok(self.z.range(i..).map(|(_, &c)| c).sum())
    }

    /// Largest observed frequency (0 for an empty profile).
    pub fn max_frequency(&self) -> u64 {
        self.z.keys().next_back().copied().unwrap_or(0)
    }

    /// Nonzero `(i, Z_i)` pairs in ascending `i`.
    pub fn entries(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.z.iter().map(|(&i, &c)| (i, c))
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    /// Element-wise sum of two profiles, i.e. the profile of the disjoint union of
    /// two collections of cells.
    pub fn merge(&self, other: &Self) -> Self {
        let mut z = self.z.clone();
        for (&i, &c) in &other.z {
            *z.entry(i).or_insert(0) += c;
        }
        Self {
            n: self.n + other.n,
            k: self.k + other.k,
            z,
        }
    }
}

/// Sample counts together with the population counts of the same cells.
#[derive(Debug, Clone)]
pub struct PairedCounts<K: Eq + Hash> {
    sample: CellCounts<K>,
    population: CellCounts<K>,
}

impl<K: Eq + Hash + Display> PairedCounts<K> {
    /// Checks that every sampled cell is at least as frequent in the population.
    pub fn new(sample: CellCounts<K>, population: CellCounts<K>) -> Result<Self> {
        for (cell, s) in sample.iter() {
            let p = population.get(cell);
            if p < s {
                return Err(Error::PairingViolation {
                    cell: cell.to_string(),
                    sample: s,
                    population: p,
                });
            }
        }
        Ok(Self { sample, population })
    }

    pub fn sample(&self) -> &CellCounts<K> {
        &self.sample
    }

    pub fn population(&self) -> &CellCounts<K> {
        &self.population
    }

    /// Number of sample uniques that are also population uniques.
    pub fn true_tau1(&self) -> u64 {
        self.sample
            .iter()
            .filter(|&(cell, s)| s == 1 && self.population.get(cell) == 1)
            .count() as u64
    }
}

/// Validates the pairing and counts cells unique in both sample and population.
pub fn true_tau1<K: Eq + Hash + Display + Clone>(
    sample: &CellCounts<K>,
    population: &CellCounts<K>,
) -> Result<u64> {
    Ok(PairedCounts::new(sample.clone(), population.clone())?.true_tau1())
}

/// Dense variant of [`true_tau1`] over cell-indexed count vectors of equal length.
pub fn true_tau1_dense(sample: &[u32], population: &[u32]) -> Result<u64> {
    if sample.len() != population.len() {
        return Err(Error::invalid("sample and population tables differ in length"));
    }
    let mut tau = 0;
    for (j, (&s, &p)) in sample.iter().zip(population).enumerate() {
        if s > p {
            return Err(Error::PairingViolation {
                cell: j.to_string(),
                sample: s as u64,
                population: p as u64,
            });
        }
        if s == 1 && p == 1 {
            tau += 1;
        }
    }
    Ok(tau)
}
