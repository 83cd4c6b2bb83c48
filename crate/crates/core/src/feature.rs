//! Core value types: the feature matrix every kernel transforms, the
//! strategy identifiers, and per-sample seed derivation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("matrix is empty (tau={tau}, nu={nu})")]
    Empty { tau: usize, nu: usize },
    #[error("expected {expected} values for the declared shape, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
}

/// A `tau` frames by `nu` channels array of finite reals, stored frame-major.
///
/// Values arrive as 32-bit floats from disk and are held widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    tau: usize,
    nu: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(tau: usize, nu: usize, values: Vec<f64>) -> Result<Self, MatrixError> {
        validate_matrix(tau, nu, &values)?;
        Ok(Self { tau, nu, values })
    }

    pub fn from_fn(tau: usize, nu: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, MatrixError> {
        let mut values = Vec::with_capacity(tau * nu);
        for t in 0..tau {
            for c in 0..nu {
                values.push(f(t, c));
            }
        }
        Self::new(tau, nu, values)
    }

    pub fn filled(tau: usize, nu: usize, value: f64) -> Result<Self, MatrixError> {
        Self::new(tau, nu, vec![value; tau * nu])
    }

    /// Internal constructor for kernel outputs whose invariants are already
    /// guaranteed by construction.
    pub(crate) fn from_parts_unchecked(tau: usize, nu: usize, values: Vec<f64>) -> Self {
        debug_assert!(validate_matrix(tau, nu, &values).is_ok());
        Self { tau, nu, values }
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.tau, self.nu)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, frame: usize, channel: usize) -> f64 {
        self.values[frame * self.nu + channel]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.nu..(frame + 1) * self.nu]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Per-channel mean over all frames.
    pub fn time_mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.nu];
        for frame in self.values.chunks_exact(self.nu) {
            for (a, v) in acc.iter_mut().zip(frame) {
                *a += v;
            }
        }
        let n = self.tau as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn validate(&self) -> Result<(), MatrixError> {
        validate_matrix(self.tau, self.nu, &self.values)
    }
}

/// Checks the shape/finite invariants of a raw matrix description.
pub fn validate_matrix(tau: usize, nu: usize, values: &[f64]) -> Result<(), MatrixError> {
    if tau == 0 || nu == 0 {
        return Err(MatrixError::Empty { tau, nu });
    }
    let expected = tau.checked_mul(nu).unwrap_or(usize::MAX);
    if values.len() != expected {
        return Err(MatrixError::DimensionMismatch { expected, actual: values.len() });
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(MatrixError::NonFinite { index });
    }
    Ok(())
}

/// The three augmentation strategies, in their fixed ordinal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrategyId {
    TimeWarp = 0,
    FreqMask = 1,
    TimeMask = 2,
}

pub const NUM_STRATEGIES: usize = 3;

impl StrategyId {
    pub const ALL: [StrategyId; NUM_STRATEGIES] =
        [StrategyId::TimeWarp, StrategyId::FreqMask, StrategyId::TimeMask];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyId::TimeWarp => "TIME_WARP",
            StrategyId::FreqMask => "FREQ_MASK",
            StrategyId::TimeMask => "TIME_MASK",
        }
    }

    /// Short label used in trace tables.
    pub fn short(self) -> &'static str {
        match self {
            StrategyId::TimeWarp => "TW",
            StrategyId::FreqMask => "FM",
            StrategyId::TimeMask => "TM",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "TIME_WARP" | "TW" => Ok(StrategyId::TimeWarp),
            "FREQ_MASK" | "FM" => Ok(StrategyId::FreqMask),
            "TIME_MASK" | "TM" => Ok(StrategyId::TimeMask),
            _ => Err(format!("unknown strategy {s:?}")),
        }
    }
}

/// A subset of [`StrategyId`], iterated in ordinal order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct StrategySet(u8);

impl StrategySet {
    pub const EMPTY: StrategySet = StrategySet(0);
    pub const ALL: StrategySet = StrategySet(0b111);

    pub fn single(s: StrategyId) -> Self {
        StrategySet(1 << s.index())
    }

    pub fn insert(&mut self, s: StrategyId) {
        self.0 |= 1 << s.index();
    }

    pub fn contains(self, s: StrategyId) -> bool {
        self.0 & (1 << s.index()) != 0
    }

    pub fn union(self, other: StrategySet) -> Self {
        StrategySet(self.0 | other.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = StrategyId> {
        StrategyId::ALL.into_iter().filter(move |s| self.contains(*s))
    }
}

impl FromIterator<StrategyId> for StrategySet {
    fn from_iter<I: IntoIterator<Item = StrategyId>>(iter: I) -> Self {
        let mut set = StrategySet::EMPTY;
        for s in iter {
            set.insert(s);
        }
        set
    }
}

impl Serialize for StrategySet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for StrategySet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let items = Vec::<StrategyId>::deserialize(deserializer)?;
        Ok(items.into_iter().collect())
    }
}

/// A value per strategy, indexed by [`StrategyId`].
pub type PerStrategy<T> = [T; NUM_STRATEGIES];

const EPOCH_MIX: u64 = 0x9E37_79B9_7F4A_7C15;
const INDEX_MIX: u64 = 0xBF58_476D_1CE4_E5B9;

/// One splitmix64 step: advance by the golden gamma, then the avalanche
/// finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the per-sample seed. The mixing constants are part of the file
/// contract; do not change them.
pub fn derive_sample_seed(master: u64, epoch: u64, index: u64) -> u64 {
    splitmix64(master ^ epoch.wrapping_mul(EPOCH_MIX) ^ index.wrapping_mul(INDEX_MIX))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleSeed {
    pub master_seed: u64,
    pub epoch: u64,
    pub sample_index: u64,
    pub derived: u64,
}

impl SampleSeed {
    pub fn new(master_seed: u64, epoch: u64, sample_index: u64) -> Self {
        Self {
            master_seed,
            epoch,
            sample_index,
            derived: derive_sample_seed(master_seed, epoch, sample_index),
        }
    }
}
