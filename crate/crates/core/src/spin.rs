//! Configuration space: bit-packed spin configurations, coordinate
//! partitions with their two projections, and exact overlaps.
//!
//! Coordinate `i` (1-based in the usual notation) lives in bit `i - 1` of the
//! word; a set bit means spin `+1`. Enumeration order is ascending bit-word
//! order, so configuration index and bit word coincide.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `n` for which [`enumerate_configs`] will materialize Σ_N.
pub const ENUMERATION_CAP: usize = 20;

/// Hard ceiling imposed by the 64-bit word.
pub const MAX_SPINS: usize = 64;

#[inline]
pub(crate) fn low_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// One of the 2^n configurations of n Ising spins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpinConfig {
    n: usize,
    bits: u64,
}

impl SpinConfig {
    pub fn new(n: usize, bits: u64) -> Result<Self> {
        if n == 0 || n > MAX_SPINS {
            return Err(Error::validation(format!(
                "spin count must be in 1..={MAX_SPINS}, got {n}"
            )));
        }
        if bits & !low_mask(n) != 0 {
            return Err(Error::validation(format!(
                "bit word {bits:#x} has bits set above position {n}"
            )));
        }
        Ok(SpinConfig { n, bits })
    }

    /// Builds a configuration from a slice of ±1 values.
    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        let mut bits = 0u64;
        for (i, &s) in spins.iter().enumerate() {
            match s {
                1 => bits |= 1 << i,
                -1 => {}
                other => {
                    return Err(Error::validation(format!(
                        "spin {i} must be +1 or -1, got {other}"
                    )))
                }
            }
        }
        SpinConfig::new(spins.len(), bits)
    }

    #[inline]
    pub(crate) fn new_unchecked(n: usize, bits: u64) -> Self {
        debug_assert!((1..=MAX_SPINS).contains(&n) && bits & !low_mask(n) == 0);
        SpinConfig { n, bits }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    /// Index of this configuration in [`enumerate_configs`] order.
    #[inline]
    pub fn index(&self) -> usize {
        self.bits as usize
    }

    /// Spin at 0-based coordinate `i`, as ±1.
    #[inline]
    pub fn spin(&self, i: usize) -> i8 {
        if self.bits >> i & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn spins(&self) -> Vec<i8> {
        (0..self.n).map(|i| self.spin(i)).collect()
    }

    /// The configuration with every spin reversed.
    pub fn flipped(&self) -> Self {
        SpinConfig::new_unchecked(self.n, !self.bits & low_mask(self.n))
    }
}

impl fmt::Display for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            f.write_str(if self.spin(i) == 1 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl FromStr for SpinConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spins = s
            .chars()
            .enumerate()
            .map(|(position, c)| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                _ => Err(Error::Parse {
                    position,
                    message: format!("expected '+' or '-', found {c:?}"),
                }),
            })
            .collect::<Result<Vec<i8>>>()?;
        SpinConfig::from_spins(&spins)
    }
}

/// Exact overlap `(agreements - disagreements) / n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Overlap {
    numer: i64,
    denom: u32,
}

impl Overlap {
    #[inline]
    pub fn numer(&self) -> i64 {
        self.numer
    }

    #[inline]
    pub fn denom(&self) -> u32 {
        self.denom
    }

    #[inline]
    pub fn to_f64(&self) -> f64 {
        self.numer as f64 / self.denom as f64
    }

    pub fn to_ratio(&self) -> Ratio<i128> {
        Ratio::new(self.numer as i128, self.denom as i128)
    }
}

/// Overlap q_N(σ, τ) = (1/N) Σ σ_k τ_k via XOR and popcount.
pub fn overlap(sigma: &SpinConfig, tau: &SpinConfig) -> Result<Overlap> {
    Error::check_dim(sigma.n, tau.n)?;
    Ok(overlap_bits(sigma.n, sigma.bits, tau.bits))
}

#[inline]
pub(crate) fn overlap_bits(n: usize, a: u64, b: u64) -> Overlap {
    let disagree = (a ^ b).count_ones() as i64;
    Overlap {
        numer: n as i64 - 2 * disagree,
        denom: n as u32,
    }
}

/// All 2^n configurations in ascending bit-word order.
pub fn enumerate_configs(n: usize) -> Result<Vec<SpinConfig>> {
    check_enumerable(n)?;
    Ok((0..1u64 << n).map(|b| SpinConfig::new_unchecked(n, b)).collect())
}

pub(crate) fn check_enumerable(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::validation("system size must be at least 1"));
    }
    if n > ENUMERATION_CAP {
        return Err(Error::Resource {
            what: "n",
            value: n,
            cap: ENUMERATION_CAP,
        });
    }
    Ok(())
}

/// Which projection of a [`CoordinatePartition`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    First,
    Second,
}

impl Block {
    pub fn from_index(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Block::First),
            2 => Ok(Block::Second),
            _ => Err(Error::validation(format!("block must be 1 or 2, got {k}"))),
        }
    }
}

/// Split of the n coordinates into two nonempty complementary blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoordinatePartition {
    n: usize,
    mask: u64,
}

impl CoordinatePartition {
    /// `mask` marks the coordinates of the first block.
    pub fn new(n: usize, mask: u64) -> Result<Self> {
        if !(2..=MAX_SPINS).contains(&n) {
            return Err(Error::validation(format!(
                "a partition needs 2..={MAX_SPINS} coordinates, got {n}"
            )));
        }
        if mask & !low_mask(n) != 0 {
            return Err(Error::validation(format!(
                "partition mask {mask:#x} has bits above position {n}"
            )));
        }
        let n1 = mask.count_ones() as usize;
        if n1 == 0 || n1 == n {
            return Err(Error::validation(format!(
                "both blocks must be nonempty (mask {mask:#x}, n = {n})"
            )));
        }
        Ok(CoordinatePartition { n, mask })
    }

    /// Contiguous split {1..n1} | {n1+1..n}.
    pub fn prefix(n: usize, n1: usize) -> Result<Self> {
        if n1 == 0 || n1 >= n {
            return Err(Error::validation(format!(
                "prefix length must satisfy 1 <= n1 < n (n1 = {n1}, n = {n})"
            )));
        }
        CoordinatePartition::new(n, low_mask(n1))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        self.mask
    }

    #[inline]
    pub fn n1(&self) -> usize {
        self.mask.count_ones() as usize
    }

    #[inline]
    pub fn n2(&self) -> usize {
        self.n - self.n1()
    }

    #[inline]
    pub fn block_size(&self, block: Block) -> usize {
        match block {
            Block::First => self.n1(),
            Block::Second => self.n2(),
        }
    }

    #[inline]
    pub fn block_mask(&self, block: Block) -> u64 {
        match block {
            Block::First => self.mask,
            Block::Second => !self.mask & low_mask(self.n),
        }
    }

    /// Projects a raw bit word onto a block, packing the selected bits in
    /// ascending coordinate order.
    #[inline]
    pub(crate) fn project_bits(&self, bits: u64, block: Block) -> u64 {
        extract_bits(bits, self.block_mask(block))
    }

    /// Inverse of the pair of projections.
    pub fn combine(&self, first: &SpinConfig, second: &SpinConfig) -> Result<SpinConfig> {
        Error::check_dim(self.n1(), first.n)?;
        Error::check_dim(self.n2(), second.n)?;
        let bits = deposit_bits(first.bits, self.mask)
            | deposit_bits(second.bits, self.block_mask(Block::Second));
        Ok(SpinConfig::new_unchecked(self.n, bits))
    }
}

impl fmt::Display for CoordinatePartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |m: u64| {
            (0..self.n)
                .filter(|i| m >> i & 1 == 1)
                .map(|i| (i + 1).to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(
            f,
            "{{{}}}|{{{}}}",
            list(self.mask),
            list(self.block_mask(Block::Second))
        )
    }
}

/// Software parallel-bit-extract: gathers the bits of `x` selected by `mask`
/// into the low bits of the result, preserving order.
#[inline]
pub(crate) fn extract_bits(x: u64, mut mask: u64) -> u64 {
    let mut out = 0u64;
    let mut k = 0;
    while mask != 0 {
        let low = mask & mask.wrapping_neg();
        if x & low != 0 {
            out |= 1 << k;
        }
        k += 1;
        mask ^= low;
    }
    out
}

/// Inverse of [`extract_bits`]: scatters the low bits of `x` into the
/// positions selected by `mask`.
#[inline]
pub(crate) fn deposit_bits(x: u64, mut mask: u64) -> u64 {
    let mut out = 0u64;
    let mut k = 0;
    while mask != 0 {
        let low = mask & mask.wrapping_neg();
        if x >> k & 1 == 1 {
            out |= low;
        }
        k += 1;
        mask ^= low;
    }
    out
}

/// Sub-configuration of σ on one block of the partition.
pub fn project(sigma: &SpinConfig, p: &CoordinatePartition, block: Block) -> Result<SpinConfig> {
    Error::check_dim(p.n, sigma.n)?;
    Ok(SpinConfig::new_unchecked(
        p.block_size(block),
        p.project_bits(sigma.bits, block),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    /// The n-1 contiguous prefix splits.
    #[default]
    Canonical,
    /// Every nonempty proper subset as the first block; each unordered
    /// split appears twice.
    All,
}

impl FromStr for PartitionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(PartitionMode::Canonical),
            "all" => Ok(PartitionMode::All),
            _ => Err(Error::validation(format!(
                "partition mode must be 'canonical' or 'all', got {s:?}"
            ))),
        }
    }
}

pub fn enumerate_partitions(n: usize, mode: PartitionMode) -> Result<Vec<CoordinatePartition>> {
    if n < 2 {
        return Err(Error::validation(format!(
            "no valid split of {n} coordinate(s)"
        )));
    }
    match mode {
        PartitionMode::Canonical => (1..n).map(|n1| CoordinatePartition::prefix(n, n1)).collect(),
        PartitionMode::All => {
            check_enumerable(n)?;
            (1..low_mask(n))
                .map(|mask| CoordinatePartition::new(n, mask))
                .collect()
        }
    }
}
