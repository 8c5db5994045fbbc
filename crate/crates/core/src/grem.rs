//! Layered trees with power-of-two furcations (GREM).
//!
//! Layer `i` (0-based here) owns the coordinate block
//! `[offset_i, offset_i + k_i)`; a leaf is a spin configuration and the
//! branch it takes at layer `i` is determined by its first `offset_{i+1}`
//! spins. Two leaves merge at level `l` when they agree on the first `l`
//! layer blocks, and their covariance is the cumulative variance `v[l]`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::spin::{extract_bits, low_mask, CoordinatePartition, SpinConfig, MAX_SPINS};

/// Tolerance on Σ a_i = 1.
pub const VARIANCE_SUM_TOL: f64 = 1e-12;

/// A single reason a tree specification is rejected.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TreeViolation {
    NoLayers,
    LengthMismatch { exponents: usize, variances: usize },
    ExponentSum { expected: usize, found: usize },
    NegativeVariance { layer: usize, value: f64 },
    NonFiniteVariance { layer: usize },
    VarianceSum { found: f64 },
    TooManySpins { found: usize },
}

impl fmt::Display for TreeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeViolation::NoLayers => write!(f, "tree has no layers"),
            TreeViolation::LengthMismatch { exponents, variances } => write!(
                f,
                "{exponents} branch exponents but {variances} layer variances"
            ),
            TreeViolation::ExponentSum { expected, found } => {
                write!(f, "branch exponents sum to {found}, expected {expected}")
            }
            TreeViolation::NegativeVariance { layer, value } => {
                write!(f, "layer {} variance {value} is negative", layer + 1)
            }
            TreeViolation::NonFiniteVariance { layer } => {
                write!(f, "layer {} variance is not finite", layer + 1)
            }
            TreeViolation::VarianceSum { found } => {
                write!(f, "layer variances sum to {found}, expected 1")
            }
            TreeViolation::TooManySpins { found } => {
                write!(f, "{found} spins exceed the {MAX_SPINS}-spin word")
            }
        }
    }
}

fn violations_to_error(v: Vec<TreeViolation>) -> Error {
    let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
    Error::Validation(format!("invalid tree: {}", msgs.join("; ")))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GremTree {
    exponents: Vec<usize>,
    variances: Vec<f64>,
    cumulative: Vec<f64>,
    offsets: Vec<usize>,
}

impl GremTree {
    /// Checks every constraint and reports all violations at once.
    pub fn validate(
        exponents: &[usize],
        variances: &[f64],
        n: usize,
    ) -> std::result::Result<GremTree, Vec<TreeViolation>> {
        let mut bad = Vec::new();
        if exponents.is_empty() {
            bad.push(TreeViolation::NoLayers);
        }
        if exponents.len() != variances.len() {
            bad.push(TreeViolation::LengthMismatch {
                exponents: exponents.len(),
                variances: variances.len(),
            });
        }
        let ksum: usize = exponents.iter().sum();
        if ksum != n {
            bad.push(TreeViolation::ExponentSum {
                expected: n,
                found: ksum,
            });
        }
        if n > MAX_SPINS {
            bad.push(TreeViolation::TooManySpins { found: n });
        }
        for (layer, &a) in variances.iter().enumerate() {
            if !a.is_finite() {
                bad.push(TreeViolation::NonFiniteVariance { layer });
            } else if a < 0.0 {
                bad.push(TreeViolation::NegativeVariance { layer, value: a });
            }
        }
        let asum: f64 = variances.iter().sum();
        if !((asum - 1.0).abs() <= VARIANCE_SUM_TOL) {
            bad.push(TreeViolation::VarianceSum { found: asum });
        }
        if !bad.is_empty() {
            return Err(bad);
        }
        Ok(GremTree::build(exponents.to_vec(), variances.to_vec()))
    }

    pub fn new(exponents: &[usize], variances: &[f64]) -> Result<Self> {
        let n = exponents.iter().sum();
        GremTree::validate(exponents, variances, n).map_err(violations_to_error)
    }

    fn build(exponents: Vec<usize>, variances: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(variances.len() + 1);
        let mut offsets = Vec::with_capacity(exponents.len() + 1);
        let (mut v, mut o) = (0.0, 0);
        cumulative.push(0.0);
        offsets.push(0);
        for (&k, &a) in exponents.iter().zip(&variances) {
            v += a;
            o += k;
            cumulative.push(v);
            offsets.push(o);
        }
        // pin the top level so that c(σ,σ) is exactly 1
        *cumulative.last_mut().unwrap() = 1.0;
        GremTree {
            exponents,
            variances,
            cumulative,
            offsets,
        }
    }

    pub fn layers(&self) -> usize {
        self.exponents.len()
    }

    pub fn n_spins(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn exponents(&self) -> &[usize] {
        &self.exponents
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// v[l] for l = 0..=layers.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Mask of the coordinates in the first `l` layers.
    #[inline]
    pub fn prefix_mask(&self, l: usize) -> u64 {
        low_mask(self.offsets[l])
    }

    /// Mask of the coordinates of layer `i` (0-based).
    pub fn layer_mask(&self, i: usize) -> u64 {
        low_mask(self.offsets[i + 1]) & !low_mask(self.offsets[i])
    }

    /// Number of branches at each layer, Π_{j≤i} 2^{k_j}.
    pub fn branches_per_layer(&self) -> Vec<usize> {
        self.offsets[1..].iter().map(|&o| 1usize << o).collect()
    }

    pub fn total_branches(&self) -> usize {
        self.branches_per_layer().iter().sum()
    }

    #[inline]
    pub(crate) fn merge_level_bits(&self, a: u64, b: u64) -> usize {
        let diff = a ^ b;
        if diff == 0 {
            return self.layers();
        }
        let first = diff.trailing_zeros() as usize;
        // layers that end at or before the first differing coordinate
        self.offsets[1..].iter().take_while(|&&end| end <= first).count()
    }

    pub fn merge_level(&self, sigma: &SpinConfig, tau: &SpinConfig) -> Result<usize> {
        Error::check_dim(self.n_spins(), sigma.n())?;
        Error::check_dim(self.n_spins(), tau.n())?;
        Ok(self.merge_level_bits(sigma.bits(), tau.bits()))
    }

    #[inline]
    pub fn covariance_bits(&self, a: u64, b: u64) -> f64 {
        self.cumulative[self.merge_level_bits(a, b)]
    }

    pub fn covariance(&self, sigma: &SpinConfig, tau: &SpinConfig) -> Result<f64> {
        Ok(self.cumulative[self.merge_level(sigma, tau)?])
    }

    pub fn covariance_matrix(&self) -> SymMatrix {
        let dim = 1usize << self.n_spins();
        SymMatrix::from_fn(dim, |i, j| self.covariance_bits(i as u64, j as u64))
    }

    /// Tree seen through a coordinate subset: layer `i` keeps the coordinates
    /// of its block that lie in `mask`, in ascending order.
    pub fn induced(&self, mask: u64) -> Result<GremTree> {
        let exps: Vec<usize> = (0..self.layers())
            .map(|i| (self.layer_mask(i) & mask).count_ones() as usize)
            .collect();
        if exps.iter().sum::<usize>() == 0 {
            return Err(Error::validation("induced tree has no spins"));
        }
        Ok(GremTree::build(exps, self.variances.clone()))
    }

    /// One centered Gaussian of variance a_i per branch at layer i; each
    /// leaf sums its root-to-leaf path. Energies are indexed by bit word.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.n_spins();
        let mut energies = vec![0.0; 1usize << n];
        for i in 0..self.layers() {
            let sd = self.variances[i].sqrt();
            let width = self.offsets[i + 1];
            let branch: Vec<f64> = (0..1usize << width)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mask = low_mask(width) as usize;
            for (leaf, e) in energies.iter_mut().enumerate() {
                *e += branch[leaf & mask];
            }
        }
        energies
    }

    /// Plain-text form: `layers N`, then the exponents, then the variances.
    pub fn to_text(&self) -> String {
        let ks: Vec<String> = self.exponents.iter().map(ToString::to_string).collect();
        let as_: Vec<String> = self.variances.iter().map(ToString::to_string).collect();
        format!(
            "{} {}\n{}\n{}\n",
            self.layers(),
            self.n_spins(),
            ks.join(" "),
            as_.join(" ")
        )
    }
}

impl FromStr for GremTree {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut next_line = |what: &str, pos: usize| {
            lines.next().ok_or_else(|| Error::Parse {
                position: pos,
                message: format!("tree file is missing the {what} line"),
            })
        };
        let header = next_line("header", 0)?;
        let nums: Vec<usize> = parse_tokens(header, 1)?;
        if nums.len() != 2 {
            return Err(Error::Parse {
                position: 1,
                message: format!("header must be `layers N`, got {header:?}"),
            });
        }
        let (layers, n) = (nums[0], nums[1]);
        let k: Vec<usize> = parse_tokens(next_line("exponent", 2)?, 2)?;
        let a: Vec<f64> = parse_tokens(next_line("variance", 3)?, 3)?;
        if k.len() != layers || a.len() != layers {
            return Err(Error::Parse {
                position: 2,
                message: format!(
                    "header declares {layers} layers, found {} exponents and {} variances",
                    k.len(),
                    a.len()
                ),
            });
        }
        GremTree::validate(&k, &a, n).map_err(violations_to_error)
    }
}

fn parse_tokens<T: FromStr>(line: &str, line_no: usize) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    line.split_whitespace()
        .map(|t| {
            t.parse::<T>().map_err(|e| Error::Parse {
                position: line_no,
                message: format!("line {line_no}: {t:?}: {e}"),
            })
        })
        .collect()
}

/// Embedding of a smaller tree into one with more spins per layer.
///
/// Each target layer block projects onto the source layer block through a
/// fixed subset of its coordinates (`selection`); the truncating lift keeps
/// the leading `k_i(source)` coordinates of every block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeLift {
    source: GremTree,
    target: GremTree,
    selection: u64,
}

impl TreeLift {
    pub fn truncating(source: &GremTree, target_exponents: &[usize]) -> Result<Self> {
        if target_exponents.len() != source.layers() {
            return Err(Error::validation(format!(
                "target has {} layers, source has {}",
                target_exponents.len(),
                source.layers()
            )));
        }
        for (i, (&kt, &ks)) in target_exponents.iter().zip(source.exponents()).enumerate() {
            if kt < ks {
                return Err(Error::validation(format!(
                    "layer {} exponent decreases from {ks} to {kt}",
                    i + 1
                )));
            }
        }
        let target = GremTree::new(target_exponents, source.variances())?;
        let selection = (0..target.layers()).fold(0u64, |m, i| {
            m | (low_mask(source.exponents[i]) << target.offsets[i])
        });
        Ok(TreeLift {
            source: source.clone(),
            target,
            selection,
        })
    }

    /// The lift of the remaining coordinates: source exponents
    /// `k_i(target) − k_i(source)`, projecting through the trailing part of
    /// every layer block.
    pub fn complement(&self) -> Result<TreeLift> {
        let selection = !self.selection & low_mask(self.target.n_spins());
        let source = self.target.induced(selection)?;
        Ok(TreeLift {
            source,
            target: self.target.clone(),
            selection,
        })
    }

    pub fn source(&self) -> &GremTree {
        &self.source
    }

    pub fn target(&self) -> &GremTree {
        &self.target
    }

    pub fn selection_mask(&self) -> u64 {
        self.selection
    }

    #[inline]
    pub fn project_bits(&self, bits: u64) -> u64 {
        extract_bits(bits, self.selection)
    }

    /// The layer-respecting partition whose first block is the selection.
    pub fn partition(&self) -> Result<CoordinatePartition> {
        CoordinatePartition::new(self.target.n_spins(), self.selection)
    }

    /// E'_σ = E_{π(σ)} for a draw over the source leaves.
    pub fn lift_energies(&self, source_energies: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(1usize << self.source.n_spins(), source_energies.len())?;
        Ok((0..1u64 << self.target.n_spins())
            .map(|b| source_energies[self.project_bits(b) as usize])
            .collect())
    }

    /// Covariance of the lifted family at a target pair.
    #[inline]
    pub fn lifted_covariance_bits(&self, a: u64, b: u64) -> f64 {
        self.source
            .covariance_bits(self.project_bits(a), self.project_bits(b))
    }

    /// Minimum over all target pairs of `lifted covariance − v[l]`, with the
    /// pair attaining it.
    pub fn inequality_margin(&self) -> (f64, SpinConfig, SpinConfig) {
        let n = self.target.n_spins();
        let mut best = (f64::INFINITY, 0u64, 0u64);
        for a in 0..1u64 << n {
            for b in 0..1u64 << n {
                let m = self.lifted_covariance_bits(a, b) - self.target.covariance_bits(a, b);
                if m < best.0 {
                    best = (m, a, b);
                }
            }
        }
        (
            best.0,
            SpinConfig::new_unchecked(n, best.1),
            SpinConfig::new_unchecked(n, best.2),
        )
    }
}
