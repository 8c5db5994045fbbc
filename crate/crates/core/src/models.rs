//! Covariance rules c_N(σ, τ) and their coupling-level descriptions.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use num_rational::Ratio;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grem::GremTree;
use crate::linalg::SymMatrix;
use crate::spin::{overlap_bits, low_mask, Block, CoordinatePartition, SpinConfig};

/// Largest n for which a dense 2^n × 2^n covariance matrix is built.
pub const MATRIX_CAP: usize = 12;
/// Ceiling on the number of independent couplings in a structural sampler.
pub const COUPLING_CAP: usize = 1 << 24;
/// Tolerance on Σ w_p = 1.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Variances w_p of the order-p interaction terms, so that
/// c(σ,τ) = Σ_p w_p q^p.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixedCoefficients {
    weights: BTreeMap<u32, f64>,
}

impl MixedCoefficients {
    pub fn new(weights: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (p, w) in weights {
            if p == 0 {
                return Err(Error::validation("interaction order must be at least 1"));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::validation(format!(
                    "weight for p = {p} must be a nonnegative number, got {w}"
                )));
            }
            if map.insert(p, w).is_some() {
                return Err(Error::validation(format!("order p = {p} given twice")));
            }
        }
        let sum: f64 = map.values().sum();
        if !((sum - 1.0).abs() <= WEIGHT_SUM_TOL) {
            return Err(Error::validation(format!(
                "mixed weights must sum to 1, got {sum}"
            )));
        }
        map.retain(|_, w| *w > 0.0);
        Ok(MixedCoefficients { weights: map })
    }

    pub fn weights(&self) -> &BTreeMap<u32, f64> {
        &self.weights
    }

    /// ψ(q) = Σ_p w_p q^p.
    #[inline]
    pub fn psi(&self, q: f64) -> f64 {
        self.weights.iter().map(|(&p, &w)| w * q.powi(p as i32)).sum()
    }
}

/// User-supplied covariance matrices keyed by system size.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CustomCovariance {
    matrices: BTreeMap<usize, Arc<SymMatrix>>,
}

impl CustomCovariance {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a 2^n × 2^n matrix; it must be symmetric with unit diagonal.
    pub fn insert(&mut self, m: SymMatrix) -> Result<usize> {
        let dim = m.dim();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::validation(format!(
                "custom matrix dimension {dim} is not 2^n with n >= 1"
            )));
        }
        let n = dim.trailing_zeros() as usize;
        if n > MATRIX_CAP {
            return Err(Error::Resource {
                what: "custom matrix n",
                value: n,
                cap: MATRIX_CAP,
            });
        }
        for i in 0..dim {
            let d = m.get(i, i);
            if (d - 1.0).abs() > 1e-12 {
                return Err(Error::validation(format!(
                    "custom matrix diagonal entry {i} is {d}, expected 1"
                )));
            }
        }
        if m.asymmetry() > 1e-12 {
            return Err(Error::validation("custom matrix is not symmetric"));
        }
        self.matrices.insert(n, Arc::new(m));
        Ok(n)
    }

    pub fn from_files<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut c = CustomCovariance::new();
        for p in paths {
            let f = std::fs::File::open(p.as_ref()).map_err(|e| {
                Error::Io(format!("{}: {e}", p.as_ref().display()))
            })?;
            c.insert(SymMatrix::read_text(std::io::BufReader::new(f))?)?;
        }
        Ok(c)
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.matrices.keys().copied()
    }

    pub fn matrix(&self, n: usize) -> Option<&Arc<SymMatrix>> {
        self.matrices.get(&n)
    }
}

/// A covariance rule, independent of system size where the rule allows it.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    /// E_σ = (1/N) Σ_{i,j} J_ij σ_i σ_j, covariance q².
    SkFull,
    /// The i<j restriction. Only its coupling structure is distinct: its own
    /// covariance (N²q² − N)/(2N²) lacks a unit diagonal, so covariance
    /// queries return the full-model value q² and the two are compared at
    /// the free-energy level through the temperature rescaling.
    SkStandard,
    PSpin(u32),
    Mixed(MixedCoefficients),
    Rem,
    Grem(GremTree),
    Custom(CustomCovariance),
}

impl ModelKind {
    /// Short identifier in the CLI grammar.
    pub fn id(&self) -> String {
        match self {
            ModelKind::SkFull => "sk".into(),
            ModelKind::SkStandard => "sk-standard".into(),
            ModelKind::PSpin(p) => format!("pspin:{p}"),
            ModelKind::Mixed(w) => {
                let parts: Vec<String> = w.weights.iter().map(|(p, w)| format!("{p}={w}")).collect();
                format!("mixed:{}", parts.join(","))
            }
            ModelKind::Rem => "rem".into(),
            ModelKind::Grem(t) => {
                let ks: Vec<String> = t.exponents().iter().map(ToString::to_string).collect();
                format!("grem[{}]", ks.join(","))
            }
            ModelKind::Custom(c) => {
                let ns: Vec<String> = c.sizes().map(|n| n.to_string()).collect();
                format!("custom[{}]", ns.join(","))
            }
        }
    }
}

/// A covariance rule instantiated at system size `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceModel {
    kind: ModelKind,
    n: usize,
}

impl fmt::Display for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.id())
    }
}

impl CovarianceModel {
    pub fn new(kind: ModelKind, n: usize) -> Result<Self> {
        if n == 0 || n > crate::spin::MAX_SPINS {
            return Err(Error::validation(format!("system size {n} out of range")));
        }
        match &kind {
            ModelKind::PSpin(0) => {
                return Err(Error::validation("p-spin order must be at least 1"))
            }
            ModelKind::Grem(t) if t.n_spins() != n => {
                return Err(Error::Dimension {
                    expected: t.n_spins(),
                    found: n,
                })
            }
            ModelKind::Custom(c) if c.matrix(n).is_none() => {
                return Err(Error::MissingData(format!(
                    "custom model has no matrix for n = {n}"
                )))
            }
            _ => {}
        }
        Ok(CovarianceModel { kind, n })
    }

    pub fn sk(n: usize) -> Result<Self> {
        Self::new(ModelKind::SkFull, n)
    }

    pub fn pspin(p: u32, n: usize) -> Result<Self> {
        Self::new(ModelKind::PSpin(p), n)
    }

    pub fn rem(n: usize) -> Result<Self> {
        Self::new(ModelKind::Rem, n)
    }

    pub fn mixed(w: MixedCoefficients, n: usize) -> Result<Self> {
        Self::new(ModelKind::Mixed(w), n)
    }

    pub fn grem(tree: GremTree) -> Result<Self> {
        let n = tree.n_spins();
        Self::new(ModelKind::Grem(tree), n)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn id(&self) -> String {
        self.kind.id()
    }

    /// Same rule at another size. GREM trees are tied to one size and
    /// custom models need a matrix for the requested size.
    pub fn resized(&self, n: usize) -> Result<Self> {
        match &self.kind {
            ModelKind::Grem(_) if n != self.n => Err(Error::Unsupported(
                "a GREM tree has a fixed size; use a partition-induced sub-model".into(),
            )),
            _ => CovarianceModel::new(self.kind.clone(), n),
        }
    }

    /// The model on one block of a partition. Size-parametric rules are
    /// re-instantiated at the block size; a GREM tree induces the tree whose
    /// layer `i` keeps the layer-`i` coordinates falling in the block.
    pub fn block_model(&self, p: &CoordinatePartition, block: Block) -> Result<Self> {
        Error::check_dim(self.n, p.n())?;
        let nk = p.block_size(block);
        match &self.kind {
            ModelKind::Grem(t) => CovarianceModel::grem(t.induced(p.block_mask(block))?),
            ModelKind::Custom(c) if c.matrix(nk).is_none() => Err(Error::MissingData(format!(
                "custom model needs a matrix for block size {nk}"
            ))),
            _ => self.resized(nk),
        }
    }

    /// c(σ,τ) for raw bit words of this model's size.
    #[inline]
    pub fn covariance_bits(&self, a: u64, b: u64) -> f64 {
        match &self.kind {
            ModelKind::SkFull | ModelKind::SkStandard => {
                let q = overlap_bits(self.n, a, b).to_f64();
                q * q
            }
            ModelKind::PSpin(p) => overlap_bits(self.n, a, b).to_f64().powi(*p as i32),
            ModelKind::Mixed(w) => w.psi(overlap_bits(self.n, a, b).to_f64()),
            ModelKind::Rem => {
                if a == b {
                    1.0
                } else {
                    0.0
                }
            }
            ModelKind::Grem(t) => t.covariance_bits(a, b),
            ModelKind::Custom(c) => c.matrices[&self.n].get(a as usize, b as usize),
        }
    }

    pub fn covariance(&self, sigma: &SpinConfig, tau: &SpinConfig) -> Result<f64> {
        Error::check_dim(self.n, sigma.n())?;
        Error::check_dim(self.n, tau.n())?;
        Ok(self.covariance_bits(sigma.bits(), tau.bits()))
    }

    /// Exact rational covariance for the rules that have one (SK, p-spin,
    /// REM); `None` otherwise.
    pub fn exact_covariance_bits(&self, a: u64, b: u64) -> Option<Ratio<i128>> {
        match &self.kind {
            ModelKind::SkFull | ModelKind::SkStandard => {
                Some(overlap_bits(self.n, a, b).to_ratio().pow(2))
            }
            ModelKind::PSpin(p) => Some(overlap_bits(self.n, a, b).to_ratio().pow(*p as i32)),
            ModelKind::Rem => Some(Ratio::from_integer((a == b) as i128)),
            _ => None,
        }
    }

    /// True when c(σ,τ) depends on the pair only through its overlap
    /// (REM included: it is a function of whether the overlap is 1).
    pub fn is_overlap_function(&self) -> bool {
        matches!(
            self.kind,
            ModelKind::SkFull
                | ModelKind::SkStandard
                | ModelKind::PSpin(_)
                | ModelKind::Mixed(_)
                | ModelKind::Rem
        )
    }

    /// Covariance as a function of the overlap numerator `a` (q = a/n).
    pub(crate) fn covariance_of_overlap(&self, numer: i64) -> f64 {
        let q = numer as f64 / self.n as f64;
        match &self.kind {
            ModelKind::SkFull | ModelKind::SkStandard => q * q,
            ModelKind::PSpin(p) => q.powi(*p as i32),
            ModelKind::Mixed(w) => w.psi(q),
            ModelKind::Rem => (numer == self.n as i64) as u8 as f64,
            _ => unreachable!("not an overlap function"),
        }
    }

    pub(crate) fn exact_covariance_of_overlap(&self, numer: i64) -> Option<Ratio<i128>> {
        let q = Ratio::new(numer as i128, self.n as i128);
        match &self.kind {
            ModelKind::SkFull | ModelKind::SkStandard => Some(q.pow(2)),
            ModelKind::PSpin(p) => Some(q.pow(*p as i32)),
            ModelKind::Rem => Some(Ratio::from_integer((numer == self.n as i64) as i128)),
            _ => None,
        }
    }

    pub fn build_covariance_matrix(&self) -> Result<SymMatrix> {
        if self.n > MATRIX_CAP {
            return Err(Error::Resource {
                what: "n",
                value: self.n,
                cap: MATRIX_CAP,
            });
        }
        if let ModelKind::Custom(c) = &self.kind {
            return Ok(SymMatrix::clone(&c.matrices[&self.n]));
        }
        let dim = 1usize << self.n;
        Ok(SymMatrix::from_fn(dim, |i, j| {
            self.covariance_bits(i as u64, j as u64)
        }))
    }

    pub fn coupling_structure(&self) -> Result<CouplingStructure> {
        let n = self.n;
        let mut couplings = Vec::new();
        let push_pspin = |couplings: &mut Vec<Coupling>, p: u32, weight: f64| -> Result<()> {
            let count = (n as u128).checked_pow(p).unwrap_or(u128::MAX);
            if count + couplings.len() as u128 > COUPLING_CAP as u128 {
                return Err(Error::Resource {
                    what: "couplings",
                    value: usize::try_from(count).unwrap_or(usize::MAX),
                    cap: COUPLING_CAP,
                });
            }
            let scale = weight.sqrt() * (n as f64).powf(-(p as f64) / 2.0);
            let mut idx = vec![0usize; p as usize];
            loop {
                let mask = idx.iter().fold(0u64, |m, &i| m ^ (1 << i));
                couplings.push(Coupling {
                    scale,
                    support: Support::Monomial(mask),
                });
                // odometer over index tuples, last index fastest
                let mut d = p as usize;
                loop {
                    if d == 0 {
                        return Ok(());
                    }
                    d -= 1;
                    idx[d] += 1;
                    if idx[d] < n {
                        break;
                    }
                    idx[d] = 0;
                }
            }
        };
        match &self.kind {
            ModelKind::SkFull => push_pspin(&mut couplings, 2, 1.0)?,
            ModelKind::SkStandard => {
                let scale = 1.0 / n as f64;
                for i in 0..n {
                    for j in i + 1..n {
                        couplings.push(Coupling {
                            scale,
                            support: Support::Monomial((1 << i) | (1 << j)),
                        });
                    }
                }
            }
            ModelKind::PSpin(p) => push_pspin(&mut couplings, *p, 1.0)?,
            ModelKind::Mixed(w) => {
                for (&p, &wp) in &w.weights {
                    push_pspin(&mut couplings, p, wp)?;
                }
            }
            ModelKind::Rem => {
                crate::spin::check_enumerable(n)?;
                couplings.extend((0..1u64 << n).map(|c| Coupling {
                    scale: 1.0,
                    support: Support::Level(c),
                }));
            }
            ModelKind::Grem(t) => {
                crate::spin::check_enumerable(n)?;
                for layer in 0..t.layers() {
                    let mask = t.prefix_mask(layer + 1);
                    let scale = t.variances()[layer].sqrt();
                    couplings.extend((0..=mask).map(|prefix| Coupling {
                        scale,
                        support: Support::Branch { mask, prefix },
                    }));
                }
            }
            ModelKind::Custom(_) => {
                return Err(Error::Unsupported(
                    "custom covariances have no coupling structure; use the Cholesky sampler"
                        .into(),
                ))
            }
        }
        Ok(CouplingStructure { n, couplings })
    }
}

/// How one independent unit Gaussian enters the energies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Support {
    /// Contributes Π_{i ∈ mask} σ_i to every energy.
    Monomial(u64),
    /// Contributes only to the configuration with this bit word.
    Level(u64),
    /// Contributes to every configuration whose masked bits equal `prefix`.
    Branch { mask: u64, prefix: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Coupling {
    pub scale: f64,
    pub support: Support,
}

impl Coupling {
    /// Coefficient of this coupling in E_σ.
    #[inline]
    pub fn coefficient(&self, n: usize, sigma_bits: u64) -> f64 {
        let hit = match self.support {
            Support::Monomial(m) => {
                // σ_i = −1 where the bit is clear
                let negatives = (m & !sigma_bits & low_mask(n)).count_ones();
                return if negatives.is_multiple_of(2) { self.scale } else { -self.scale };
            }
            Support::Level(c) => c == sigma_bits,
            Support::Branch { mask, prefix } => sigma_bits & mask == prefix,
        };
        if hit {
            self.scale
        } else {
            0.0
        }
    }
}

/// The list of independent unit couplings and the linear map to energies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingStructure {
    n: usize,
    couplings: Vec<Coupling>,
}

impl CouplingStructure {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn len(&self) -> usize {
        self.couplings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.couplings.is_empty()
    }

    /// Σ_k coef_k(σ) coef_k(τ): the covariance the structure induces.
    pub fn implied_covariance(&self, sigma: &SpinConfig, tau: &SpinConfig) -> Result<f64> {
        Error::check_dim(self.n, sigma.n())?;
        Error::check_dim(self.n, tau.n())?;
        Ok(self
            .couplings
            .iter()
            .map(|c| c.coefficient(self.n, sigma.bits()) * c.coefficient(self.n, tau.bits()))
            .sum())
    }

    /// Maps one realization of the couplings (in list order) to the 2^n
    /// energies. Monomials are accumulated into Walsh coefficients and
    /// evaluated with a fast Walsh–Hadamard transform.
    pub fn energies(&self, values: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.couplings.len(), values.len())?;
        crate::spin::check_enumerable(self.n)?;
        let size = 1usize << self.n;
        let mut walsh: Option<Vec<f64>> = None;
        let mut out = vec![0.0; size];
        let mut branches: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for (c, &g) in self.couplings.iter().zip(values) {
            let x = c.scale * g;
            match c.support {
                Support::Monomial(m) => walsh.get_or_insert_with(|| vec![0.0; size])[m as usize] += x,
                Support::Level(b) => out[b as usize] += x,
                Support::Branch { mask, prefix } => {
                    branches.entry(mask).or_insert_with(|| vec![0.0; mask as usize + 1])
                        [prefix as usize] += x
                }
            }
        }
        if let Some(mut w) = walsh {
            fwht(&mut w);
            // χ_S(σ) = (−1)^{|S ∩ negatives(σ)|}: index the transform by the
            // complement word
            let full = low_mask(self.n) as usize;
            for (b, o) in out.iter_mut().enumerate() {
                *o += w[!b & full];
            }
        }
        for (mask, table) in &branches {
            let m = *mask as usize;
            for (b, o) in out.iter_mut().enumerate() {
                *o += table[b & m];
            }
        }
        Ok(out)
    }
}

/// In-place unnormalized Walsh–Hadamard transform:
/// `out[x] = Σ_S in[S] (−1)^{popcount(x & S)}`.
pub(crate) fn fwht(a: &mut [f64]) {
    let n = a.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (x, y) = (a[j], a[j + h]);
                a[j] = x + y;
                a[j + h] = x - y;
            }
        }
        h *= 2;
    }
}
