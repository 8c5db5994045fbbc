//! Disorder realizations {E_σ}. Every draw comes from a counter-indexed
//! stream, so draw i is the same whatever else was sampled.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{CholeskyFactor, SymMatrix};
use crate::models::{CouplingStructure, CovarianceModel, ModelKind};
use crate::spin::{Block, CoordinatePartition};

/// Derives one independent random stream per (master seed, experiment, draw
/// index). The experiment label and seed are hashed into a ChaCha key; the
/// draw index selects the ChaCha stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPolicy {
    master_seed: u64,
    experiment: String,
}

impl SeedPolicy {
    pub fn new(master_seed: u64) -> Self {
        SeedPolicy {
            master_seed,
            experiment: String::new(),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn experiment(&self) -> &str {
        &self.experiment
    }

    /// A policy for a sub-experiment; streams of distinct labels are
    /// unrelated.
    pub fn fork(&self, label: &str) -> SeedPolicy {
        let experiment = if self.experiment.is_empty() {
            label.to_string()
        } else {
            format!("{}/{label}", self.experiment)
        };
        SeedPolicy {
            master_seed: self.master_seed,
            experiment,
        }
    }

    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.master_seed.to_le_bytes());
        h.update(self.experiment.as_bytes());
        let key: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub model: String,
    pub master_seed: u64,
    pub experiment: String,
    pub index: u64,
}

/// One realization of the energies, indexed like `enumerate_configs`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DisorderDraw {
    n: usize,
    energies: Vec<f64>,
    provenance: Option<Provenance>,
}

impl DisorderDraw {
    pub fn new(n: usize, energies: Vec<f64>) -> Result<Self> {
        crate::spin::check_enumerable(n)?;
        Error::check_dim(1usize << n, energies.len())?;
        Ok(DisorderDraw {
            n,
            energies,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = Some(p);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn into_energies(self) -> Vec<f64> {
        self.energies
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    /// Structural when the model has a coupling structure, else Cholesky.
    #[default]
    Auto,
    Structural,
    Cholesky,
}

impl std::str::FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SamplingMethod::Auto),
            "structural" => Ok(SamplingMethod::Structural),
            "cholesky" => Ok(SamplingMethod::Cholesky),
            _ => Err(Error::validation(format!("unknown sampling method {s:?}"))),
        }
    }
}

/// A reusable sampler for one model. Factor matrices are shared.
#[derive(Clone, Debug)]
pub enum Sampler {
    Structural(Arc<CouplingStructure>),
    Cholesky { n: usize, factor: Arc<CholeskyFactor> },
}

impl Sampler {
    pub fn new(m: &CovarianceModel, method: SamplingMethod) -> Result<Self> {
        match method {
            SamplingMethod::Structural => Ok(Sampler::Structural(Arc::new(m.coupling_structure()?))),
            SamplingMethod::Cholesky => {
                if matches!(m.kind(), ModelKind::SkStandard) {
                    return Err(Error::Unsupported(
                        "the standard SK model has no unit-diagonal covariance matrix; sample it structurally"
                            .into(),
                    ));
                }
                let c = m.build_covariance_matrix()?;
                Ok(Sampler::Cholesky {
                    n: m.n(),
                    factor: Arc::new(CholeskyFactor::factor(&c)?),
                })
            }
            SamplingMethod::Auto => match m.coupling_structure() {
                Ok(s) => Ok(Sampler::Structural(Arc::new(s))),
                Err(Error::Unsupported(_)) => Sampler::new(m, SamplingMethod::Cholesky),
                Err(e) => Err(e),
            },
        }
    }

    pub fn from_matrix(c: &SymMatrix) -> Result<Self> {
        let dim = c.dim();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::validation(format!(
                "covariance dimension {dim} is not a power of two"
            )));
        }
        Ok(Sampler::Cholesky {
            n: dim.trailing_zeros() as usize,
            factor: Arc::new(CholeskyFactor::factor(c)?),
        })
    }

    pub fn n(&self) -> usize {
        match self {
            Sampler::Structural(s) => s.n(),
            Sampler::Cholesky { n, .. } => *n,
        }
    }

    pub fn energies<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Sampler::Structural(s) => {
                let g: Vec<f64> = (0..s.len()).map(|_| rng.sample(StandardNormal)).collect();
                s.energies(&g).expect("coupling count matches")
            }
            Sampler::Cholesky { factor, .. } => factor.sample(rng),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DisorderDraw {
        DisorderDraw {
            n: self.n(),
            energies: self.energies(rng),
            provenance: None,
        }
    }
}

/// Draws every coupling from a standard normal and applies the structural
/// linear map.
pub fn sample_structural<R: Rng + ?Sized>(m: &CovarianceModel, rng: &mut R) -> Result<DisorderDraw> {
    match m.coupling_structure() {
        Ok(s) => Ok(Sampler::Structural(Arc::new(s)).draw(rng)),
        Err(Error::Unsupported(msg)) => Err(Error::Unsupported(format!(
            "{msg} (call sample_cholesky with the model's matrix)"
        ))),
        Err(e) => Err(e),
    }
}

/// Returns L·g with L a pivoted, rank-revealing factor of `c`.
pub fn sample_cholesky<R: Rng + ?Sized>(c: &SymMatrix, rng: &mut R) -> Result<DisorderDraw> {
    Ok(Sampler::from_matrix(c)?.draw(rng))
}

/// Lifts a draw on one block to the full space: E'_σ = E_{π_k(σ)}.
pub fn lift(draw: &DisorderDraw, p: &CoordinatePartition, block: Block) -> Result<DisorderDraw> {
    Error::check_dim(p.block_size(block), draw.n)?;
    crate::spin::check_enumerable(p.n())?;
    let energies = (0..1u64 << p.n())
        .map(|b| draw.energies[p.project_bits(b, block) as usize])
        .collect();
    Ok(DisorderDraw {
        n: p.n(),
        energies,
        provenance: draw.provenance.clone(),
    })
}

/// Three independent families on Σ_N: the size-N system and the two lifted
/// block systems.
#[derive(Clone, Debug, PartialEq)]
pub struct Triple {
    pub partition: CoordinatePartition,
    pub full: Vec<f64>,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    /// Unlifted block draws, indexed over Σ_{N1} and Σ_{N2}.
    pub first_block: Vec<f64>,
    pub second_block: Vec<f64>,
}

/// Samplers for the three constituents of a triple, built once.
#[derive(Clone, Debug)]
pub struct TripleSampler {
    partition: CoordinatePartition,
    full: Sampler,
    first: Sampler,
    second: Sampler,
}

impl TripleSampler {
    pub fn new(m: &CovarianceModel, p: &CoordinatePartition, method: SamplingMethod) -> Result<Self> {
        Error::check_dim(m.n(), p.n())?;
        Ok(TripleSampler {
            partition: *p,
            full: Sampler::new(m, method)?,
            first: Sampler::new(&m.block_model(p, Block::First)?, method)?,
            second: Sampler::new(&m.block_model(p, Block::Second)?, method)?,
        })
    }

    pub fn partition(&self) -> &CoordinatePartition {
        &self.partition
    }

    /// Draws the full system, then the first block, then the second, from
    /// one stream.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Triple {
        let full = self.full.energies(rng);
        let first_block = self.first.energies(rng);
        let second_block = self.second.energies(rng);
        let p = &self.partition;
        let lift_vec = |src: &[f64], block| -> Vec<f64> {
            (0..1u64 << p.n())
                .map(|b| src[p.project_bits(b, block) as usize])
                .collect()
        };
        Triple {
            partition: *p,
            first: lift_vec(&first_block, Block::First),
            second: lift_vec(&second_block, Block::Second),
            full,
            first_block,
            second_block,
        }
    }
}

pub fn joint_triple<R: Rng + ?Sized>(
    m: &CovarianceModel,
    p: &CoordinatePartition,
    rng: &mut R,
) -> Result<Triple> {
    Ok(TripleSampler::new(m, p, SamplingMethod::Auto)?.sample(rng))
}

/// Plain-text dump: one line per draw, 2^n whitespace-separated energies in
/// shortest round-trip decimal form.
pub fn write_dump<'a>(draws: impl IntoIterator<Item = &'a DisorderDraw>, mut w: impl Write) -> Result<()> {
    for d in draws {
        let line: Vec<String> = d.energies.iter().map(|e| e.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_dump(r: impl BufRead) -> Result<Vec<DisorderDraw>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let energies = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|e| Error::Parse {
                    position: i,
                    message: format!("line {}: {t:?}: {e}", i + 1),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let len = energies.len();
        if !len.is_power_of_two() || len < 2 {
            return Err(Error::Parse {
                position: i,
                message: format!("line {}: {len} energies is not 2^n", i + 1),
            });
        }
        out.push(DisorderDraw::new(len.trailing_zeros() as usize, energies)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grem::GremTree;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = SeedPolicy::new(42).fork("alpha");
        let a: f64 = s.rng(3).sample(StandardNormal);
        let b: f64 = s.rng(3).sample(StandardNormal);
        let c: f64 = s.rng(4).sample(StandardNormal);
        let d: f64 = SeedPolicy::new(42).fork("other").rng(3).sample(StandardNormal);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(s.experiment(), "alpha");
        assert_eq!(s.fork("x").experiment(), "alpha/x");
    }

    #[test]
    fn rem_structural_draw_is_raw_normals() {
        let m = CovarianceModel::rem(2).unwrap();
        let seeds = SeedPolicy::new(1);
        let d = sample_structural(&m, &mut seeds.rng(0)).unwrap();
        let mut rng = seeds.rng(0);
        let g: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        assert_eq!(d.energies(), &g[..]);
    }

    #[test]
    fn sk_single_spin_energies_coincide() {
        let m = CovarianceModel::sk(1).unwrap();
        let d = sample_structural(&m, &mut SeedPolicy::new(5).rng(0)).unwrap();
        assert_eq!(d.energies()[0], d.energies()[1]);
        let c = sample_cholesky(&m.build_covariance_matrix().unwrap(), &mut SeedPolicy::new(5).rng(0)).unwrap();
        assert_eq!(c.energies()[0], c.energies()[1]);
    }

    #[test]
    fn grem_structural_matches_tree_sampler() {
        let t = GremTree::new(&[1, 2], &[0.3, 0.7]).unwrap();
        let m = CovarianceModel::grem(t.clone()).unwrap();
        let seeds = SeedPolicy::new(9);
        let a = sample_structural(&m, &mut seeds.rng(0)).unwrap();
        let b = t.sample(&mut seeds.rng(0));
        for (x, y) in a.energies().iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn custom_needs_cholesky() {
        let mut c = crate::models::CustomCovariance::new();
        c.insert(SymMatrix::identity(4)).unwrap();
        let m = CovarianceModel::new(ModelKind::Custom(c), 2).unwrap();
        assert!(matches!(
            sample_structural(&m, &mut SeedPolicy::new(0).rng(0)),
            Err(Error::Unsupported(_))
        ));
        assert!(Sampler::new(&m, SamplingMethod::Auto).is_ok());
    }

    #[test]
    fn lift_is_fiber_constant() {
        let p = CoordinatePartition::prefix(2, 1).unwrap();
        let d = DisorderDraw::new(1, vec![-0.5, 1.25]).unwrap();
        let l = lift(&d, &p, Block::First).unwrap();
        // σ = (+,+) is word 0b11, (+,−) is 0b01
        assert_eq!(l.energies()[0b11], 1.25);
        assert_eq!(l.energies()[0b01], 1.25);
        assert_eq!(l.energies()[0b00], -0.5);
        assert!(lift(&d, &p, Block::Second).is_ok());
        let bad = DisorderDraw::new(2, vec![0.0; 4]).unwrap();
        assert!(lift(&bad, &p, Block::First).is_err());
    }

    #[test]
    fn triple_lifts_are_fiber_constant() {
        let m = CovarianceModel::sk(4).unwrap();
        let p = CoordinatePartition::new(4, 0b0110).unwrap();
        let t = joint_triple(&m, &p, &mut SeedPolicy::new(3).rng(0)).unwrap();
        for a in 0..16u64 {
            for b in 0..16u64 {
                if p.project_bits(a, Block::First) == p.project_bits(b, Block::First) {
                    assert_eq!(t.first[a as usize], t.first[b as usize]);
                }
                if p.project_bits(a, Block::Second) == p.project_bits(b, Block::Second) {
                    assert_eq!(t.second[a as usize], t.second[b as usize]);
                }
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let d = vec![
            DisorderDraw::new(1, vec![0.1, -2.5e-7]).unwrap(),
            DisorderDraw::new(2, vec![1.0, 2.0, 3.0, f64::MIN_POSITIVE]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_dump(&d, &mut buf).unwrap();
        assert_eq!(read_dump(&buf[..]).unwrap(), d);
        assert!(read_dump(&b"1 2 3\n"[..]).is_err());
    }
}
