//! The interpolating Hamiltonian between a size-N system (t = 1) and two
//! independent block systems (t = 0), its boundary identities, and Monte
//! Carlo estimates of the t-derivative of the quenched free energy.
//!
//! With −H(σ,t) = √(tN) E_σ + √((1−t)N1) E¹_{π1σ} + √((1−t)N2) E²_{π2σ},
//! Gaussian integration by parts gives
//!
//!   (1/N) d/dt Av ln Z_N(t) = −(β²/2) ⟨ gap(σ,τ) ⟩_t
//!
//! where `gap` is the covariance-condition gap and ⟨·⟩_t is the disorder
//! average of the product Gibbs measure on two replicas.

use serde::Serialize;

use crate::audit::GapEvaluator;
use crate::disorder::{SamplingMethod, SeedPolicy, Triple, TripleSampler};
use crate::error::{Error, Result};
use crate::models::CovarianceModel;
use crate::spin::{Block, CoordinatePartition, SpinConfig};
use crate::stats::mean_and_se;
use crate::thermo::{check_beta, check_samples, log_partition_energies, log_sum_exp, per_draw, QuenchedEstimate};

/// Largest n for which the two-replica average is enumerated (4^n terms
/// per draw).
pub const INTERPOLATION_CAP: usize = 8;

/// Central differences with a step above this are flagged.
pub const MAX_RECOMMENDED_STEP: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InterpolationPoint {
    t: f64,
}

impl InterpolationPoint {
    pub fn new(t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::validation(format!("t must lie in [0, 1], got {t}")));
        }
        Ok(InterpolationPoint { t })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Weight of the size-N system.
    pub fn full_weight(&self) -> f64 {
        self.t
    }

    /// Weight of each block system.
    pub fn block_weight(&self) -> f64 {
        1.0 - self.t
    }
}

/// −H(σ,t) for every σ, indexed by bit word.
pub fn neg_hamiltonians(triple: &Triple, t: InterpolationPoint) -> Vec<f64> {
    let p = &triple.partition;
    let a = (t.full_weight() * p.n() as f64).sqrt();
    let b1 = (t.block_weight() * p.n1() as f64).sqrt();
    let b2 = (t.block_weight() * p.n2() as f64).sqrt();
    triple
        .full
        .iter()
        .zip(&triple.first)
        .zip(&triple.second)
        .map(|((e, e1), e2)| a * e + b1 * e1 + b2 * e2)
        .collect()
}

pub fn interp_hamiltonian(triple: &Triple, sigma: &SpinConfig, t: InterpolationPoint) -> Result<f64> {
    let p = &triple.partition;
    Error::check_dim(p.n(), sigma.n())?;
    let i = sigma.index();
    Ok(-((t.full_weight() * p.n() as f64).sqrt() * triple.full[i]
        + (t.block_weight() * p.n1() as f64).sqrt() * triple.first[i]
        + (t.block_weight() * p.n2() as f64).sqrt() * triple.second[i]))
}

/// ln Σ_σ exp(−β H(σ,t)).
pub fn log_partition_t(triple: &Triple, beta: f64, t: InterpolationPoint) -> Result<f64> {
    check_beta(beta)?;
    let h = neg_hamiltonians(triple, t);
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("non-finite energy in triple"));
    }
    if beta == 0.0 {
        return Ok(triple.partition.n() as f64 * std::f64::consts::LN_2);
    }
    let xs: Vec<f64> = h.iter().map(|x| beta * x).collect();
    Ok(log_sum_exp(&xs))
}

/// Product Gibbs measure on pairs under H(·,t) for one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoReplicaGibbs {
    weights: Vec<f64>,
}

impl TwoReplicaGibbs {
    pub fn new(triple: &Triple, beta: f64, t: InterpolationPoint) -> Result<Self> {
        check_beta(beta)?;
        let xs: Vec<f64> = neg_hamiltonians(triple, t).iter().map(|x| beta * x).collect();
        let lz = log_sum_exp(&xs);
        if !lz.is_finite() {
            return Err(Error::validation("non-finite partition function"));
        }
        Ok(TwoReplicaGibbs {
            weights: xs.iter().map(|x| (x - lz).exp()).collect(),
        })
    }

    /// Single-replica marginal.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn pair_weight(&self, sigma: usize, tau: usize) -> f64 {
        self.weights[sigma] * self.weights[tau]
    }

    /// Σ_{σ,τ} w(σ) w(τ) f(σ,τ) for a dense row-major table f.
    pub fn expect_table(&self, table: &[f64]) -> f64 {
        let size = self.weights.len();
        debug_assert_eq!(table.len(), size * size);
        self.weights
            .iter()
            .zip(table.chunks_exact(size))
            .map(|(ws, row)| ws * row.iter().zip(&self.weights).map(|(g, wt)| g * wt).sum::<f64>())
            .sum()
    }
}

/// Shared machinery for the per-draw estimators: the triple sampler and the
/// dense gap table of the model/partition pair.
pub struct InterpolationSetup {
    sampler: TripleSampler,
    gaps: Vec<f64>,
    n: usize,
    model: String,
}

impl InterpolationSetup {
    pub fn new(m: &CovarianceModel, p: &CoordinatePartition) -> Result<Self> {
        Self::with_method(m, p, SamplingMethod::Auto)
    }

    pub fn with_method(m: &CovarianceModel, p: &CoordinatePartition, method: SamplingMethod) -> Result<Self> {
        if m.n() > INTERPOLATION_CAP {
            return Err(Error::Resource {
                what: "n",
                value: m.n(),
                cap: INTERPOLATION_CAP,
            });
        }
        Ok(InterpolationSetup {
            sampler: TripleSampler::new(m, p, method)?,
            gaps: GapEvaluator::new(m, p)?.matrix(),
            n: m.n(),
            model: m.id(),
        })
    }

    pub fn partition(&self) -> &CoordinatePartition {
        self.sampler.partition()
    }

    pub fn triple(&self, seeds: &SeedPolicy, index: u64) -> Triple {
        self.sampler.sample(&mut seeds.rng(index))
    }

    /// −(β²/2)⟨gap⟩_t for one realization.
    pub fn derivative_sample(&self, triple: &Triple, beta: f64, t: InterpolationPoint) -> f64 {
        if beta == 0.0 {
            return 0.0;
        }
        let g = TwoReplicaGibbs::new(triple, beta, t).expect("finite Gaussian energies");
        -0.5 * beta * beta * g.expect_table(&self.gaps)
    }

    /// (1/N) ln Z_N(t) for one realization.
    pub fn alpha_sample(&self, triple: &Triple, beta: f64, t: InterpolationPoint) -> f64 {
        log_partition_t(triple, beta, t).expect("finite Gaussian energies") / self.n as f64
    }
}

fn label(kind: &str, model: &str, t: f64) -> String {
    format!("{kind}[{model}](t={t})")
}

/// Monte Carlo estimate of (1/N) d/dt Av ln Z_N(t) from the two-replica
/// formula, with ⟨·⟩_t summed exactly per draw.
pub fn derivative_estimator(
    m: &CovarianceModel,
    p: &CoordinatePartition,
    beta: f64,
    t: f64,
    samples: usize,
    seeds: &SeedPolicy,
) -> Result<QuenchedEstimate> {
    let setup = InterpolationSetup::new(m, p)?;
    derivative_with(&setup, beta, t, samples, seeds)
}

pub fn derivative_with(
    setup: &InterpolationSetup,
    beta: f64,
    t: f64,
    samples: usize,
    seeds: &SeedPolicy,
) -> Result<QuenchedEstimate> {
    check_beta(beta)?;
    check_samples(samples)?;
    let point = InterpolationPoint::new(t)?;
    let lbl = label("dalpha_dt", &setup.model, t);
    if beta == 0.0 {
        return Ok(QuenchedEstimate::exact(lbl, setup.n, beta, samples, 0.0));
    }
    let values = per_draw(samples, |i| {
        let tr = setup.triple(seeds, i);
        setup.derivative_sample(&tr, beta, point)
    });
    Ok(QuenchedEstimate::from_values(lbl, setup.n, beta, &values))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteDifferenceReport {
    pub t: f64,
    pub h: f64,
    pub derivative: QuenchedEstimate,
    pub finite_difference: QuenchedEstimate,
    pub difference: f64,
    /// Standard error of the per-draw difference (both estimators use the
    /// same draws).
    pub combined_std_error: f64,
    /// h², the order of the central-difference truncation bias.
    pub bias_scale: f64,
    pub step_warning: bool,
    pub agree: bool,
}

/// Central difference of (1/N) ln Z(t) at t ± h on common draws, compared
/// with the two-replica estimator on the same draws.
pub fn finite_difference_check(
    m: &CovarianceModel,
    p: &CoordinatePartition,
    beta: f64,
    t: f64,
    h: f64,
    samples: usize,
    seeds: &SeedPolicy,
) -> Result<FiniteDifferenceReport> {
    check_beta(beta)?;
    check_samples(samples)?;
    if !(h > 0.0 && t - h > 0.0 && t + h < 1.0) {
        return Err(Error::validation(format!(
            "need 0 < t − h and t + h < 1 (t = {t}, h = {h})"
        )));
    }
    let setup = InterpolationSetup::new(m, p)?;
    let (lo, mid, hi) = (
        InterpolationPoint::new(t - h)?,
        InterpolationPoint::new(t)?,
        InterpolationPoint::new(t + h)?,
    );
    let pairs: Vec<(f64, f64)> = {
        use rayon::prelude::*;
        (0..samples as u64)
            .into_par_iter()
            .map(|i| {
                let tr = setup.triple(seeds, i);
                let fd = (setup.alpha_sample(&tr, beta, hi) - setup.alpha_sample(&tr, beta, lo)) / (2.0 * h);
                (setup.derivative_sample(&tr, beta, mid), fd)
            })
            .collect()
    };
    let d: Vec<f64> = pairs.iter().map(|x| x.0).collect();
    let f: Vec<f64> = pairs.iter().map(|x| x.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|x| x.1 - x.0).collect();
    let derivative = QuenchedEstimate::from_values(label("dalpha_dt", &setup.model, t), setup.n, beta, &d);
    let finite_difference =
        QuenchedEstimate::from_values(label("central_difference", &setup.model, t), setup.n, beta, &f);
    let (difference, combined_std_error) = if beta == 0.0 { (0.0, 0.0) } else { mean_and_se(&diff) };
    Ok(FiniteDifferenceReport {
        t,
        h,
        agree: difference.abs() <= 3.0 * combined_std_error,
        derivative,
        finite_difference,
        difference,
        combined_std_error,
        bias_scale: h * h,
        step_warning: h > MAX_RECOMMENDED_STEP,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Monotonicity {
    Nonnegative,
    Negative,
}

impl Monotonicity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Monotonicity::Nonnegative => "NONNEGATIVE",
            Monotonicity::Negative => "NEGATIVE",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub t: f64,
    pub estimate: QuenchedEstimate,
    pub verdict: Monotonicity,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityScan {
    pub points: Vec<ScanPoint>,
    pub verdict: Monotonicity,
}

/// Derivative estimates over a t grid (same draws at every t); NONNEGATIVE
/// when every value is at least −3 standard errors.
pub fn monotonicity_scan(
    m: &CovarianceModel,
    p: &CoordinatePartition,
    beta: f64,
    t_grid: &[f64],
    samples: usize,
    seeds: &SeedPolicy,
) -> Result<MonotonicityScan> {
    if t_grid.is_empty() {
        return Err(Error::validation("empty t grid"));
    }
    for &t in t_grid {
        InterpolationPoint::new(t)?;
    }
    let setup = InterpolationSetup::new(m, p)?;
    let points = t_grid
        .iter()
        .map(|&t| {
            let estimate = derivative_with(&setup, beta, t, samples, seeds)?;
            let verdict = if estimate.value >= -3.0 * estimate.std_error {
                Monotonicity::Nonnegative
            } else {
                Monotonicity::Negative
            };
            Ok(ScanPoint { t, estimate, verdict })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = if points.iter().all(|p| p.verdict == Monotonicity::Nonnegative) {
        Monotonicity::Nonnegative
    } else {
        Monotonicity::Negative
    };
    Ok(MonotonicityScan { points, verdict })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegralConsistency {
    pub grid_points: usize,
    /// Trapezoid integral of the derivative estimator over [0, 1].
    pub integral: f64,
    /// ᾱ_N − (N1/N)ᾱ_{N1} − (N2/N)ᾱ_{N2} on the same draws.
    pub margin: f64,
    pub difference: f64,
    pub combined_std_error: f64,
}

/// Integrates the derivative estimator with the trapezoid rule on a uniform
/// grid of `grid_points` nodes over [0, 1] and compares with the free-energy
/// margin. Both are computed per draw, so the error bar is that of the
/// per-draw difference.
pub fn integrated_derivative_check(
    m: &CovarianceModel,
    p: &CoordinatePartition,
    beta: f64,
    grid_points: usize,
    samples: usize,
    seeds: &SeedPolicy,
) -> Result<IntegralConsistency> {
    check_beta(beta)?;
    check_samples(samples)?;
    if grid_points < 2 {
        return Err(Error::validation("trapezoid rule needs at least 2 nodes"));
    }
    let setup = InterpolationSetup::new(m, p)?;
    let step = 1.0 / (grid_points - 1) as f64;
    let nodes: Vec<InterpolationPoint> = (0..grid_points)
        .map(|j| InterpolationPoint::new((j as f64 * step).min(1.0)))
        .collect::<Result<_>>()?;
    let (n, n1, n2) = (p.n(), p.n1(), p.n2());
    let rows: Vec<(f64, f64)> = {
        use rayon::prelude::*;
        (0..samples as u64)
            .into_par_iter()
            .map(|i| {
                let tr = setup.triple(seeds, i);
                let integral: f64 = nodes
                    .iter()
                    .enumerate()
                    .map(|(j, &pt)| {
                        let w = if j == 0 || j + 1 == grid_points { 0.5 } else { 1.0 };
                        w * step * setup.derivative_sample(&tr, beta, pt)
                    })
                    .sum();
                let lz = log_partition_energies(n, &tr.full, beta).unwrap();
                let lz1 = log_partition_energies(n1, &tr.first_block, beta).unwrap();
                let lz2 = log_partition_energies(n2, &tr.second_block, beta).unwrap();
                (integral, (lz - lz1 - lz2) / n as f64)
            })
            .collect()
    };
    let ints: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let margins: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let diffs: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    let (difference, combined_std_error) = mean_and_se(&diffs);
    Ok(IntegralConsistency {
        grid_points,
        integral: mean_and_se(&ints).0,
        margin: mean_and_se(&margins).0,
        difference,
        combined_std_error,
    })
}

/// Projection helper used by reports: the block sub-configurations of σ.
pub fn split(p: &CoordinatePartition, sigma: &SpinConfig) -> Result<(SpinConfig, SpinConfig)> {
    Ok((
        crate::spin::project(sigma, p, Block::First)?,
        crate::spin::project(sigma, p, Block::Second)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermo::log_partition;
    use crate::disorder::DisorderDraw;

    fn setup_sk(n: usize, n1: usize) -> (CovarianceModel, CoordinatePartition) {
        (
            CovarianceModel::sk(n).unwrap(),
            CoordinatePartition::prefix(n, n1).unwrap(),
        )
    }

    #[test]
    fn hamiltonian_endpoints() {
        let (m, p) = setup_sk(4, 2);
        let s = InterpolationSetup::new(&m, &p).unwrap();
        let tr = s.triple(&SeedPolicy::new(1), 0);
        let one = InterpolationPoint::new(1.0).unwrap();
        let zero = InterpolationPoint::new(0.0).unwrap();
        for b in 0..16u64 {
            let sigma = SpinConfig::new(4, b).unwrap();
            let h1 = interp_hamiltonian(&tr, &sigma, one).unwrap();
            assert!((h1 + 2.0 * tr.full[b as usize]).abs() < 1e-14);
            let h0 = interp_hamiltonian(&tr, &sigma, zero).unwrap();
            let (s1, s2) = split(&p, &sigma).unwrap();
            let expect = -(2f64.sqrt() * tr.first_block[s1.index()]
                + 2f64.sqrt() * tr.second_block[s2.index()]);
            assert!((h0 - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_energies_give_zero_hamiltonian() {
        let p = CoordinatePartition::prefix(3, 1).unwrap();
        let tr = Triple {
            partition: p,
            full: vec![0.0; 8],
            first: vec![0.0; 8],
            second: vec![0.0; 8],
            first_block: vec![0.0; 2],
            second_block: vec![0.0; 4],
        };
        for t in [0.0, 0.3, 1.0] {
            let pt = InterpolationPoint::new(t).unwrap();
            for b in 0..8 {
                let h = interp_hamiltonian(&tr, &SpinConfig::new(3, b).unwrap(), pt).unwrap();
                assert_eq!(h, 0.0);
            }
        }
    }

    #[test]
    fn boundary_identities() {
        let (m, p) = setup_sk(5, 2);
        let s = InterpolationSetup::new(&m, &p).unwrap();
        let seeds = SeedPolicy::new(4);
        for i in 0..20 {
            let tr = s.triple(&seeds, i);
            let beta = 1.3;
            let full = DisorderDraw::new(5, tr.full.clone()).unwrap();
            let d1 = DisorderDraw::new(2, tr.first_block.clone()).unwrap();
            let d2 = DisorderDraw::new(3, tr.second_block.clone()).unwrap();
            let at1 = log_partition_t(&tr, beta, InterpolationPoint::new(1.0).unwrap()).unwrap();
            let at0 = log_partition_t(&tr, beta, InterpolationPoint::new(0.0).unwrap()).unwrap();
            assert!((at1 - log_partition(&full, beta).unwrap()).abs() < 1e-10);
            let split = log_partition(&d1, beta).unwrap() + log_partition(&d2, beta).unwrap();
            assert!((at0 - split).abs() < 1e-10);
            let mid = log_partition_t(&tr, 0.0, InterpolationPoint::new(0.4).unwrap()).unwrap();
            assert_eq!(mid, 5.0 * std::f64::consts::LN_2);
        }
    }

    #[test]
    fn replica_weights_normalized() {
        let (m, p) = setup_sk(4, 1);
        let s = InterpolationSetup::new(&m, &p).unwrap();
        let tr = s.triple(&SeedPolicy::new(8), 3);
        let g = TwoReplicaGibbs::new(&tr, 2.0, InterpolationPoint::new(0.7).unwrap()).unwrap();
        let total: f64 = (0..16).flat_map(|a| (0..16).map(move |b| (a, b))).map(|(a, b)| g.pair_weight(a, b)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(g.weights().iter().all(|&w| w >= 0.0));
        let ones = vec![1.0; 256];
        assert!((g.expect_table(&ones) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_zero_at_zero_beta_and_for_linear_model() {
        let (m, p) = setup_sk(4, 2);
        let e = derivative_estimator(&m, &p, 0.0, 0.5, 10, &SeedPolicy::new(0)).unwrap();
        assert_eq!((e.value, e.std_error), (0.0, 0.0));
        let lin = CovarianceModel::pspin(1, 4).unwrap();
        let e = derivative_estimator(&lin, &p, 1.5, 0.3, 200, &SeedPolicy::new(0)).unwrap();
        assert!(e.value.abs() <= 3.0 * e.std_error + 1e-15, "{e:?}");
    }

    #[test]
    fn argument_validation() {
        let (m, p) = setup_sk(4, 2);
        assert!(InterpolationPoint::new(1.1).is_err());
        assert!(finite_difference_check(&m, &p, 1.0, 0.05, 0.05, 10, &SeedPolicy::new(0)).is_err());
        let r = finite_difference_check(&m, &p, 1.0, 0.5, 0.2, 10, &SeedPolicy::new(0)).unwrap();
        assert!(r.step_warning);
        let big = CovarianceModel::sk(INTERPOLATION_CAP + 1).unwrap();
        let q = CoordinatePartition::prefix(INTERPOLATION_CAP + 1, 2).unwrap();
        assert!(matches!(InterpolationSetup::new(&big, &q), Err(Error::Resource { .. })));
    }
}
