//! Log-partition functions and Monte Carlo quenched free energies.
//!
//! Configuration sums are exact enumerations; only the disorder average is
//! sampled. The Gibbs weight is exp(β√N E_σ) throughout.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::disorder::{DisorderDraw, Sampler, SamplingMethod, SeedPolicy};
use crate::error::{Error, Result};
use crate::models::{CovarianceModel, ModelKind};
use crate::spin::CoordinatePartition;
use crate::stats::{combine_se, mean_and_se};

/// Monte Carlo estimate of a disorder average, with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuenchedEstimate {
    pub label: String,
    pub n: usize,
    pub beta: f64,
    pub samples: usize,
    pub value: f64,
    pub std_error: f64,
}

impl QuenchedEstimate {
    pub(crate) fn from_values(label: impl Into<String>, n: usize, beta: f64, values: &[f64]) -> Self {
        let (value, std_error) = mean_and_se(values);
        QuenchedEstimate {
            label: label.into(),
            n,
            beta,
            samples: values.len(),
            value,
            std_error,
        }
    }

    pub(crate) fn exact(label: impl Into<String>, n: usize, beta: f64, samples: usize, value: f64) -> Self {
        QuenchedEstimate {
            label: label.into(),
            n,
            beta,
            samples,
            value,
            std_error: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Comparison {
    Satisfied,
    Violated,
}

impl Comparison {
    pub fn as_str(&self) -> &'static str {
        match self {
            Comparison::Satisfied => "SATISFIED",
            Comparison::Violated => "VIOLATED",
        }
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::validation(format!(
            "inverse temperature must be finite and nonnegative, got {beta}"
        )));
    }
    Ok(())
}

pub(crate) fn check_samples(samples: usize) -> Result<()> {
    if samples < 2 {
        return Err(Error::validation(format!(
            "at least 2 samples are needed for an error bar, got {samples}"
        )));
    }
    Ok(())
}

/// ln Σ exp(x_i), shifted by the maximum.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

/// ln Z = ln Σ_σ exp(β√N E_σ).
pub fn log_partition(draw: &DisorderDraw, beta: f64) -> Result<f64> {
    log_partition_energies(draw.n(), draw.energies(), beta)
}

pub(crate) fn log_partition_energies(n: usize, energies: &[f64], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if let Some(i) = energies.iter().position(|e| !e.is_finite()) {
        return Err(Error::validation(format!(
            "energy {i} is not finite ({})",
            energies[i]
        )));
    }
    if beta == 0.0 {
        return Ok(n as f64 * LN_2);
    }
    let s = beta * (n as f64).sqrt();
    let xs: Vec<f64> = energies.iter().map(|e| s * e).collect();
    Ok(log_sum_exp(&xs))
}

/// Evaluates `f(i)` for every draw index concurrently and returns the values
/// in index order, so later reductions do not depend on scheduling.
pub(crate) fn per_draw<F>(samples: usize, f: F) -> Vec<f64>
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    (0..samples as u64).into_par_iter().map(f).collect()
}

/// (1/N) Av ln Z_N(β), sampling with the model's default method.
pub fn quenched_alpha(
    m: &CovarianceModel,
    beta: f64,
    samples: usize,
    seeds: &SeedPolicy,
) -> Result<QuenchedEstimate> {
    quenched_alpha_with(m, beta, samples, seeds, SamplingMethod::Auto)
}

pub fn quenched_alpha_with(
    m: &CovarianceModel,
    beta: f64,
    samples: usize,
    seeds: &SeedPolicy,
    method: SamplingMethod,
) -> Result<QuenchedEstimate> {
    check_beta(beta)?;
    check_samples(samples)?;
    crate::spin::check_enumerable(m.n())?;
    let label = format!("alpha[{}]", m.id());
    if beta == 0.0 {
        return Ok(QuenchedEstimate::exact(label, m.n(), beta, samples, LN_2));
    }
    let sampler = Sampler::new(m, method)?;
    let n = m.n();
    let values = per_draw(samples, |i| {
        let e = sampler.energies(&mut seeds.rng(i));
        log_partition_energies(n, &e, beta).expect("Gaussian energies are finite") / n as f64
    });
    Ok(QuenchedEstimate::from_values(label, n, beta, &values))
}

/// ln 2 + β²/2, the annealed upper bound on α_N(β).
pub fn jensen_bound(beta: f64) -> f64 {
    LN_2 + beta * beta / 2.0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuperadditivityReport {
    pub model: String,
    pub partition_mask: u64,
    pub full: QuenchedEstimate,
    pub first: QuenchedEstimate,
    pub second: QuenchedEstimate,
    /// α_N − (N1/N)α_{N1} − (N2/N)α_{N2}
    pub margin: f64,
    pub margin_std_error: f64,
    pub verdict: Comparison,
}

/// Estimates the three free energies from independent streams and compares
/// them; SATISFIED when the margin is at least −3 standard errors.
pub fn superadditivity_report(
    m: &CovarianceModel,
    p: &CoordinatePartition,
    beta: f64,
    samples: usize,
    seeds: &SeedPolicy,
) -> Result<SuperadditivityReport> {
    use crate::spin::Block;
    Error::check_dim(m.n(), p.n())?;
    let m1 = m.block_model(p, Block::First)?;
    let m2 = m.block_model(p, Block::Second)?;
    let full = quenched_alpha(m, beta, samples, &seeds.fork("full"))?;
    let first = quenched_alpha(&m1, beta, samples, &seeds.fork("block1"))?;
    let second = quenched_alpha(&m2, beta, samples, &seeds.fork("block2"))?;
    let (n, n1, n2) = (p.n() as f64, p.n1() as f64, p.n2() as f64);
    let (margin, margin_std_error) = if beta == 0.0 {
        (0.0, 0.0)
    } else {
        (
            full.value - n1 / n * first.value - n2 / n * second.value,
            combine_se(&[
                full.std_error,
                n1 / n * first.std_error,
                n2 / n * second.std_error,
            ]),
        )
    };
    let verdict = if margin >= -3.0 * margin_std_error {
        Comparison::Satisfied
    } else {
        Comparison::Violated
    };
    Ok(SuperadditivityReport {
        model: m.id(),
        partition_mask: p.mask(),
        full,
        first,
        second,
        margin,
        margin_std_error,
        verdict,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RescalingReport {
    /// α^SK_N(√2 β) from the i<j model.
    pub standard: QuenchedEstimate,
    /// α_N(β) from the full i,j model.
    pub full: QuenchedEstimate,
    pub difference: f64,
    pub combined_std_error: f64,
    pub verdict: Comparison,
}

/// Compares the standard SK model at √2 β with the full model at β.
pub fn sk_rescaling_check(
    n: usize,
    beta: f64,
    samples: usize,
    seeds: &SeedPolicy,
) -> Result<RescalingReport> {
    if n < 2 {
        return Err(Error::validation("the rescaling check needs n >= 2"));
    }
    let standard_model = CovarianceModel::new(ModelKind::SkStandard, n)?;
    let full_model = CovarianceModel::sk(n)?;
    let standard = quenched_alpha_with(
        &standard_model,
        std::f64::consts::SQRT_2 * beta,
        samples,
        &seeds.fork("sk-standard"),
        SamplingMethod::Structural,
    )?;
    let full = quenched_alpha(&full_model, beta, samples, &seeds.fork("sk-full"))?;
    let difference = if beta == 0.0 { 0.0 } else { standard.value - full.value };
    let combined_std_error = combine_se(&[standard.std_error, full.std_error]);
    let verdict = if difference.abs() <= 3.0 * combined_std_error {
        Comparison::Satisfied
    } else {
        Comparison::Violated
    };
    Ok(RescalingReport {
        standard,
        full,
        difference,
        combined_std_error,
        verdict,
    })
}
