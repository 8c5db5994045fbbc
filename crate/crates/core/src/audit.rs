//! Exhaustive check of the superadditivity condition on the covariance,
//!
//!   c_N(σ,τ) − (N1/N) c_{N1}(π1σ, π1τ) − (N2/N) c_{N2}(π2σ, π2τ) ≤ 0,
//!
//! over every ordered pair and a family of partitions, plus PSD validation.

use std::fmt;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::models::{CovarianceModel, ModelKind};
use crate::spin::{
    enumerate_partitions, overlap_bits, Block, CoordinatePartition, PartitionMode, SpinConfig,
};

pub use crate::linalg::{validate_psd, PsdReport};

/// Largest n audited exhaustively (4^n pairs per partition).
pub const AUDIT_CAP: usize = 10;
/// Gap tolerance for models with exact or well-conditioned float arithmetic.
pub const EXACT_TOL: f64 = 1e-12;
/// Gap tolerance for user-supplied float matrices.
pub const CUSTOM_TOL: f64 = 1e-9;

pub fn default_tolerance(m: &CovarianceModel) -> f64 {
    match m.kind() {
        ModelKind::Custom(_) => CUSTOM_TOL,
        _ => EXACT_TOL,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    /// Every gap is within tolerance of zero.
    HoldsWithEquality,
    /// max gap ≤ tolerance, with some gap strictly negative.
    Holds,
    /// Some gap exceeds the tolerance.
    Violated,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::HoldsWithEquality => "HOLDS_WITH_EQUALITY",
            Verdict::Holds => "HOLDS",
            Verdict::Violated => "VIOLATED",
        }
    }

    pub fn holds(&self) -> bool {
        !matches!(self, Verdict::Violated)
    }

    fn severity(&self) -> u8 {
        match self {
            Verdict::HoldsWithEquality => 0,
            Verdict::Holds => 1,
            Verdict::Violated => 2,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Evaluates gaps for one model and one partition. For rules that depend on
/// a pair only through its overlap the gap is tabulated over the pair of
/// block overlaps, so each pair costs two popcounts.
pub struct GapEvaluator {
    model: CovarianceModel,
    first: CovarianceModel,
    second: CovarianceModel,
    partition: CoordinatePartition,
    table: Option<Vec<f64>>,
    exact_table: Option<Vec<Ratio<i128>>>,
}

impl GapEvaluator {
    pub fn new(m: &CovarianceModel, p: &CoordinatePartition) -> Result<Self> {
        Error::check_dim(m.n(), p.n())?;
        let first = m.block_model(p, Block::First)?;
        let second = m.block_model(p, Block::Second)?;
        let (n, n1, n2) = (p.n(), p.n1(), p.n2());
        let (mut table, mut exact_table) = (None, None);
        if m.is_overlap_function() {
            let mut t = Vec::with_capacity((n1 + 1) * (n2 + 1));
            let mut ex = Vec::with_capacity((n1 + 1) * (n2 + 1));
            let mut exact_ok = true;
            for i1 in 0..=n1 {
                let a1 = 2 * i1 as i64 - n1 as i64;
                for i2 in 0..=n2 {
                    let a2 = 2 * i2 as i64 - n2 as i64;
                    let c = m.covariance_of_overlap(a1 + a2);
                    let c1 = first.covariance_of_overlap(a1);
                    let c2 = second.covariance_of_overlap(a2);
                    t.push(c - n1 as f64 / n as f64 * c1 - n2 as f64 / n as f64 * c2);
                    if exact_ok {
                        match (
                            m.exact_covariance_of_overlap(a1 + a2),
                            first.exact_covariance_of_overlap(a1),
                            second.exact_covariance_of_overlap(a2),
                        ) {
                            (Some(c), Some(c1), Some(c2)) => {
                                let w1 = Ratio::new(n1 as i128, n as i128);
                                let w2 = Ratio::new(n2 as i128, n as i128);
                                ex.push(c - w1 * c1 - w2 * c2);
                            }
                            _ => exact_ok = false,
                        }
                    }
                }
            }
            table = Some(t);
            if exact_ok {
                exact_table = Some(ex);
            }
        }
        Ok(GapEvaluator {
            model: m.clone(),
            first,
            second,
            partition: *p,
            table,
            exact_table,
        })
    }

    pub fn partition(&self) -> &CoordinatePartition {
        &self.partition
    }

    pub fn is_exact(&self) -> bool {
        self.exact_table.is_some()
    }

    #[inline]
    fn table_index(&self, a: u64, b: u64) -> usize {
        let p = &self.partition;
        let d1 = (p.block_mask(Block::First) & (a ^ b)).count_ones() as usize;
        let d2 = (p.block_mask(Block::Second) & (a ^ b)).count_ones() as usize;
        // agreements index the table: i_k = n_k − d_k
        (p.n1() - d1) * (p.n2() + 1) + (p.n2() - d2)
    }

    #[inline]
    pub fn gap_bits(&self, a: u64, b: u64) -> f64 {
        if let Some(t) = &self.table {
            return t[self.table_index(a, b)];
        }
        let p = &self.partition;
        let (n, n1, n2) = (p.n() as f64, p.n1() as f64, p.n2() as f64);
        let c = self.model.covariance_bits(a, b);
        let c1 = self.first.covariance_bits(
            p.project_bits(a, Block::First),
            p.project_bits(b, Block::First),
        );
        let c2 = self.second.covariance_bits(
            p.project_bits(a, Block::Second),
            p.project_bits(b, Block::Second),
        );
        c - n1 / n * c1 - n2 / n * c2
    }

    #[inline]
    pub fn exact_gap_bits(&self, a: u64, b: u64) -> Option<Ratio<i128>> {
        self.exact_table.as_ref().map(|t| t[self.table_index(a, b)])
    }

    /// Dense 2^n × 2^n table of gaps, row-major by σ.
    pub fn matrix(&self) -> Vec<f64> {
        let size = 1u64 << self.partition.n();
        (0..size)
            .flat_map(|a| (0..size).map(move |b| (a, b)))
            .map(|(a, b)| self.gap_bits(a, b))
            .collect()
    }
}

/// The gap at a single pair.
pub fn condition_gap(
    m: &CovarianceModel,
    p: &CoordinatePartition,
    sigma: &SpinConfig,
    tau: &SpinConfig,
) -> Result<f64> {
    Error::check_dim(m.n(), sigma.n())?;
    Error::check_dim(m.n(), tau.n())?;
    Ok(GapEvaluator::new(m, p)?.gap_bits(sigma.bits(), tau.bits()))
}

/// Exact rational gap when the rule has rational covariances.
pub fn exact_condition_gap(
    m: &CovarianceModel,
    p: &CoordinatePartition,
    sigma: &SpinConfig,
    tau: &SpinConfig,
) -> Result<Option<Ratio<i128>>> {
    Error::check_dim(m.n(), sigma.n())?;
    Error::check_dim(m.n(), tau.n())?;
    Ok(GapEvaluator::new(m, p)?.exact_gap_bits(sigma.bits(), tau.bits()))
}

fn ser_ratio<S: Serializer>(r: &Option<Ratio<i128>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_str(&r.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub n: usize,
    pub partition: CoordinatePartition,
    pub max_gap: f64,
    pub min_gap: f64,
    #[serde(serialize_with = "ser_ratio")]
    pub exact_max_gap: Option<Ratio<i128>>,
    #[serde(serialize_with = "ser_ratio")]
    pub exact_min_gap: Option<Ratio<i128>>,
    /// First pair (σ-major order) attaining `max_gap`.
    pub witness: (SpinConfig, SpinConfig),
    pub pairs_checked: u64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub model: String,
    pub n: usize,
    pub tolerance: f64,
    pub partitions: Vec<ConditionReport>,
    pub verdict: Verdict,
}

impl AuditReport {
    /// The partition report with the largest gap (first on ties).
    pub fn worst(&self) -> &ConditionReport {
        self.partitions
            .iter()
            .fold(&self.partitions[0], |w, r| if r.max_gap > w.max_gap { r } else { w })
    }
}

#[derive(Clone, Copy)]
struct RowSummary {
    max: f64,
    max_at: u64,
    min: f64,
    exact_max: Option<(Ratio<i128>, u64)>,
    exact_min: Option<Ratio<i128>>,
}

fn scan_row(ev: &GapEvaluator, a: u64, size: u64) -> RowSummary {
    let mut s = RowSummary {
        max: f64::NEG_INFINITY,
        max_at: 0,
        min: f64::INFINITY,
        exact_max: None,
        exact_min: None,
    };
    for b in 0..size {
        if let Some(g) = ev.exact_gap_bits(a, b) {
            match s.exact_max {
                Some((m, _)) if g <= m => {}
                _ => s.exact_max = Some((g, b)),
            }
            match s.exact_min {
                Some(m) if g >= m => {}
                _ => s.exact_min = Some(g),
            }
        }
        let g = ev.gap_bits(a, b);
        if g > s.max {
            s.max = g;
            s.max_at = b;
        }
        s.min = s.min.min(g);
    }
    s
}

fn ratio_to_f64(r: &Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Evaluates the gap over all 4^n ordered pairs for one partition.
pub fn check_partition(
    m: &CovarianceModel,
    p: &CoordinatePartition,
    tolerance: f64,
) -> Result<ConditionReport> {
    let n = m.n();
    if n > AUDIT_CAP {
        return Err(Error::Resource {
            what: "n",
            value: n,
            cap: AUDIT_CAP,
        });
    }
    let ev = GapEvaluator::new(m, p)?;
    let size = 1u64 << n;
    let rows: Vec<RowSummary> = (0..size)
        .into_par_iter()
        .map(|a| scan_row(&ev, a, size))
        .collect();

    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    let mut witness = (0u64, 0u64);
    let mut exact_max: Option<(Ratio<i128>, u64, u64)> = None;
    let mut exact_min: Option<Ratio<i128>> = None;
    for (a, r) in rows.iter().enumerate() {
        if r.max > max {
            max = r.max;
            witness = (a as u64, r.max_at);
        }
        min = min.min(r.min);
        if let Some((g, b)) = r.exact_max {
            match exact_max {
                Some((m, _, _)) if g <= m => {}
                _ => exact_max = Some((g, a as u64, b)),
            }
        }
        if let Some(g) = r.exact_min {
            match exact_min {
                Some(m) if g >= m => {}
                _ => exact_min = Some(g),
            }
        }
    }

    let verdict = match (&exact_max, &exact_min) {
        (Some((emax, a, b)), Some(emin)) => {
            // exact arithmetic: report the exact witness and values
            max = ratio_to_f64(emax);
            min = ratio_to_f64(emin);
            witness = (*a, *b);
            if max > tolerance {
                Verdict::Violated
            } else if *emax == Ratio::from_integer(0) && *emin == Ratio::from_integer(0) {
                Verdict::HoldsWithEquality
            } else {
                Verdict::Holds
            }
        }
        _ => {
            if max > tolerance {
                Verdict::Violated
            } else if min >= -tolerance {
                Verdict::HoldsWithEquality
            } else {
                Verdict::Holds
            }
        }
    };

    Ok(ConditionReport {
        n,
        partition: *p,
        max_gap: max,
        min_gap: min,
        exact_max_gap: exact_max.map(|e| e.0),
        exact_min_gap: exact_min,
        witness: (
            SpinConfig::new(n, witness.0)?,
            SpinConfig::new(n, witness.1)?,
        ),
        pairs_checked: size * size,
        tolerance,
        verdict,
    })
}

/// Audits an explicit list of partitions; the global verdict is the worst.
pub fn check_partitions(
    m: &CovarianceModel,
    partitions: &[CoordinatePartition],
    tolerance: f64,
) -> Result<AuditReport> {
    if partitions.is_empty() {
        return Err(Error::validation("no partitions to audit"));
    }
    let reports = partitions
        .iter()
        .map(|p| check_partition(m, p, tolerance))
        .collect::<Result<Vec<_>>>()?;
    let verdict = reports
        .iter()
        .map(|r| r.verdict)
        .max_by_key(Verdict::severity)
        .expect("nonempty");
    Ok(AuditReport {
        model: m.id(),
        n: m.n(),
        tolerance,
        partitions: reports,
        verdict,
    })
}

pub fn check_condition(
    m: &CovarianceModel,
    mode: PartitionMode,
    tolerance: f64,
) -> Result<AuditReport> {
    if m.n() > AUDIT_CAP {
        return Err(Error::Resource {
            what: "n",
            value: m.n(),
            cap: AUDIT_CAP,
        });
    }
    let parts = enumerate_partitions(m.n(), mode)?;
    check_partitions(m, &parts, tolerance)
}

/// Overlap of a pair as an exact ratio, re-exported for reports.
pub fn pair_overlap(n: usize, a: u64, b: u64) -> Ratio<i128> {
    overlap_bits(n, a, b).to_ratio()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grem::GremTree;
    use crate::models::{CustomCovariance, MixedCoefficients};
    use crate::linalg::SymMatrix;

    fn cfg(s: &str) -> SpinConfig {
        s.parse().unwrap()
    }

    #[test]
    fn rem_witness_gap_is_minus_half() {
        let m = CovarianceModel::rem(2).unwrap();
        let p = CoordinatePartition::new(2, 0b01).unwrap();
        let g = exact_condition_gap(&m, &p, &cfg("++"), &cfg("+-")).unwrap().unwrap();
        assert_eq!(g, Ratio::new(-1, 2));
        assert_eq!(condition_gap(&m, &p, &cfg("++"), &cfg("+-")).unwrap(), -0.5);
    }

    #[test]
    fn pspin3_positive_gap() {
        let m = CovarianceModel::pspin(3, 3).unwrap();
        let p = CoordinatePartition::new(3, 0b001).unwrap();
        let g = exact_condition_gap(&m, &p, &cfg("+++"), &cfg("+--")).unwrap().unwrap();
        assert_eq!(g, Ratio::new(8, 27));
    }

    #[test]
    fn linear_model_gap_vanishes() {
        for n in 2..=6 {
            let m = CovarianceModel::pspin(1, n).unwrap();
            let r = check_condition(&m, PartitionMode::All, 0.0).unwrap();
            assert_eq!(r.verdict, Verdict::HoldsWithEquality);
        }
    }

    #[test]
    fn gap_symmetric_under_swap() {
        let models = [
            CovarianceModel::pspin(3, 4).unwrap(),
            CovarianceModel::grem(GremTree::new(&[2, 2], &[0.3, 0.7]).unwrap()).unwrap(),
        ];
        for m in &models {
            let p = CoordinatePartition::new(4, 0b0110).unwrap();
            let ev = GapEvaluator::new(m, &p).unwrap();
            for a in 0..16 {
                for b in 0..16 {
                    assert_eq!(ev.gap_bits(a, b), ev.gap_bits(b, a));
                }
            }
        }
    }

    #[test]
    fn table_matches_direct_evaluation() {
        let w = MixedCoefficients::new([(1, 0.25), (2, 0.25), (3, 0.5)]).unwrap();
        let m = CovarianceModel::mixed(w, 5).unwrap();
        let p = CoordinatePartition::new(5, 0b10110).unwrap();
        let ev = GapEvaluator::new(&m, &p).unwrap();
        let m1 = m.block_model(&p, Block::First).unwrap();
        let m2 = m.block_model(&p, Block::Second).unwrap();
        for a in 0..32u64 {
            for b in 0..32u64 {
                let direct = m.covariance_bits(a, b)
                    - 3.0 / 5.0
                        * m1.covariance_bits(
                            p.project_bits(a, Block::First),
                            p.project_bits(b, Block::First),
                        )
                    - 2.0 / 5.0
                        * m2.covariance_bits(
                            p.project_bits(a, Block::Second),
                            p.project_bits(b, Block::Second),
                        );
                assert!((ev.gap_bits(a, b) - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn witness_reproduces_max_gap() {
        let m = CovarianceModel::pspin(3, 4).unwrap();
        let r = check_condition(&m, PartitionMode::Canonical, EXACT_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        for pr in &r.partitions {
            let g = condition_gap(&m, &pr.partition, &pr.witness.0, &pr.witness.1).unwrap();
            assert!((g - pr.max_gap).abs() < 1e-15);
        }
    }

    #[test]
    fn custom_requires_sub_matrices() {
        let mut c = CustomCovariance::new();
        c.insert(SymMatrix::identity(8)).unwrap();
        let m = CovarianceModel::new(ModelKind::Custom(c.clone()), 3).unwrap();
        let p = CoordinatePartition::prefix(3, 1).unwrap();
        assert!(matches!(
            condition_gap(&m, &p, &cfg("+++"), &cfg("++-")),
            Err(Error::MissingData(_))
        ));
        // REM matrices at all three sizes behave like REM
        c.insert(SymMatrix::identity(2)).unwrap();
        c.insert(SymMatrix::identity(4)).unwrap();
        let m = CovarianceModel::new(ModelKind::Custom(c), 3).unwrap();
        assert_eq!(default_tolerance(&m), CUSTOM_TOL);
        let r = check_condition(&m, PartitionMode::All, CUSTOM_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
    }

    #[test]
    fn cap_enforced() {
        let m = CovarianceModel::sk(AUDIT_CAP + 1).unwrap();
        assert!(matches!(
            check_condition(&m, PartitionMode::Canonical, EXACT_TOL),
            Err(Error::Resource { .. })
        ));
    }
}
