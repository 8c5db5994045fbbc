//! C ABI over `cgrem`.
//!
//! Models are opaque `CgremModel` handles created by `cgrem_model_parse`
//! and released with `cgrem_model_free`. Every fallible call returns a
//! `CgremStatus`; on failure `cgrem_last_error` gives a message that stays
//! valid until the next call on the same thread. Spin configurations cross
//! the boundary as bit words: bit i set means coordinate i+1 is +1.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cgrem::audit::{self, Verdict};
use cgrem::disorder::SeedPolicy;
use cgrem::spin::{self, PartitionMode};
use cgrem::{interp, thermo, CoordinatePartition, CovarianceModel, Error, SpinConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgremStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Resource = 4,
    MissingData = 5,
    Unsupported = 6,
    Parse = 7,
    Io = 8,
    Panic = 9,
}

/// Outcome of a condition audit.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgremVerdict {
    HoldsWithEquality = 0,
    Holds = 1,
    Violated = 2,
}

impl From<Verdict> for CgremVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::HoldsWithEquality => CgremVerdict::HoldsWithEquality,
            Verdict::Holds => CgremVerdict::Holds,
            Verdict::Violated => CgremVerdict::Violated,
        }
    }
}

/// Summary of one partition audit.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CgremConditionResult {
    pub max_gap: f64,
    pub min_gap: f64,
    pub witness_sigma: u64,
    pub witness_tau: u64,
    pub pairs_checked: u64,
    pub verdict: CgremVerdict,
}

/// A Monte Carlo estimate and its standard error.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct CgremEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Opaque covariance model.
pub struct CgremModel {
    inner: CovarianceModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CgremStatus {
    match e {
        Error::Dimension { .. } => CgremStatus::Dimension,
        Error::Resource { .. } => CgremStatus::Resource,
        Error::Validation(_) => CgremStatus::InvalidArgument,
        Error::MissingData(_) => CgremStatus::MissingData,
        Error::Unsupported(_) => CgremStatus::Unsupported,
        Error::Parse { .. } => CgremStatus::Parse,
        Error::Io(_) => CgremStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CgremStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CgremStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            CgremStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            CgremStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(m: *const CgremModel) -> Result<&'a CovarianceModel, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or(Fail::Null("model"))
}

unsafe fn write<T>(out: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    out.write(v);
    Ok(())
}

fn config(n: usize, bits: u64) -> Result<SpinConfig, Fail> {
    Ok(SpinConfig::new(n, bits)?)
}

/// Message for the most recent failure on this thread; empty if none.
#[no_mangle]
pub extern "C" fn cgrem_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cgrem_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a model rule such as `sk`, `pspin:3` or `mixed:2=0.5,4=0.5`.
/// `n = 0` takes the size from GREM tree or custom matrix files.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cgrem_model_parse(
    spec: *const c_char,
    n: usize,
    out: *mut *mut CgremModel,
) -> CgremStatus {
    guard(|| {
        if spec.is_null() {
            return Err(Fail::Null("spec"));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let s = CStr::from_ptr(spec)
            .to_str()
            .map_err(|_| Error::Validation("model spec is not UTF-8".into()))?;
        let inner = cgrem::cli::parse_model(s, (n > 0).then_some(n))?;
        out.write(Box::into_raw(Box::new(CgremModel { inner })));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from `cgrem_model_parse` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cgrem_model_free(model: *mut CgremModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgrem_model_n(model: *const CgremModel, out: *mut usize) -> CgremStatus {
    guard(|| write(out, model_ref(model)?.n(), "out"))
}

/// Overlap of two configurations of `n` spins.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgrem_overlap(n: usize, sigma: u64, tau: u64, out: *mut f64) -> CgremStatus {
    guard(|| {
        let q = spin::overlap(&config(n, sigma)?, &config(n, tau)?)?;
        write(out, q.to_f64(), "out")
    })
}

/// Covariance of the energies at two configurations.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgrem_covariance(
    model: *const CgremModel,
    sigma: u64,
    tau: u64,
    out: *mut f64,
) -> CgremStatus {
    guard(|| {
        let m = model_ref(model)?;
        let c = m.covariance(&config(m.n(), sigma)?, &config(m.n(), tau)?)?;
        write(out, c, "out")
    })
}

/// Superadditivity gap at one pair for the partition whose first block is
/// `mask`. Nonpositive gaps satisfy the condition.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgrem_condition_gap(
    model: *const CgremModel,
    mask: u64,
    sigma: u64,
    tau: u64,
    out: *mut f64,
) -> CgremStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = CoordinatePartition::new(m.n(), mask)?;
        let g = audit::condition_gap(m, &p, &config(m.n(), sigma)?, &config(m.n(), tau)?)?;
        write(out, g, "out")
    })
}

/// Exhaustive audit of one partition. A negative tolerance selects the
/// model's default.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgrem_check_partition(
    model: *const CgremModel,
    mask: u64,
    tolerance: f64,
    out: *mut CgremConditionResult,
) -> CgremStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = CoordinatePartition::new(m.n(), mask)?;
        let tol = if tolerance < 0.0 { audit::default_tolerance(m) } else { tolerance };
        let r = audit::check_partition(m, &p, tol)?;
        write(
            out,
            CgremConditionResult {
                max_gap: r.max_gap,
                min_gap: r.min_gap,
                witness_sigma: r.witness.0.bits(),
                witness_tau: r.witness.1.bits(),
                pairs_checked: r.pairs_checked,
                verdict: r.verdict.into(),
            },
            "out",
        )
    })
}

/// Audit over all partitions (`all_partitions != 0`) or one per first-block
/// size. Writes the overall verdict and the largest gap found.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgrem_check_condition(
    model: *const CgremModel,
    all_partitions: i32,
    tolerance: f64,
    out_verdict: *mut CgremVerdict,
    out_max_gap: *mut f64,
) -> CgremStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out_verdict.is_null() || out_max_gap.is_null() {
            return Err(Fail::Null("out"));
        }
        let mode = if all_partitions != 0 { PartitionMode::All } else { PartitionMode::Canonical };
        let tol = if tolerance < 0.0 { audit::default_tolerance(m) } else { tolerance };
        let r = audit::check_condition(m, mode, tol)?;
        let max = r.partitions.iter().map(|p| p.max_gap).fold(f64::NEG_INFINITY, f64::max);
        out_verdict.write(r.verdict.into());
        out_max_gap.write(max);
        Ok(())
    })
}

/// Positive semidefiniteness of the 2^N covariance matrix.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgrem_check_psd(
    model: *const CgremModel,
    out_psd: *mut bool,
    out_min_eigenvalue: *mut f64,
) -> CgremStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out_psd.is_null() || out_min_eigenvalue.is_null() {
            return Err(Fail::Null("out"));
        }
        let r = cgrem::linalg::validate_psd(&m.build_covariance_matrix()?)?;
        out_psd.write(r.psd);
        out_min_eigenvalue.write(r.min_eigenvalue_estimate);
        Ok(())
    })
}

/// Quenched α_N(β) from `samples` draws under master `seed`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgrem_quenched_alpha(
    model: *const CgremModel,
    beta: f64,
    samples: usize,
    seed: u64,
    out: *mut CgremEstimate,
) -> CgremStatus {
    guard(|| {
        let m = model_ref(model)?;
        let e = thermo::quenched_alpha(m, beta, samples, &SeedPolicy::new(seed).fork("alpha"))?;
        write(out, CgremEstimate { value: e.value, std_error: e.std_error, samples: e.samples }, "out")
    })
}

/// Derivative of the interpolating free energy at `t` for the partition
/// whose first block is `mask`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgrem_interp_derivative(
    model: *const CgremModel,
    mask: u64,
    beta: f64,
    t: f64,
    samples: usize,
    seed: u64,
    out: *mut CgremEstimate,
) -> CgremStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = CoordinatePartition::new(m.n(), mask)?;
        let seeds = SeedPolicy::new(seed).fork("interp");
        let e = interp::derivative_estimator(m, &p, beta, t, samples, &seeds)?;
        write(out, CgremEstimate { value: e.value, std_error: e.std_error, samples: e.samples }, "out")
    })
}

/// ln 2 + β²/2.
#[no_mangle]
pub extern "C" fn cgrem_jensen_bound(beta: f64) -> f64 {
    thermo::jensen_bound(beta)
}

#[doc(hidden)]
pub fn last_error_string() -> String {
    unsafe { CStr::from_ptr(cgrem_last_error()) }.to_string_lossy().into_owned()
}
