use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use cgrem_ffi::*;

fn model(spec: &str, n: usize) -> *mut CgremModel {
    let s = CString::new(spec).unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { cgrem_model_parse(s.as_ptr(), n, &mut m) };
    assert_eq!(st, CgremStatus::Ok, "{}", last_error_string());
    m
}

#[test]
fn parse_and_query() {
    let m = model("pspin:3", 3);
    let mut n = 0usize;
    assert_eq!(unsafe { cgrem_model_n(m, &mut n) }, CgremStatus::Ok);
    assert_eq!(n, 3);
    let mut c = 0.0;
    // σ = (+,+,+), τ = (+,+,−): q = 1/3
    assert_eq!(unsafe { cgrem_covariance(m, 0b111, 0b011, &mut c) }, CgremStatus::Ok);
    assert!((c - 1.0 / 27.0).abs() < 1e-15);
    unsafe { cgrem_model_free(m) };
}

#[test]
fn overlap_example() {
    let mut q = 0.0;
    // (+,−,+) vs (+,+,−) has overlap −1/3
    assert_eq!(unsafe { cgrem_overlap(3, 0b101, 0b011, &mut q) }, CgremStatus::Ok);
    assert!((q + 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(unsafe { cgrem_overlap(3, 0b1000, 0, &mut q) }, CgremStatus::InvalidArgument);
}

#[test]
fn condition_audits() {
    let m = model("pspin:3", 3);
    let mut r = CgremConditionResult {
        max_gap: 0.0,
        min_gap: 0.0,
        witness_sigma: 0,
        witness_tau: 0,
        pairs_checked: 0,
        verdict: CgremVerdict::Holds,
    };
    assert_eq!(unsafe { cgrem_check_partition(m, 0b001, -1.0, &mut r) }, CgremStatus::Ok);
    assert_eq!(r.verdict, CgremVerdict::Violated);
    assert!((r.max_gap - 8.0 / 27.0).abs() < 1e-12);
    assert_eq!(r.pairs_checked, 64);
    let mut g = 0.0;
    assert_eq!(
        unsafe { cgrem_condition_gap(m, 0b001, r.witness_sigma, r.witness_tau, &mut g) },
        CgremStatus::Ok
    );
    assert_eq!(g, r.max_gap);
    unsafe { cgrem_model_free(m) };

    let sk = model("sk", 4);
    let (mut v, mut max) = (CgremVerdict::Violated, 1.0);
    assert_eq!(unsafe { cgrem_check_condition(sk, 1, -1.0, &mut v, &mut max) }, CgremStatus::Ok);
    assert_ne!(v, CgremVerdict::Violated);
    assert!(max <= 1e-12);
    let (mut psd, mut eig) = (false, -1.0);
    assert_eq!(unsafe { cgrem_check_psd(sk, &mut psd, &mut eig) }, CgremStatus::Ok);
    assert!(psd);
    unsafe { cgrem_model_free(sk) };
}

#[test]
fn estimates_are_reproducible() {
    let m = model("sk", 4);
    let mut a = CgremEstimate::default();
    let mut b = CgremEstimate::default();
    unsafe {
        assert_eq!(cgrem_quenched_alpha(m, 1.0, 200, 7, &mut a), CgremStatus::Ok);
        assert_eq!(cgrem_quenched_alpha(m, 1.0, 200, 7, &mut b), CgremStatus::Ok);
    }
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert!(a.value <= cgrem_jensen_bound(1.0) + 3.0 * a.std_error);
    let mut zero = CgremEstimate::default();
    unsafe { cgrem_quenched_alpha(m, 0.0, 10, 7, &mut zero) };
    assert_eq!(zero.value, std::f64::consts::LN_2);
    assert_eq!(zero.std_error, 0.0);
    let mut d = CgremEstimate::default();
    assert_eq!(unsafe { cgrem_interp_derivative(m, 0b0011, 1.0, 0.5, 200, 7, &mut d) }, CgremStatus::Ok);
    assert!(d.value > -3.0 * d.std_error);
    assert_eq!(
        unsafe { cgrem_interp_derivative(m, 0b0011, 1.0, 1.5, 200, 7, &mut d) },
        CgremStatus::InvalidArgument
    );
    unsafe { cgrem_model_free(m) };
}

#[test]
fn error_codes_and_messages() {
    let mut m = ptr::null_mut();
    let bad = CString::new("mixed:2=0.5").unwrap();
    assert_eq!(unsafe { cgrem_model_parse(bad.as_ptr(), 3, &mut m) }, CgremStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(last_error_string().contains("sum to 1"));
    let bad = CString::new("pspin:x").unwrap();
    assert_eq!(unsafe { cgrem_model_parse(bad.as_ptr(), 3, &mut m) }, CgremStatus::Parse);
    assert_eq!(unsafe { cgrem_model_parse(ptr::null(), 3, &mut m) }, CgremStatus::NullPointer);
    let mut n = 0usize;
    assert_eq!(unsafe { cgrem_model_n(ptr::null(), &mut n) }, CgremStatus::NullPointer);
    let big = CString::new("sk").unwrap();
    assert_eq!(unsafe { cgrem_model_parse(big.as_ptr(), 65, &mut m) }, CgremStatus::InvalidArgument);
    let rem = model("rem", 13);
    let (mut psd, mut eig) = (false, 0.0);
    assert_eq!(unsafe { cgrem_check_psd(rem, &mut psd, &mut eig) }, CgremStatus::Resource);
    unsafe { cgrem_model_free(rem) };
    unsafe { cgrem_model_free(ptr::null_mut()) };
    let v = unsafe { CStr::from_ptr(cgrem_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/cgrem.h")
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "cgrem_model_parse",
        "cgrem_model_free",
        "cgrem_overlap",
        "cgrem_covariance",
        "cgrem_condition_gap",
        "cgrem_check_partition",
        "cgrem_check_condition",
        "cgrem_check_psd",
        "cgrem_quenched_alpha",
        "cgrem_interp_derivative",
        "cgrem_jensen_bound",
        "cgrem_last_error",
        "typedef struct CgremModel CgremModel",
        "CGREM_STATUS_OK = 0",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "cgrem.h"

int main(void) {
    CgremModel *m = NULL;
    if (cgrem_model_parse("pspin:3", 3, &m) != CGREM_STATUS_OK) return 10;
    CgremConditionResult r;
    if (cgrem_check_partition(m, 1, -1.0, &r) != CGREM_STATUS_OK) return 11;
    if (r.verdict != CGREM_VERDICT_VIOLATED) return 12;
    if (fabs(r.max_gap - 8.0 / 27.0) > 1e-12) return 13;
    cgrem_model_free(m);
    if (cgrem_model_parse("nope", 3, &m) != CGREM_STATUS_PARSE) return 14;
    printf("%s\n", cgrem_last_error());
    return 0;
}
"#;

#[test]
fn c_program_compiles_and_links() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let include = header().parent().unwrap().to_path_buf();
    let st = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(st.success(), "header does not compile as C99");

    // target/<profile>/deps/<test exe> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().unwrap().parent().unwrap().join("libcgrem_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; link step skipped", lib.display());
        return;
    }
    let bin = dir.path().join("main");
    let st = Command::new("cc")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(st.success(), "link against the static library failed");
    let out = Command::new(&bin).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("unknown model"));
}
