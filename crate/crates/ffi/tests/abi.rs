use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use brex_ffi::*;

const LS_2D: &str = r#"{"fidelity":{"kind":"ls","y":[1,2]},"A":[[3,1],[1,3]],"lambda0":0.5}"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(brex_last_error()).to_string_lossy().into_owned() }
}

fn problem(json: &str) -> *mut BrexProblem {
    let text = CString::new(json).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { brex_problem_from_json(text.as_ptr(), &mut p) }, BREX_OK);
    p
}

#[test]
fn solve_through_handles() {
    unsafe {
        let p = problem(LS_2D);
        assert_eq!(brex_problem_n(p), 2);
        let psi = CString::new("power:2").unwrap();
        let gamma = CString::new("thr").unwrap();
        let mut r = ptr::null_mut();
        assert_eq!(brex_calibrate(p, psi.as_ptr(), gamma.as_ptr(), &mut r), BREX_OK);
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(brex_relaxation_alpha(r, 1, &mut lo, &mut hi), BREX_OK);
        assert!((hi - 0.1f64.sqrt()).abs() < 1e-12 && (lo + hi).abs() < 1e-12);

        let mut res = ptr::null_mut();
        assert_eq!(brex_solve(p, r, ptr::null(), &mut res), BREX_OK);
        let mut x = [0.0; 2];
        assert_eq!(brex_result_x(res, x.as_mut_ptr(), 2), BREX_OK);
        assert!(x[0].abs() < 1e-6 && (x[1] - 0.7).abs() < 1e-6);
        assert!((brex_result_j0(res) - 0.55).abs() < 1e-8);
        assert!((brex_result_jpsi(res) - 0.55).abs() < 1e-8);
        assert_eq!(brex_result_stop_reason(res), BREX_STOP_TOLERANCE);
        assert!(brex_result_iterations(res) > 0);

        let mut s: *mut c_char = ptr::null_mut();
        assert_eq!(brex_result_json(res, &mut s), BREX_OK);
        let doc: serde_json::Value = serde_json::from_str(CStr::from_ptr(s).to_str().unwrap()).unwrap();
        assert_eq!(doc["cert"]["is_localmin_j0"], true);
        brex_string_free(s);

        let mut j0 = 0.0;
        assert_eq!(brex_objective_j0(p, x.as_ptr(), 2, &mut j0), BREX_OK);
        let mut b = 0.0;
        assert_eq!(brex_relaxation_value(r, x.as_ptr(), 2, &mut b), BREX_OK);
        assert!((b - 0.5).abs() < 1e-12);

        brex_result_free(res);
        brex_relaxation_free(r);
        brex_problem_free(p);
    }
}

#[test]
fn direct_constructor_and_l0_solve() {
    unsafe {
        let a = [3.0, 1.0, 1.0, 3.0];
        let y = [1.0, 2.0];
        let mut p = ptr::null_mut();
        let st = brex_problem_new(2, 2, a.as_ptr(), BREX_FIDELITY_LS, y.as_ptr(), 0.0, 0.5, 0.0, BREX_CONSTRAINT_REALS, &mut p);
        assert_eq!(st, BREX_OK);
        let opts = BrexSolverOptions { max_iter: 0, rel_tol: 0.0, rho: 0.0, fixed_step: 0, x0: ptr::null(), cert_tol: 0.0 };
        let mut res = ptr::null_mut();
        assert_eq!(brex_solve(p, ptr::null(), &opts, &mut res), BREX_OK);
        assert!(brex_result_j0(res) >= 0.55 - 1e-9);
        brex_result_free(res);

        let mut s: *mut c_char = ptr::null_mut();
        assert_eq!(brex_enumerate_json(p, 2, &mut s), BREX_OK);
        let mins: serde_json::Value = serde_json::from_str(CStr::from_ptr(s).to_str().unwrap()).unwrap();
        assert_eq!(mins.as_array().unwrap().len(), 4);
        brex_string_free(s);
        brex_problem_free(p);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let bad = CString::new("{").unwrap();
        let mut p = ptr::null_mut();
        assert_eq!(brex_problem_from_json(bad.as_ptr(), &mut p), BREX_PARSE);
        assert!(p.is_null());
        assert!(last_error().contains("parse"));

        assert_eq!(brex_problem_from_json(ptr::null(), &mut p), BREX_NULL_POINTER);

        let p = problem(LS_2D);
        let shannon = CString::new("shannon").unwrap();
        let thr = CString::new("thr").unwrap();
        let mut r = ptr::null_mut();
        assert_eq!(brex_calibrate(p, shannon.as_ptr(), thr.as_ptr(), &mut r), BREX_CALIBRATION);

        let a = [1.0];
        let y = [1.0];
        let mut q = ptr::null_mut();
        let st = brex_problem_new(1, 1, a.as_ptr(), 9, y.as_ptr(), 0.0, 0.5, 0.0, BREX_CONSTRAINT_REALS, &mut q);
        assert_eq!(st, BREX_INVALID);

        let kl = problem(r#"{"fidelity":{"kind":"kl","y":[1],"b":0.1},"A":[[1]],"lambda0":0.1}"#);
        let x = [-1.0];
        let mut v = 0.0;
        assert_eq!(brex_objective_j0(kl, x.as_ptr(), 1, &mut v), BREX_DOMAIN);

        brex_problem_free(kl);
        brex_problem_free(p);
        brex_problem_free(ptr::null_mut());
        assert_eq!(brex_problem_n(ptr::null()), 0);
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(brex_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Compiles a small C program against the generated header and the static library.
#[test]
fn c_program_links_against_header() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler available; skipping");
        return;
    }
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    if !lib_dir.join("libbrex_ffi.a").exists() {
        eprintln!("static library not built; skipping");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "brex.h"
int main(void) {
    const char *json = "{\"fidelity\":{\"kind\":\"ls\",\"y\":[1,2]},\"A\":[[3,1],[1,3]],\"lambda0\":0.5}";
    BrexProblem *p = NULL;
    BrexRelaxation *r = NULL;
    BrexResult *res = NULL;
    if (brex_problem_from_json(json, &p) != BREX_OK) return 1;
    if (brex_calibrate(p, "power:2", "thr", &r) != BREX_OK) return 2;
    if (brex_solve(p, r, NULL, &res) != BREX_OK) return 3;
    double x[2];
    if (brex_result_x(res, x, 2) != BREX_OK) return 4;
    printf("%.6f %.6f %.6f\n", x[0], x[1], brex_result_j0(res));
    brex_result_free(res);
    brex_relaxation_free(r);
    brex_problem_free(p);
    return brex_problem_from_json("{", &p) == BREX_PARSE ? 0 : 5;
}
"#,
    )
    .unwrap();
    let bin = tmp.path().join("main");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(lib_dir.join("libbrex_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "0.000000 0.700000 0.550000");
}
