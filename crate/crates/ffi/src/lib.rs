//! C ABI for `brex`.
//!
//! Objects are opaque handles created by `brex_*_new`/`brex_*_from_*` functions and released
//! by the matching `brex_*_free`. Every fallible function returns a status code (`BREX_OK` on
//! success); the message of the most recent failure on the calling thread is available from
//! `brex_last_error`. Panics never cross the boundary and are reported as `BREX_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use brex::certify;
use brex::cli;
use brex::fidelity::{Fidelity, FidelityKind};
use brex::generating::Relaxation;
use brex::problem::{Constraint, Problem};
use brex::solver::{SolveResult, SolverConfig, StepRule, StopReason};
use brex::Error;
use nalgebra::{DMatrix, DVector};

pub const BREX_OK: i32 = 0;
pub const BREX_NULL_POINTER: i32 = 1;
pub const BREX_PARSE: i32 = 2;
pub const BREX_DOMAIN: i32 = 3;
pub const BREX_CALIBRATION: i32 = 4;
pub const BREX_INVALID: i32 = 5;
pub const BREX_IO: i32 = 6;
pub const BREX_PANIC: i32 = 7;

pub const BREX_FIDELITY_LS: i32 = 0;
pub const BREX_FIDELITY_LR: i32 = 1;
pub const BREX_FIDELITY_KL: i32 = 2;

pub const BREX_CONSTRAINT_REALS: i32 = 0;
pub const BREX_CONSTRAINT_NONNEG: i32 = 1;

pub const BREX_STOP_TOLERANCE: i32 = 0;
pub const BREX_STOP_MAX_ITER: i32 = 1;
pub const BREX_STOP_DOMAIN_ERROR: i32 = 2;

/// A validated problem `F_y(Ax) + λ0 ||x||_0 + (λ2/2) ||x||²` over a constraint set.
pub struct BrexProblem(Problem);

/// A calibrated relaxation of the `ℓ0` term.
pub struct BrexRelaxation(Relaxation);

/// Outcome of a solve, with its certificate.
pub struct BrexResult {
    result: SolveResult,
    j0: f64,
    jpsi: f64,
    json: String,
}

/// Solver settings. Zero-initialized options select the defaults.
#[repr(C)]
pub struct BrexSolverOptions {
    /// Iteration cap; 0 selects 5000.
    pub max_iter: usize,
    /// Relative stopping tolerance; 0 selects 1e-9.
    pub rel_tol: f64,
    /// Step size when `fixed_step` is nonzero, otherwise the initial backtracking step
    /// (0 selects the default).
    pub rho: f64,
    pub fixed_step: i32,
    /// Starting point of length N, or null for zero.
    pub x0: *const f64,
    /// Certificate tolerance; 0 selects 1e-6.
    pub cert_tol: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status(err: &Error) -> i32 {
    match err {
        Error::Parse(_) => BREX_PARSE,
        Error::Domain(_) => BREX_DOMAIN,
        Error::UnsupportedPairing(_) | Error::Convergence(_) => BREX_CALIBRATION,
        Error::Invalid(_) | Error::Dimension(_) | Error::CombinatorialLimit(_) => BREX_INVALID,
        Error::Io(_) => BREX_IO,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BREX_OK,
        Ok(Err((code, msg))) => {
            set_error(&msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            BREX_PANIC
        }
    }
}

fn lib_err(e: Error) -> (i32, String) {
    (status(&e), e.to_string())
}

fn null_err(what: &str) -> (i32, String) {
    (BREX_NULL_POINTER, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (i32, String)> {
    if p.is_null() {
        return Err(null_err(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (BREX_PARSE, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, (i32, String)> {
    p.as_ref().ok_or_else(|| null_err(what))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (i32, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null_err(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (i32, String)> {
    if out.is_null() {
        return Err(null_err("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failure on this thread; empty when none. Valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn brex_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn brex_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON problem document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn brex_problem_from_json(json: *const c_char, out: *mut *mut BrexProblem) -> i32 {
    guard(|| {
        let text = str_arg(json, "json")?;
        let p = brex::io::parse_problem(text).map_err(lib_err)?;
        put(out, BrexProblem(p))
    })
}

/// Builds a problem from a row-major `m x n` matrix.
///
/// `b` is the KL background and is ignored for the other data terms.
///
/// # Safety
/// `a` must hold `m * n` values, `y` must hold `m` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn brex_problem_new(
    m: usize,
    n: usize,
    a: *const f64,
    fidelity: i32,
    y: *const f64,
    b: f64,
    lambda0: f64,
    lambda2: f64,
    constraint: i32,
    out: *mut *mut BrexProblem,
) -> i32 {
    guard(|| {
        if m == 0 || n == 0 {
            return Err((BREX_INVALID, "m and n must be positive".into()));
        }
        let data = slice_arg(a, m * n, "a")?;
        let y = slice_arg(y, m, "y")?.to_vec();
        let kind = match fidelity {
            BREX_FIDELITY_LS => FidelityKind::LeastSquares,
            BREX_FIDELITY_LR => FidelityKind::Logistic,
            BREX_FIDELITY_KL => FidelityKind::KullbackLeibler,
            other => return Err((BREX_INVALID, format!("unknown data term {other}"))),
        };
        let constraint = match constraint {
            BREX_CONSTRAINT_REALS => Constraint::Reals,
            BREX_CONSTRAINT_NONNEG => Constraint::Nonneg,
            other => return Err((BREX_INVALID, format!("unknown constraint {other}"))),
        };
        let bg = (kind == FidelityKind::KullbackLeibler).then_some(b);
        let fid = Fidelity::new(kind, y, bg).map_err(lib_err)?;
        let p = Problem::new(DMatrix::from_row_slice(m, n, data), fid, lambda0, lambda2, constraint)
            .map_err(lib_err)?;
        put(out, BrexProblem(p))
    })
}

/// # Safety
/// `p` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn brex_problem_free(p: *mut BrexProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of unknowns, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn brex_problem_n(p: *const BrexProblem) -> usize {
    p.as_ref().map_or(0, |p| p.0.n())
}

/// `J_0(x)`.
///
/// # Safety
/// `x` must hold `len` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn brex_objective_j0(p: *const BrexProblem, x: *const f64, len: usize, out: *mut f64) -> i32 {
    guard(|| {
        let p = ref_arg(p, "problem")?;
        let x = DVector::from_column_slice(slice_arg(x, len, "x")?);
        let v = p.0.objective_j0(&x).map_err(lib_err)?;
        if out.is_null() {
            return Err(null_err("out"));
        }
        *out = v;
        Ok(())
    })
}

/// Calibrates a relaxation; `psi` and `gamma` use the command-line grammar, e.g. `"power:2"`
/// and `"thr"`.
///
/// # Safety
/// String arguments must be NUL-terminated and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn brex_calibrate(
    p: *const BrexProblem,
    psi: *const c_char,
    gamma: *const c_char,
    out: *mut *mut BrexRelaxation,
) -> i32 {
    guard(|| {
        let p = ref_arg(p, "problem")?;
        let family = cli::parse_psi(str_arg(psi, "psi")?).map_err(lib_err)?;
        let gamma = cli::parse_gamma(str_arg(gamma, "gamma")?).map_err(lib_err)?;
        let r = cli::build_relaxation(&p.0, family, &gamma).map_err(|e| match e {
            Error::Parse(_) => lib_err(e),
            e => (BREX_CALIBRATION, e.to_string()),
        })?;
        put(out, BrexRelaxation(r))
    })
}

/// # Safety
/// `r` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn brex_relaxation_free(r: *mut BrexRelaxation) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Interval `[α⁻, α⁺]` of coordinate `n`; both are 0 for a plain `ℓ0` coordinate.
///
/// # Safety
/// `lo` and `hi` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn brex_relaxation_alpha(r: *const BrexRelaxation, n: usize, lo: *mut f64, hi: *mut f64) -> i32 {
    guard(|| {
        let r = ref_arg(r, "relaxation")?;
        if n >= r.0.len() {
            return Err((BREX_INVALID, format!("coordinate {n} out of range")));
        }
        if lo.is_null() || hi.is_null() {
            return Err(null_err("lo/hi"));
        }
        let (a, b) = r.0.generator(n).map_or((0.0, 0.0), |g| g.alpha_bounds());
        *lo = a;
        *hi = b;
        Ok(())
    })
}

/// `B_Ψ(x)`.
///
/// # Safety
/// `x` must hold `len` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn brex_relaxation_value(r: *const BrexRelaxation, x: *const f64, len: usize, out: *mut f64) -> i32 {
    guard(|| {
        let r = ref_arg(r, "relaxation")?;
        let x = slice_arg(x, len, "x")?;
        if len != r.0.len() {
            return Err((BREX_INVALID, format!("x has {len} entries, expected {}", r.0.len())));
        }
        if out.is_null() {
            return Err(null_err("out"));
        }
        *out = r.0.brex_value(x);
        Ok(())
    })
}

/// Proximal gradient descent on `J_Ψ`, or on `J_0` when `relaxation` is null. `options` may
/// be null for the defaults.
///
/// # Safety
/// Handles must be live; `options.x0`, when set, must hold N values.
#[no_mangle]
pub unsafe extern "C" fn brex_solve(
    p: *const BrexProblem,
    relaxation: *const BrexRelaxation,
    options: *const BrexSolverOptions,
    out: *mut *mut BrexResult,
) -> i32 {
    guard(|| {
        let p = ref_arg(p, "problem")?;
        let relax = relaxation.as_ref().map(|r| &r.0);
        let mut config = SolverConfig { rel_tol: 1e-9, record_trace: false, ..Default::default() };
        let mut cert_tol = certify::DEFAULT_TOL;
        if let Some(o) = options.as_ref() {
            if o.max_iter > 0 {
                config.max_iter = o.max_iter;
            }
            if o.rel_tol > 0.0 {
                config.rel_tol = o.rel_tol;
            }
            if o.cert_tol > 0.0 {
                cert_tol = o.cert_tol;
            }
            if o.fixed_step != 0 {
                config.step = StepRule::Fixed { rho: o.rho };
            } else if o.rho > 0.0 {
                if let StepRule::Backtracking { rho0, .. } = &mut config.step {
                    *rho0 = Some(o.rho);
                }
            }
            if !o.x0.is_null() {
                config.x0 = Some(slice_arg(o.x0, p.0.n(), "x0")?.to_vec());
            }
        }
        let (doc, result) = cli::solve_report(&p.0, relax, &config, cert_tol).map_err(lib_err)?;
        let j0 = doc["J0"].as_f64().unwrap_or(f64::NAN);
        let jpsi = doc["JPsi"].as_f64().unwrap_or(j0);
        put(out, BrexResult { result, j0, jpsi, json: doc.to_string() })
    })
}

/// # Safety
/// `r` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn brex_result_free(r: *mut BrexResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Copies the solution into `out`, which must hold exactly N values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn brex_result_x(r: *const BrexResult, out: *mut f64, len: usize) -> i32 {
    guard(|| {
        let r = ref_arg(r, "result")?;
        if len != r.result.x.len() {
            return Err((BREX_INVALID, format!("buffer holds {len} values, solution has {}", r.result.x.len())));
        }
        if out.is_null() {
            return Err(null_err("out"));
        }
        ptr::copy_nonoverlapping(r.result.x.as_ptr(), out, len);
        Ok(())
    })
}

/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn brex_result_j0(r: *const BrexResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.j0)
}

/// `J_Ψ` at the solution; equals `J_0` for unrelaxed solves.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn brex_result_jpsi(r: *const BrexResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.jpsi)
}

/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn brex_result_iterations(r: *const BrexResult) -> usize {
    r.as_ref().map_or(0, |r| r.result.iterations)
}

/// One of the `BREX_STOP_*` codes, or -1 for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn brex_result_stop_reason(r: *const BrexResult) -> i32 {
    r.as_ref().map_or(-1, |r| match r.result.stop_reason {
        StopReason::Tolerance => BREX_STOP_TOLERANCE,
        StopReason::MaxIter => BREX_STOP_MAX_ITER,
        StopReason::DomainError => BREX_STOP_DOMAIN_ERROR,
    })
}

/// Full result document (solution, objectives and certificate) as JSON. Release with
/// `brex_string_free`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn brex_result_json(r: *const BrexResult, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let r = ref_arg(r, "result")?;
        give_string(r.json.clone(), out)
    })
}

/// All local minimizers of `J_0` with at most `max_support` nonzeros, as a JSON array sorted
/// by objective. Release with `brex_string_free`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn brex_enumerate_json(p: *const BrexProblem, max_support: usize, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let p = ref_arg(p, "problem")?;
        let mins = certify::enumerate_minimizers(&p.0, max_support).map_err(lib_err)?;
        let text = serde_json::to_string(&mins).map_err(|e| lib_err(e.into()))?;
        give_string(text, out)
    })
}

unsafe fn give_string(s: String, out: *mut *mut c_char) -> Result<(), (i32, String)> {
    if out.is_null() {
        return Err(null_err("out"));
    }
    let c = CString::new(s).map_err(|_| (BREX_INVALID, "string holds a NUL byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// # Safety
/// `s` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn brex_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
