//! C ABI for `cocycle-lab`.
//!
//! Cocycles live behind an opaque [`CLCocycle`] handle. Every fallible call
//! returns a [`CLStatus`] and writes results through out-pointers; the
//! message of the most recent failure on the calling thread is available from
//! [`cl_last_error_message`]. Strings returned by the library must be released
//! with [`cl_string_free`], handles with [`cl_cocycle_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cocycle_lab::experiments::{self, render_csv, render_report, Config, Experiment, Meta};
use cocycle_lab::lyapunov::{closed_form_diag_le, ldt_tail, mc_le};
use cocycle_lab::transfer::{discretize, furstenberg_le, stationary_measure};
use cocycle_lab::{Cocycle, LabError, Mat2};

/// Result codes. `CL_STATUS_OK` is zero; everything else is a failure.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CLStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidProbabilities = 3,
    DimensionMismatch = 4,
    SingularMatrix = 5,
    Overflow = 6,
    NotDiagonalizable = 7,
    ZeroLyapunov = 8,
    NotHyperbolic = 9,
    NoConvergence = 10,
    ConfigInvalid = 11,
    ExperimentFailed = 12,
    /// Any other numerical precondition failure; see the error message.
    Precondition = 13,
    /// A Rust panic was caught at the boundary.
    Panic = 14,
}

impl From<&LabError> for CLStatus {
    fn from(e: &LabError) -> Self {
        match e {
            LabError::InvalidArgument(_) => CLStatus::InvalidArgument,
            LabError::InvalidProbabilities(_) => CLStatus::InvalidProbabilities,
            LabError::DimensionMismatch { .. } => CLStatus::DimensionMismatch,
            LabError::SingularMatrix { .. } | LabError::ZeroEigenvalue => CLStatus::SingularMatrix,
            LabError::Overflow => CLStatus::Overflow,
            LabError::NotDiagonalizable { .. } => CLStatus::NotDiagonalizable,
            LabError::ZeroLyapunov => CLStatus::ZeroLyapunov,
            LabError::NotHyperbolic(_) => CLStatus::NotHyperbolic,
            LabError::NoConvergence { .. } => CLStatus::NoConvergence,
            LabError::ConfigInvalid(_) => CLStatus::ConfigInvalid,
            LabError::ExperimentFailed(_) => CLStatus::ExperimentFailed,
            _ => CLStatus::Precondition,
        }
    }
}

/// Opaque cocycle handle.
pub struct CLCocycle {
    inner: Cocycle,
}

/// Monte-Carlo Lyapunov estimate.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CLLyapunov {
    pub mean: f64,
    pub std_err: f64,
    /// Estimate of the bottom exponent on the same paths.
    pub bottom: f64,
    pub bottom_std_err: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f` with panics and errors turned into status codes.
fn guard(f: impl FnOnce() -> Result<(), (CLStatus, String)>) -> CLStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CLStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            CLStatus::Panic
        }
    }
}

fn lab(e: LabError) -> (CLStatus, String) {
    (CLStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (CLStatus, String) {
    (CLStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CLStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (CLStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn read_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (CLStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a>(h: *const CLCocycle) -> Result<&'a Cocycle, (CLStatus, String)> {
    h.as_ref().map(|c| &c.inner).ok_or_else(|| null("cocycle handle"))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn cl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a cocycle from `k` row-major matrices (`4k` doubles) and `k`
/// probabilities. `probs` may be NULL for the uniform law.
///
/// # Safety
/// `mats` must point to `4k` doubles, `probs` to `k` doubles or be NULL, and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cl_cocycle_new(
    mats: *const f64,
    probs: *const f64,
    k: usize,
    out: *mut *mut CLCocycle,
) -> CLStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = read_slice(mats, 4 * k, "mats")?;
        let mats: Vec<Mat2> = m.chunks_exact(4).map(|c| Mat2::new(c[0], c[1], c[2], c[3])).collect();
        let c = if probs.is_null() {
            Cocycle::uniform(mats)
        } else {
            Cocycle::new(mats, read_slice(probs, k, "probs")?.to_vec())
        }
        .map_err(lab)?;
        *out = Box::into_raw(Box::new(CLCocycle { inner: c }));
        Ok(())
    })
}

/// Builds a cocycle from `{"probs": [...], "mats": [[a, b, c, d], ...]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cl_cocycle_from_json(json: *const c_char, out: *mut *mut CLCocycle) -> CLStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c = Cocycle::from_json(read_str(json, "json")?).map_err(lab)?;
        *out = Box::into_raw(Box::new(CLCocycle { inner: c }));
        Ok(())
    })
}

/// Releases a handle; NULL is ignored.
///
/// # Safety
/// `h` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cl_cocycle_free(h: *mut CLCocycle) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of matrices in the cocycle, 0 for NULL.
///
/// # Safety
/// `h` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl_cocycle_size(h: *const CLCocycle) -> usize {
    h.as_ref().map_or(0, |c| c.inner.k())
}

/// Serializes the cocycle as JSON; free the result with [`cl_string_free`].
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cl_cocycle_to_json(h: *const CLCocycle, out: *mut *mut c_char) -> CLStatus {
    guard(|| {
        let c = handle(h)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = into_c_string(c.to_json());
        Ok(())
    })
}

/// `|Σ p_j log|θ_j||` for the cocycle `diag(θ_j, 1/θ_j)`.
///
/// # Safety
/// `thetas` and `probs` must point to `k` doubles, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cl_closed_form_diag_le(
    thetas: *const f64,
    probs: *const f64,
    k: usize,
    out: *mut f64,
) -> CLStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = closed_form_diag_le(read_slice(thetas, k, "thetas")?, read_slice(probs, k, "probs")?).map_err(lab)?;
        Ok(())
    })
}

/// Monte-Carlo estimate of the top exponent at scale `n`.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cl_mc_le(
    h: *const CLCocycle,
    n: usize,
    samples: usize,
    seed: u64,
    out: *mut CLLyapunov,
) -> CLStatus {
    guard(|| {
        let c = handle(h)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let e = mc_le(c, n, samples, seed).map_err(lab)?;
        *out =
            CLLyapunov { mean: e.mean, std_err: e.std_err, bottom: e.top_bottom.1, bottom_std_err: e.bottom_std_err };
        Ok(())
    })
}

/// Fraction of paths with `|(1/n) log‖A^(n)‖ − reference| > epsilon` and its
/// standard error.
///
/// # Safety
/// `h` must be a live handle; `prob` and `std_err` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cl_ldt_tail(
    h: *const CLCocycle,
    n: usize,
    epsilon: f64,
    reference: f64,
    samples: usize,
    seed: u64,
    prob: *mut f64,
    std_err: *mut f64,
) -> CLStatus {
    guard(|| {
        let c = handle(h)?;
        if prob.is_null() || std_err.is_null() {
            return Err(null("output pointer"));
        }
        let (p, s) = ldt_tail(c, n, epsilon, reference, samples, seed).map_err(lab)?;
        *prob = p;
        *std_err = s;
        Ok(())
    })
}

/// Top exponent from the stationary measure of the grid operator with `g`
/// nodes per symbol.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cl_furstenberg_le(h: *const CLCocycle, g: usize, tol: f64, out: *mut f64) -> CLStatus {
    guard(|| {
        let c = handle(h)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let q = discretize(c, g).map_err(lab)?;
        let nu = stationary_measure(&q, tol, 1_000_000).map_err(lab)?;
        *out = furstenberg_le(c, &nu.weights).map_err(lab)?;
        Ok(())
    })
}

/// Runs a named experiment (`"le"`, `"ids"`, ...) on a JSON config, as the
/// command-line tool does. On success `csv_out` receives the CSV artifact and
/// `report_out`, when not NULL, the JSON report; free both with
/// [`cl_string_free`]. `workers` of 0 uses every core.
///
/// # Safety
/// `experiment` and `config_json` must be NUL-terminated strings, `csv_out`
/// a valid pointer and `report_out` valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn cl_run_experiment(
    experiment: *const c_char,
    config_json: *const c_char,
    seed: u64,
    workers: usize,
    csv_out: *mut *mut c_char,
    report_out: *mut *mut c_char,
) -> CLStatus {
    guard(|| {
        if csv_out.is_null() {
            return Err(null("csv_out"));
        }
        let e: Experiment = read_str(experiment, "experiment")?.parse().map_err(lab)?;
        let mut cfg = Config::from_json(read_str(config_json, "config_json")?).map_err(lab)?;
        cfg.seed = Some(seed);
        let mut pool = rayon::ThreadPoolBuilder::new();
        if workers > 0 {
            cfg.workers = Some(workers);
            pool = pool.num_threads(workers);
        }
        let pool = pool.build().map_err(|e| (CLStatus::ExperimentFailed, e.to_string()))?;
        let out = pool.install(|| experiments::run(e, &cfg, seed)).map_err(lab)?;
        let started =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let meta = Meta::new(e.name(), &cfg, seed, started);
        *csv_out = into_c_string(render_csv(&meta, &out.table));
        if !report_out.is_null() {
            *report_out = into_c_string(render_report(&meta, &out.report));
        }
        Ok(())
    })
}

/// Releases a string returned by this library; NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
