//! C ABI for rslab.
//!
//! Every fallible call returns an [`RslabStatus`]; results come back through
//! out-pointers. Objects are opaque handles released with their `_free`
//! function. The message for the most recent failure on the calling thread is
//! available from [`rslab_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rslab::config::{parse_config, RunConfig};
use rslab::frac::{FracParams, TimeMesh};
use rslab::fujita::{critical_curve_system, critical_exponent, dichotomy_sweep, SweepReport};
use rslab::relaxation::{solve_contour, solve_volterra, RelaxationCurve};
use rslab::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RslabStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Input = 3,
    Precondition = 4,
    Regime = 5,
    Accuracy = 6,
    Positivity = 7,
    Internal = 8,
    Config = 9,
    Io = 10,
    Panic = 11,
    Utf8 = 12,
}

/// Sweep point classification.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RslabSweepStatus {
    Global = 0,
    BlewUp = 1,
    Inconclusive = 2,
}

/// Fractional parameters (α, k).
pub struct RslabParams(FracParams);

/// Sampled relaxation function.
pub struct RslabCurve(RelaxationCurve);

/// Run configuration.
pub struct RslabConfig(RunConfig);

/// Result of a dichotomy sweep.
pub struct RslabSweep(SweepReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> RslabStatus {
    match err {
        Error::Domain(_) => RslabStatus::Domain,
        Error::Input(_) => RslabStatus::Input,
        Error::Precondition(_) => RslabStatus::Precondition,
        Error::Regime(_) => RslabStatus::Regime,
        Error::Accuracy(_) => RslabStatus::Accuracy,
        Error::Positivity { .. } => RslabStatus::Positivity,
        Error::Internal(_) => RslabStatus::Internal,
        Error::Config { .. } => RslabStatus::Config,
        Error::Io { .. } => RslabStatus::Io,
        Error::Sweep { inner, .. } => status_of(inner),
    }
}

enum Fail {
    Core(Error),
    Null(&'static str),
    Utf8(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RslabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RslabStatus::Ok
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            RslabStatus::NullPointer
        }
        Ok(Err(Fail::Utf8(what))) => {
            set_error(&format!("{what} is not valid UTF-8"));
            RslabStatus::Utf8
        }
        Err(_) => {
            set_error("internal panic");
            RslabStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    // SAFETY: caller passes a live handle or null.
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    // SAFETY: caller passes a live, unaliased handle or null.
    unsafe { p.as_mut() }.ok_or(Fail::Null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| Fail::Utf8(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: checked non-null; caller guarantees it is writable.
    unsafe { out.write(value) };
    Ok(())
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next rslab call on the same thread.
#[no_mangle]
pub extern "C" fn rslab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rslab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from an rslab function returning `char *` and must not be
/// used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rslab_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: allocated by CString::into_raw in this crate.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Creates (α, k) with α in (0, 1) and k ≥ 0.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn rslab_params_new(alpha: f64, k: f64, out: *mut *mut RslabParams) -> RslabStatus {
    guard(|| {
        let p = FracParams::new(alpha, k)?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, Box::into_raw(Box::new(RslabParams(p))), "out") }
    })
}

/// # Safety
/// `p` must be null or a handle from [`rslab_params_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rslab_params_free(p: *mut RslabParams) {
    if !p.is_null() {
        // SAFETY: handle was produced by Box::into_raw.
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Solves the relaxation equation for eigenvalue `mu` on a graded mesh of
/// `intervals` panels over [0, t_end].
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rslab_relax_volterra(
    params: *const RslabParams,
    mu: f64,
    t_end: f64,
    intervals: usize,
    grading: f64,
    out: *mut *mut RslabCurve,
) -> RslabStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let params = unsafe { borrow(params, "params") }?;
        let mesh = TimeMesh::graded(t_end, intervals, grading)?;
        let curve = solve_volterra(mu, &params.0, &mesh)?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, Box::into_raw(Box::new(RslabCurve(curve))), "out") }
    })
}

/// s(t, μ) at a single t > 0 by contour quadrature with default contour.
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rslab_relax_contour(
    params: *const RslabParams,
    mu: f64,
    t: f64,
    out: *mut f64,
) -> RslabStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let params = unsafe { borrow(params, "params") }?;
        let contour = rslab::frac::ContourSpec::for_time(t)?;
        let v = solve_contour(mu, t, &params.0, &contour)?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, v.value, "out") }
    })
}

/// Number of nodes in the curve; 0 for null.
///
/// # Safety
/// `curve` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rslab_curve_len(curve: *const RslabCurve) -> usize {
    // SAFETY: caller contract.
    unsafe { curve.as_ref() }.map_or(0, |c| c.0.values.len())
}

/// Copies up to `len` node times and values into `times` and `values`
/// (either may be null to skip it).
///
/// # Safety
/// Non-null buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rslab_curve_copy(
    curve: *const RslabCurve,
    times: *mut f64,
    values: *mut f64,
    len: usize,
) -> RslabStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let c = unsafe { borrow(curve, "curve") }?;
        let n = len.min(c.0.values.len());
        if !times.is_null() {
            // SAFETY: buffer holds at least `len` >= n doubles.
            unsafe { ptr::copy_nonoverlapping(c.0.times().as_ptr(), times, n) };
        }
        if !values.is_null() {
            // SAFETY: as above.
            unsafe { ptr::copy_nonoverlapping(c.0.values.as_ptr(), values, n) };
        }
        Ok(())
    })
}

/// # Safety
/// `curve` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rslab_curve_free(curve: *mut RslabCurve) {
    if !curve.is_null() {
        // SAFETY: handle was produced by Box::into_raw.
        drop(unsafe { Box::from_raw(curve) });
    }
}

/// ρ_c = 1 + (σ + 2(γ+1))/N.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rslab_critical_exponent(dim: usize, sigma: f64, gamma: f64, out: *mut f64) -> RslabStatus {
    guard(|| {
        let v = critical_exponent(dim, sigma, gamma)?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, v, "out") }
    })
}

/// Critical product (ρ₁ρ₂)_c for the system.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rslab_critical_product(
    dim: usize,
    sigma: f64,
    gamma: f64,
    rho1: f64,
    rho2: f64,
    out: *mut f64,
) -> RslabStatus {
    guard(|| {
        let v = critical_curve_system(dim, sigma, gamma, rho1, rho2)?.product_c;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, v, "out") }
    })
}

/// Default configuration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rslab_config_default(out: *mut *mut RslabConfig) -> RslabStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        unsafe { put(out, Box::into_raw(Box::new(RslabConfig(RunConfig::default()))), "out") }
    })
}

/// Parses a `key = value` document.
///
/// # Safety
/// `text` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rslab_config_parse(text_ptr: *const c_char, out: *mut *mut RslabConfig) -> RslabStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let cfg = parse_config(unsafe { text(text_ptr, "text") }?)?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, Box::into_raw(Box::new(RslabConfig(cfg))), "out") }
    })
}

/// Sets one key and revalidates; the config is unchanged on failure.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rslab_config_set(
    cfg: *mut RslabConfig,
    key: *const c_char,
    value: *const c_char,
) -> RslabStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let cfg = unsafe { borrow_mut(cfg, "cfg") }?;
        // SAFETY: forwarded caller contract.
        let (key, value) = unsafe { (text(key, "key")?, text(value, "value")?) };
        let mut next = cfg.0.clone();
        next.set(key, value)?;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// Canonical text form; release with [`rslab_string_free`]. Null on null input.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rslab_config_to_text(cfg: *const RslabConfig) -> *mut c_char {
    // SAFETY: caller contract.
    unsafe { cfg.as_ref() }.map_or(ptr::null_mut(), |c| owned_string(c.0.to_text()))
}

/// SHA-256 of the canonical text, hex; release with [`rslab_string_free`].
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rslab_config_hash(cfg: *const RslabConfig) -> *mut c_char {
    // SAFETY: caller contract.
    unsafe { cfg.as_ref() }.map_or(ptr::null_mut(), |c| owned_string(c.0.hash()))
}

/// # Safety
/// `cfg` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rslab_config_free(cfg: *mut RslabConfig) {
    if !cfg.is_null() {
        // SAFETY: handle was produced by Box::into_raw.
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// Runs the dichotomy sweep described by `cfg`.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rslab_sweep_run(cfg: *const RslabConfig, out: *mut *mut RslabSweep) -> RslabStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let cfg = unsafe { borrow(cfg, "cfg") }?;
        let report = dichotomy_sweep(&cfg.0.sweep_config())?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, Box::into_raw(Box::new(RslabSweep(report))), "out") }
    })
}

/// Number of sweep points; 0 for null.
///
/// # Safety
/// `sweep` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rslab_sweep_len(sweep: *const RslabSweep) -> usize {
    // SAFETY: caller contract.
    unsafe { sweep.as_ref() }.map_or(0, |s| s.0.points.len())
}

/// Axis value and classification of point `index`.
///
/// # Safety
/// `sweep` must be a live handle; `value` and `status` writable.
#[no_mangle]
pub unsafe extern "C" fn rslab_sweep_point(
    sweep: *const RslabSweep,
    index: usize,
    value: *mut f64,
    status: *mut RslabSweepStatus,
) -> RslabStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let s = unsafe { borrow(sweep, "sweep") }?;
        let p =
            s.0.points
                .get(index)
                .ok_or_else(|| Error::Input(format!("index {index} out of range ({} points)", s.0.points.len())))?;
        let code = match p.status.as_str() {
            "Global" => RslabSweepStatus::Global,
            "BlewUp" => RslabSweepStatus::BlewUp,
            _ => RslabSweepStatus::Inconclusive,
        };
        // SAFETY: forwarded caller contract.
        unsafe {
            put(value, p.value, "value")?;
            put(status, code, "status")
        }
    })
}

/// Full report as JSON; release with [`rslab_string_free`]. Null on null input.
///
/// # Safety
/// `sweep` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rslab_sweep_json(sweep: *const RslabSweep) -> *mut c_char {
    // SAFETY: caller contract.
    unsafe { sweep.as_ref() }
        .and_then(|s| serde_json::to_string(&s.0).ok())
        .map_or(ptr::null_mut(), owned_string)
}

/// # Safety
/// `sweep` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rslab_sweep_free(sweep: *mut RslabSweep) {
    if !sweep.is_null() {
        // SAFETY: handle was produced by Box::into_raw.
        drop(unsafe { Box::from_raw(sweep) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        // SAFETY: pointer from rslab_last_error is a valid C string.
        unsafe { CStr::from_ptr(rslab_last_error()) }
            .to_string_lossy()
            .into_owned()
    }

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Error::Domain("x".into())), RslabStatus::Domain);
        let nested = Error::Sweep {
            value: 2.0,
            inner: Box::new(Error::Positivity { t: 1.0, ratio: -1.0 }),
        };
        assert_eq!(status_of(&nested), RslabStatus::Positivity);
    }

    #[test]
    fn params_errors_set_message() {
        let mut p = ptr::null_mut();
        // SAFETY: `p` is a valid out-pointer.
        let st = unsafe { rslab_params_new(1.5, 1.0, &mut p) };
        assert_eq!(st, RslabStatus::Domain);
        assert!(p.is_null());
        assert!(last_error().contains("alpha"));
        // SAFETY: null out-pointer is reported, not dereferenced.
        assert_eq!(
            unsafe { rslab_params_new(0.5, 1.0, ptr::null_mut()) },
            RslabStatus::NullPointer
        );
    }

    #[test]
    fn version_string() {
        // SAFETY: static NUL-terminated string.
        let v = unsafe { CStr::from_ptr(rslab_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}
