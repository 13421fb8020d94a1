//! C ABI over `stratlab`: opaque model handles, status codes, and JSON
//! strings for structured results.
//!
//! Every function returns a [`StratlabStatus`]. On failure the message is
//! available from [`stratlab_last_error`] on the same thread. Strings handed
//! out by the library must be released with [`stratlab_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use stratlab::classifier::classify;
use stratlab::measure::ball_volume_mc;
use stratlab::model::{ModelDocument, StratifiedModel};
use stratlab::suite::{resolve_center, Center};
use stratlab::Error;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StratlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Domain = 4,
    Argument = 5,
    Precondition = 6,
    Unsupported = 7,
    Resolution = 8,
    Numerical = 9,
    InconsistentMetric = 10,
    Io = 11,
    Panic = 12,
}

/// Opaque handle to a validated model.
pub struct StratlabModel {
    inner: StratifiedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> StratlabStatus {
    match e {
        Error::Domain(_) => StratlabStatus::Domain,
        Error::Argument(_) => StratlabStatus::Argument,
        Error::Precondition(_) => StratlabStatus::Precondition,
        Error::InconsistentMetric(_) => StratlabStatus::InconsistentMetric,
        Error::Unsupported(_) => StratlabStatus::Unsupported,
        Error::Resolution(_) => StratlabStatus::Resolution,
        Error::Numerical { .. } => StratlabStatus::Numerical,
        Error::Config(_) | Error::Json(_) => StratlabStatus::Config,
        Error::Io(_) => StratlabStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Utf8(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> StratlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StratlabStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("{name} is null"));
            StratlabStatus::NullPointer
        }
        Ok(Err(Failure::Utf8(name))) => {
            set_error(format!("{name} is not valid UTF-8"));
            StratlabStatus::InvalidUtf8
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_string());
            StratlabStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(name))
}

unsafe fn model_arg<'a>(p: *const StratlabModel) -> Result<&'a StratifiedModel, Failure> {
    p.as_ref().map(|m| &m.inner).ok_or(Failure::Null("model"))
}

fn out_arg<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or(Failure::Null(name))
}

fn parse_center(text: &str) -> Result<Center, Error> {
    match text {
        "apex" => Ok(Center::Apex),
        "pole" => Ok(Center::Pole),
        _ => serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid center JSON: {e}"))),
    }
}

fn give_string(s: String, out: &mut *mut c_char) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Error::Config("string contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn give_model(model: StratifiedModel, out: &mut *mut StratlabModel) {
    *out = Box::into_raw(Box::new(StratlabModel { inner: model }));
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn stratlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stratlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a model from a JSON model document.
///
/// # Safety
/// `json` must be null or a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn stratlab_model_from_json(json: *const c_char, out: *mut *mut StratlabModel) -> StratlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(json, "json")?;
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid model JSON: {e}")))?;
        give_model(StratifiedModel::try_from(doc)?, out);
        Ok(())
    })
}

/// Flat cone of total angle `alpha`, truncated at `truncation_radius`.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn stratlab_model_flat_cone(alpha: f64, truncation_radius: f64, out: *mut *mut StratlabModel) -> StratlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        give_model(StratifiedModel::flat_cone(alpha, truncation_radius)?, out);
        Ok(())
    })
}

/// `n`-dimensional spherical suspension whose codimension-two angle is `alpha`.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn stratlab_model_spherical_suspension(n: usize, alpha: f64, out: *mut *mut StratlabModel) -> StratlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        give_model(StratifiedModel::spherical_suspension(n, alpha)?, out);
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stratlab_model_free(model: *mut StratlabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Topological dimension of the model.
///
/// # Safety
/// `model` must be a live handle or null; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn stratlab_model_dim(model: *const StratlabModel, out: *mut usize) -> StratlabStatus {
    guard(|| {
        *out_arg(out, "out")? = model_arg(model)?.dim();
        Ok(())
    })
}

/// The model document as JSON; free with [`stratlab_string_free`].
///
/// # Safety
/// `model` must be a live handle or null; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn stratlab_model_to_json(model: *const StratlabModel, out: *mut *mut c_char) -> StratlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let doc = ModelDocument::from(model_arg(model)?);
        give_string(serde_json::to_string(&doc).map_err(Error::from)?, out)
    })
}

/// Distance between two points given as `"apex"`, `"pole"` or center JSON.
///
/// # Safety
/// Pointers must be null or valid as documented on the module.
#[no_mangle]
pub unsafe extern "C" fn stratlab_distance(
    model: *const StratlabModel,
    p: *const c_char,
    q: *const c_char,
    out: *mut f64,
) -> StratlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = model_arg(model)?;
        let x = resolve_center(m, &parse_center(str_arg(p, "p")?)?)?;
        let y = resolve_center(m, &parse_center(str_arg(q, "q")?)?)?;
        *out = m.distance(&x, &y)?;
        Ok(())
    })
}

/// RCD(K, N) verdict flags.
///
/// # Safety
/// Pointers must be null or valid as documented on the module.
#[no_mangle]
pub unsafe extern "C" fn stratlab_classify(
    model: *const StratlabModel,
    k: f64,
    n: f64,
    is_rcd: *mut bool,
    indeterminate: *mut bool,
) -> StratlabStatus {
    guard(|| {
        let v = classify(model_arg(model)?, k, n);
        *out_arg(is_rcd, "is_rcd")? = v.is_rcd;
        *out_arg(indeterminate, "indeterminate")? = v.indeterminate;
        Ok(())
    })
}

/// Full RCD(K, N) verdict with reasons, as JSON.
///
/// # Safety
/// Pointers must be null or valid as documented on the module.
#[no_mangle]
pub unsafe extern "C" fn stratlab_classify_json(model: *const StratlabModel, k: f64, n: f64, out: *mut *mut c_char) -> StratlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let v = classify(model_arg(model)?, k, n);
        give_string(serde_json::to_string(&v).map_err(Error::from)?, out)
    })
}

/// Monte Carlo volume of `B(center, radius)` with its standard error.
///
/// # Safety
/// Pointers must be null or valid as documented on the module.
#[no_mangle]
pub unsafe extern "C" fn stratlab_ball_volume(
    model: *const StratlabModel,
    center: *const c_char,
    radius: f64,
    samples: u64,
    seed: u64,
    value: *mut f64,
    stderr: *mut f64,
) -> StratlabStatus {
    guard(|| {
        let m = model_arg(model)?;
        let x = resolve_center(m, &parse_center(str_arg(center, "center")?)?)?;
        let samples = usize::try_from(samples).map_err(|_| Error::Argument("sample count too large".into()))?;
        let e = ball_volume_mc(m, &x, radius, samples, seed)?;
        *out_arg(value, "value")? = e.value;
        *out_arg(stderr, "stderr")? = e.stderr;
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stratlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
