//! C ABI over the saved risk models of `vancorisk`.
//!
//! A model is loaded from the JSON written by the `train` step into an opaque
//! handle, queried for its feature order, and asked for risks on raw
//! (unscaled) feature rows; `NaN` marks a missing value and is imputed with
//! the training fill value. Every fallible call returns a [`VancoriskStatus`]
//! and leaves a message for [`vancorisk_last_error_message`] on failure.
//!
//! Handles are immutable after loading and may be shared between threads.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vancorisk::{Error, RiskModel};

/// Result of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VancoriskStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    /// The model document could not be parsed or has the wrong schema.
    Parse = 4,
    /// A row had the wrong number of features.
    WidthMismatch = 5,
    InvalidArgument = 6,
    /// Any other library error.
    Model = 7,
    /// A panic was caught at the boundary.
    Internal = 8,
}

/// Opaque model handle.
pub struct VancoriskModel {
    model: RiskModel,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> VancoriskStatus {
    match e {
        Error::Io(_) => VancoriskStatus::Io,
        Error::Json(_) | Error::Csv(_) | Error::Schema(_) => VancoriskStatus::Parse,
        Error::WidthMismatch { .. } => VancoriskStatus::WidthMismatch,
        _ => VancoriskStatus::Model,
    }
}

/// Run `f`, turning errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), (VancoriskStatus, String)>) -> VancoriskStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            VancoriskStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            VancoriskStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (VancoriskStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (VancoriskStatus, String) {
    (VancoriskStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (VancoriskStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (VancoriskStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn into_handle(model: RiskModel, out: *mut *mut VancoriskModel) -> Result<(), (VancoriskStatus, String)> {
    let names = model
        .feature_names()
        .iter()
        .map(|n| CString::new(n.as_str()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| (VancoriskStatus::Parse, "feature name contains a NUL byte".to_string()))?;
    // SAFETY: `out` was checked to be non-null by the caller of this helper.
    unsafe { *out = Box::into_raw(Box::new(VancoriskModel { model, names })) };
    Ok(())
}

/// Load a model from a JSON file written by the `train` step.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer to
/// writable storage for a handle. On success `*out` owns a handle that must
/// be released with [`vancorisk_model_free`]; on failure it is set to NULL.
#[no_mangle]
pub unsafe extern "C" fn vancorisk_model_load(path: *const c_char, out: *mut *mut VancoriskModel) -> VancoriskStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let model = RiskModel::load(Path::new(path)).map_err(lib_err)?;
        into_handle(model, out)
    })
}

/// Load a model from its JSON text.
///
/// # Safety
/// As for [`vancorisk_model_load`], with `json` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vancorisk_model_from_json(
    json: *const c_char,
    out: *mut *mut VancoriskModel,
) -> VancoriskStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let json = str_arg(json, "json")?;
        let model = RiskModel::from_json(json).map_err(lib_err)?;
        into_handle(model, out)
    })
}

/// Release a handle. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn vancorisk_model_free(model: *mut VancoriskModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of features a row must have; 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vancorisk_model_n_features(model: *const VancoriskModel) -> usize {
    model.as_ref().map_or(0, |m| m.names.len())
}

/// Name of feature `index` in row order, or NULL when out of range. The
/// string lives as long as the handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vancorisk_model_feature_name(model: *const VancoriskModel, index: usize) -> *const c_char {
    model.as_ref().and_then(|m| m.names.get(index)).map_or(ptr::null(), |n| n.as_ptr())
}

/// Predicted risk in [0, 1] for one raw feature row of `n_features` values.
///
/// # Safety
/// `model` must be a live handle, `row` must point to `n_features` readable
/// doubles and `out_risk` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn vancorisk_model_predict(
    model: *const VancoriskModel,
    row: *const f64,
    n_features: usize,
    out_risk: *mut f64,
) -> VancoriskStatus {
    vancorisk_model_predict_batch(model, row, 1, n_features, out_risk)
}

/// Predicted risks for `n_rows` row-major raw feature rows.
///
/// # Safety
/// `model` must be a live handle, `rows` must point to `n_rows * n_features`
/// readable doubles and `out_risks` to `n_rows` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vancorisk_model_predict_batch(
    model: *const VancoriskModel,
    rows: *const f64,
    n_rows: usize,
    n_features: usize,
    out_risks: *mut f64,
) -> VancoriskStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if n_rows == 0 {
            return Ok(());
        }
        if rows.is_null() {
            return Err(null("rows"));
        }
        if out_risks.is_null() {
            return Err(null("out_risks"));
        }
        if n_features != m.names.len() {
            return Err(lib_err(Error::WidthMismatch { expected: m.names.len(), got: n_features }));
        }
        let len = n_rows
            .checked_mul(n_features)
            .ok_or_else(|| (VancoriskStatus::InvalidArgument, "n_rows * n_features overflows".to_string()))?;
        let input = std::slice::from_raw_parts(rows, len);
        let risks = input.chunks(n_features).map(|r| m.model.predict_raw(r)).collect::<Result<Vec<_>, _>>();
        let risks = risks.map_err(lib_err)?;
        std::slice::from_raw_parts_mut(out_risks, n_rows).copy_from_slice(&risks);
        Ok(())
    })
}

/// Message of the last failed call on this thread, or NULL after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vancorisk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vancorisk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
