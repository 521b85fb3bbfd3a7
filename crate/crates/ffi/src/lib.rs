//! C ABI over `vjump-core`.
//!
//! Models are opaque handles created by a `*_load` function and released by
//! the matching `*_free`. Every fallible function returns a [`VjumpStatus`];
//! on failure, [`vjump_last_error_message`] describes what went wrong on the
//! calling thread. Buffers are caller-owned: the caller passes a pointer and
//! a length, and the function writes at most that many values.
//!
//! Sample buffers are row-major `n_samples × 6` arrays in the channel order
//! `ax, ay, az, gx, gy, gz` (accelerations in g, angular rates in deg/s),
//! sampled at 100 Hz.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ndarray::ArrayView2;
use vjump::features::{extract_feature_vector, FEATURE_DIM};
use vjump::io::{load_model, ImuSession, CHANNELS};
use vjump::regression::TrainedRegressor;
use vjump::segmentation::ClassVocabulary;
use vjump::tcn::{predict, ModelWeights};
use vjump::Error;

/// Length of the vector written by [`vjump_extract_features`].
pub const VJUMP_FEATURE_DIM: usize = 145;

/// Channels per sample in every sample buffer.
pub const VJUMP_CHANNELS: usize = 6;

// Literals above so the generated header can use them.
const _: () = assert!(VJUMP_FEATURE_DIM == FEATURE_DIM && VJUMP_CHANNELS == CHANNELS);

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VjumpStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or inconsistent with the model.
    InvalidArgument = 2,
    /// The file could not be read.
    Io = 3,
    /// The file was read but is not a valid checkpoint of the expected kind.
    Format = 4,
    /// A Rust panic was caught at the boundary; the handle is still valid.
    Internal = 5,
}

/// A trained segmentation network.
pub struct VjumpTcn {
    weights: ModelWeights,
}

/// A trained height regressor.
pub struct VjumpRegressor {
    model: TrainedRegressor,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(VjumpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => VjumpStatus::Io,
            Error::Checkpoint { .. } | Error::Parse { .. } => VjumpStatus::Format,
            Error::Dimension(_) | Error::Invalid(_) => VjumpStatus::InvalidArgument,
            Error::State(_) => VjumpStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(VjumpStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(VjumpStatus::InvalidArgument, message.into())
}

/// Runs `body`, recording any failure or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> VjumpStatus {
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure(VjumpStatus::Internal, format!("panic: {msg}")))
    });
    match outcome {
        Ok(()) => {
            set_last_error("");
            VjumpStatus::Ok
        }
        Err(Failure(status, message)) => {
            set_last_error(&message);
            status
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

/// Borrows a row-major `rows × cols` buffer.
unsafe fn matrix_arg<'a>(data: *const f64, rows: usize, cols: usize) -> Result<ArrayView2<'a, f64>, Failure> {
    if data.is_null() {
        return Err(null("sample buffer"));
    }
    if rows == 0 {
        return Err(invalid("sample buffer is empty"));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| invalid("sample buffer size overflows"))?;
    let slice = std::slice::from_raw_parts(data, len);
    Ok(ArrayView2::from_shape((rows, cols), slice).expect("length checked"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vjump_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message describing the last failed call on this thread, or an empty
/// string after a successful one. The pointer stays valid until the next
/// call into this library on the same thread.
#[no_mangle]
pub extern "C" fn vjump_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

// ─── segmentation network ──────────────────────────────────────────────────

/// Loads a segmentation checkpoint. On success `*out` receives a handle to
/// release with [`vjump_tcn_free`]; on failure it is set to null.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vjump_tcn_load(path: *const c_char, out: *mut *mut VjumpTcn) -> VjumpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let weights: ModelWeights = load_model(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(VjumpTcn { weights }));
        Ok(())
    })
}

/// Releases a handle from [`vjump_tcn_load`]. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vjump_tcn_free(model: *mut VjumpTcn) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of classes the network predicts, background included; 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vjump_tcn_num_classes(model: *const VjumpTcn) -> usize {
    model.as_ref().map_or(0, |m| m.weights.num_classes())
}

/// Labels every sample of a session. `samples` holds `n_samples × 6`
/// values; `labels` receives `n_samples` class ids.
///
/// # Safety
/// `samples` must point to `n_samples * 6` readable values and `labels` to
/// `n_samples` writable ones.
#[no_mangle]
pub unsafe extern "C" fn vjump_tcn_predict(
    model: *const VjumpTcn,
    samples: *const f64,
    n_samples: usize,
    labels: *mut u32,
) -> VjumpStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let x = matrix_arg(samples, n_samples, CHANNELS)?;
        let session = ImuSession::new("ffi", x.to_owned(), None)?;
        let (_, pred) = predict(&model.weights, &session)?;
        let out = std::slice::from_raw_parts_mut(labels, n_samples);
        for (o, p) in out.iter_mut().zip(pred) {
            *o = p as u32;
        }
        Ok(())
    })
}

// ─── features ──────────────────────────────────────────────────────────────

/// Computes the [`VJUMP_FEATURE_DIM`]-value feature vector of one ROI
/// window of `n_samples × 6` values. `class_id` indexes the default class
/// list (0 background, 1 CMJ, 2 Smash, 3 Block, 4 OS, 5 Squat, 6 Dive,
/// 7 Hop) and must be a height-eligible class (1–4).
///
/// # Safety
/// `window` must point to `n_samples * 6` readable values and `features`
/// to `features_len` writable ones.
#[no_mangle]
pub unsafe extern "C" fn vjump_extract_features(
    window: *const f64,
    n_samples: usize,
    class_id: u32,
    features: *mut f64,
    features_len: usize,
) -> VjumpStatus {
    guard(|| {
        if features.is_null() {
            return Err(null("features"));
        }
        if features_len < FEATURE_DIM {
            return Err(invalid(format!(
                "feature buffer holds {features_len} values, need {FEATURE_DIM}"
            )));
        }
        let x = matrix_arg(window, n_samples, CHANNELS)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("window contains non-finite values"));
        }
        let fv = extract_feature_vector(x, class_id as usize, &ClassVocabulary::default())?;
        std::slice::from_raw_parts_mut(features, FEATURE_DIM).copy_from_slice(&fv.values);
        Ok(())
    })
}

// ─── height regressor ──────────────────────────────────────────────────────

/// Loads a regressor checkpoint. On success `*out` receives a handle to
/// release with [`vjump_regressor_free`]; on failure it is set to null.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vjump_regressor_load(path: *const c_char, out: *mut *mut VjumpRegressor) -> VjumpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model: TrainedRegressor = load_model(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(VjumpRegressor { model }));
        Ok(())
    })
}

/// Releases a handle from [`vjump_regressor_load`]. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vjump_regressor_free(model: *mut VjumpRegressor) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of features the regressor expects; 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vjump_regressor_input_dim(model: *const VjumpRegressor) -> usize {
    model.as_ref().map_or(0, |m| m.model.input_dim)
}

/// Predicts jump heights in meters for `n_rows` feature rows stored
/// row-major with `n_features` values each.
///
/// # Safety
/// `features` must point to `n_rows * n_features` readable values and
/// `heights` to `n_rows` writable ones.
#[no_mangle]
pub unsafe extern "C" fn vjump_regressor_predict(
    model: *const VjumpRegressor,
    features: *const f64,
    n_rows: usize,
    n_features: usize,
    heights: *mut f64,
) -> VjumpStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if heights.is_null() {
            return Err(null("heights"));
        }
        if n_features != model.model.input_dim {
            return Err(invalid(format!(
                "regressor expects {} features per row, got {n_features}",
                model.model.input_dim
            )));
        }
        let x = matrix_arg(features, n_rows, n_features)?;
        let pred = model.model.predict_matrix(x)?;
        std::slice::from_raw_parts_mut(heights, n_rows).copy_from_slice(&pred);
        Ok(())
    })
}
