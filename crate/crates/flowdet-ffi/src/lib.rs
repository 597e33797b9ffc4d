//! C ABI for the flowdet detector.
//!
//! A trained checkpoint is loaded into an opaque [`FdDetector`] handle;
//! callers score raw feature windows (row-major `window_len x feature_count`
//! doubles, same column order and units as the training CSV) and get back
//! probabilities and thresholded labels. The embedded feature encoder is
//! applied internally, so scores match the `flowdet` CLI bit for bit.
//!
//! Every fallible function returns an [`FdStatus`]; on failure a
//! human-readable message is retrievable once via
//! [`fd_last_error_message`]. Handles are not thread-safe for concurrent
//! mutation but scoring is read-only, so sharing a handle across threads
//! for scoring is fine.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use flowdet::model::Checkpoint;
use flowdet::nn::Mat;
use flowdet::Error;

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument value was rejected (bad dimensions, bad path encoding).
    InvalidArgument = 2,
    /// The checkpoint file could not be read.
    Io = 3,
    /// The checkpoint file is not a valid checkpoint.
    CorruptCheckpoint = 4,
    /// The checkpoint format version is unsupported.
    VersionMismatch = 5,
    /// Window dimensions do not match the model.
    ShapeMismatch = 6,
    /// Internal failure (a panic was caught).
    Internal = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let cstring = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn status_for(e: &Error) -> FdStatus {
    match e {
        Error::Io(_) => FdStatus::Io,
        Error::VersionMismatch { .. } => FdStatus::VersionMismatch,
        Error::CorruptCheckpoint(_) => FdStatus::CorruptCheckpoint,
        Error::ShapeMismatch(_) | Error::ArityMismatch { .. } => FdStatus::ShapeMismatch,
        _ => FdStatus::InvalidArgument,
    }
}

fn fail(e: &Error) -> FdStatus {
    let status = status_for(e);
    set_error(e.to_string());
    status
}

fn guard<F: FnOnce() -> FdStatus>(f: F) -> FdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            FdStatus::Internal
        }
    }
}

/// Loaded model + encoder + threshold. Opaque to C callers.
pub struct FdDetector {
    checkpoint: Checkpoint,
}

impl FdDetector {
    fn score_one(
        &self,
        raw: &[f64],
        window_len: usize,
        feature_count: usize,
    ) -> Result<f64, Error> {
        let model_cfg = &self.checkpoint.model.config;
        if window_len != model_cfg.window_len || feature_count != model_cfg.feature_count {
            return Err(Error::ShapeMismatch(format!(
                "window is {window_len}x{feature_count}, model expects {}x{}",
                model_cfg.window_len, model_cfg.feature_count
            )));
        }
        let mut data = raw.to_vec();
        for row in data.chunks_mut(feature_count) {
            self.checkpoint.encoder.transform_row(row)?;
        }
        let x = Mat::from_vec(window_len, feature_count, data)?;
        self.checkpoint.model.forward_eval(&x)
    }
}

/// Load a checkpoint JSON file into a new detector handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle. On success the caller owns the handle and
/// must release it with [`fd_detector_free`].
#[no_mangle]
pub unsafe extern "C" fn fd_detector_load(
    path: *const c_char,
    out: *mut *mut FdDetector,
) -> FdStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            set_error("null argument".into());
            return FdStatus::NullArgument;
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("checkpoint path is not valid UTF-8".into());
                return FdStatus::InvalidArgument;
            }
        };
        match Checkpoint::load(path) {
            Ok(checkpoint) => {
                *out = Box::into_raw(Box::new(FdDetector { checkpoint }));
                FdStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a handle returned by [`fd_detector_load`]. Null is a no-op.
///
/// # Safety
/// `detector` must be a handle from [`fd_detector_load`] that has not been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn fd_detector_free(detector: *mut FdDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}

/// Window length (time steps) the model expects; 0 if `detector` is null.
///
/// # Safety
/// `detector` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fd_detector_window_len(detector: *const FdDetector) -> usize {
    detector
        .as_ref()
        .map(|d| d.checkpoint.model.config.window_len)
        .unwrap_or(0)
}

/// Feature count per time step the model expects; 0 if `detector` is null.
///
/// # Safety
/// `detector` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fd_detector_feature_count(detector: *const FdDetector) -> usize {
    detector
        .as_ref()
        .map(|d| d.checkpoint.model.config.feature_count)
        .unwrap_or(0)
}

/// Decision threshold stored in the checkpoint; NaN if `detector` is null.
///
/// # Safety
/// `detector` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fd_detector_threshold(detector: *const FdDetector) -> f64 {
    detector
        .as_ref()
        .map(|d| d.checkpoint.threshold)
        .unwrap_or(f64::NAN)
}

/// Score one raw window. `features` holds `window_len * feature_count`
/// doubles, row-major, oldest time step first, raw (un-normalized) values.
/// Writes the malicious-probability into `out_score`.
///
/// # Safety
/// `features` must point to `window_len * feature_count` readable doubles
/// and `out_score` to a writable double; `detector` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fd_detector_score(
    detector: *const FdDetector,
    features: *const f64,
    window_len: usize,
    feature_count: usize,
    out_score: *mut f64,
) -> FdStatus {
    fd_detector_score_batch(detector, features, 1, window_len, feature_count, out_score)
}

/// Score `window_count` raw windows laid out back to back; one score is
/// written per window.
///
/// # Safety
/// `features` must point to `window_count * window_len * feature_count`
/// readable doubles and `out_scores` to `window_count` writable doubles;
/// `detector` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fd_detector_score_batch(
    detector: *const FdDetector,
    features: *const f64,
    window_count: usize,
    window_len: usize,
    feature_count: usize,
    out_scores: *mut f64,
) -> FdStatus {
    guard(|| {
        let Some(d) = detector.as_ref() else {
            set_error("null detector".into());
            return FdStatus::NullArgument;
        };
        if features.is_null() || out_scores.is_null() {
            set_error("null buffer argument".into());
            return FdStatus::NullArgument;
        }
        if window_count == 0 || window_len == 0 || feature_count == 0 {
            set_error("window_count, window_len and feature_count must be positive".into());
            return FdStatus::InvalidArgument;
        }
        let stride = window_len * feature_count;
        let input = std::slice::from_raw_parts(features, window_count * stride);
        let output = std::slice::from_raw_parts_mut(out_scores, window_count);
        for (w, slot) in output.iter_mut().enumerate() {
            match d.score_one(
                &input[w * stride..(w + 1) * stride],
                window_len,
                feature_count,
            ) {
                Ok(score) => *slot = score,
                Err(e) => return fail(&e),
            }
        }
        FdStatus::Ok
    })
}

/// Score one raw window and also apply the checkpoint threshold:
/// `out_label` receives 1 (malicious) iff score >= threshold.
///
/// # Safety
/// Same requirements as [`fd_detector_score`], plus `out_label` must be a
/// writable int.
#[no_mangle]
pub unsafe extern "C" fn fd_detector_classify(
    detector: *const FdDetector,
    features: *const f64,
    window_len: usize,
    feature_count: usize,
    out_score: *mut f64,
    out_label: *mut i32,
) -> FdStatus {
    guard(|| {
        if out_label.is_null() || out_score.is_null() {
            set_error("null output argument".into());
            return FdStatus::NullArgument;
        }
        let status = fd_detector_score(detector, features, window_len, feature_count, out_score);
        if status == FdStatus::Ok {
            let threshold = (*detector).checkpoint.threshold;
            *out_label = i32::from(*out_score >= threshold);
        }
        status
    })
}

/// Take the last error message for this thread, or null if none. The caller
/// owns the returned string and must free it with [`fd_string_free`].
#[no_mangle]
pub extern "C" fn fd_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow_mut()
            .take()
            .map(CString::into_raw)
            .unwrap_or(std::ptr::null_mut())
    })
}

/// Free a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be a pointer returned by [`fd_last_error_message`] that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn fd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
