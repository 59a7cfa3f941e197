//! C ABI over the vidsum library.
//!
//! Every fallible function returns a [`VsStatus`]; on anything other than
//! `VS_OK` a description is available from [`vs_last_error`] on the same
//! thread. Handles are opaque and must be released with their `_free`
//! function. Pointers returned through out-parameters borrow from the handle
//! they came from and stay valid until it is freed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vidsum::dataset::{load_dataset, Dataset};
use vidsum::evaluator::{self, Predictions};
use vidsum::trainer::{self, Checkpoint};
use vidsum::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Io = 4,
    Format = 5,
    Shape = 6,
    NonFinite = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

/// A loaded dataset.
pub struct VsDataset {
    inner: Dataset,
}

/// A loaded checkpoint.
pub struct VsModel {
    inner: Checkpoint,
}

/// Per-video scores produced by a model on a dataset.
pub struct VsPredictions {
    inner: Predictions,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> VsStatus {
    match err {
        Error::Shape { .. } | Error::SequenceTooShort { .. } => VsStatus::Shape,
        Error::NonFinite(_) => VsStatus::NonFinite,
        Error::PayloadSize { .. } | Error::Format(_) | Error::Json(_) => VsStatus::Format,
        Error::Io { .. } => VsStatus::Io,
        Error::Range { .. } => VsStatus::OutOfRange,
        _ => VsStatus::InvalidArgument,
    }
}

struct Fail(VsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(VsStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, records any failure (including a panic) and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VsStatus::Internal
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: caller passes either null or a live pointer of the right type
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: as above, for writable out-parameters
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    // SAFETY: non-null and NUL-terminated per the contract
    let s = unsafe { CStr::from_ptr(p) };
    s.to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(VsStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees `len` readable elements at `p`
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn video(ds: &Dataset, index: usize) -> Result<&vidsum::dataset::VideoRecord, Fail> {
    ds.records().get(index).ok_or_else(|| {
        Fail(
            VsStatus::OutOfRange,
            format!("video index {index} out of range for {} videos", ds.len()),
        )
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer is valid until the next call into this library on the thread.
#[no_mangle]
pub extern "C" fn vs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a dataset from its manifest.
///
/// # Safety
/// `manifest_path` must be null or a NUL-terminated string; `out` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn vs_dataset_load(manifest_path: *const c_char, out: *mut *mut VsDataset) -> VsStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        let path = unsafe { path_arg(manifest_path) }?;
        let inner = load_dataset(path)?;
        *out = Box::into_raw(Box::new(VsDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from [`vs_dataset_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vs_dataset_free(ds: *mut VsDataset) {
    if !ds.is_null() {
        // SAFETY: allocated by Box::into_raw in vs_dataset_load
        drop(unsafe { Box::from_raw(ds) });
    }
}

/// Number of videos.
///
/// # Safety
/// `ds` must be a live handle or null; `out` writable or null.
#[no_mangle]
pub unsafe extern "C" fn vs_dataset_len(ds: *const VsDataset, out: *mut usize) -> VsStatus {
    guard(|| {
        let ds = unsafe { borrow(ds, "ds") }?;
        *unsafe { out_ref(out, "out") }? = ds.inner.len();
        Ok(())
    })
}

/// Borrowed view of one video's importance scores.
///
/// # Safety
/// `ds` must be a live handle or null; `out_ptr` and `out_len` writable or null.
#[no_mangle]
pub unsafe extern "C" fn vs_dataset_importance(
    ds: *const VsDataset,
    video_index: usize,
    out_ptr: *mut *const f32,
    out_len: *mut usize,
) -> VsStatus {
    guard(|| {
        let ds = unsafe { borrow(ds, "ds") }?;
        let out_ptr = unsafe { out_ref(out_ptr, "out_ptr") }?;
        let out_len = unsafe { out_ref(out_len, "out_len") }?;
        let rec = video(&ds.inner, video_index)?;
        *out_ptr = rec.importance.data().as_ptr();
        *out_len = rec.importance.len();
        Ok(())
    })
}

/// Loads a training checkpoint.
///
/// # Safety
/// Same contract as [`vs_dataset_load`].
#[no_mangle]
pub unsafe extern "C" fn vs_model_load(checkpoint_path: *const c_char, out: *mut *mut VsModel) -> VsStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        let path = unsafe { path_arg(checkpoint_path) }?;
        let inner = Checkpoint::load(path)?;
        *out = Box::into_raw(Box::new(VsModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`vs_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vs_model_free(model: *mut VsModel) {
    if !model.is_null() {
        // SAFETY: allocated by Box::into_raw in vs_model_load
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Scores every video of `ds`.
///
/// # Safety
/// `model` and `ds` must be live handles or null; `out` writable or null.
#[no_mangle]
pub unsafe extern "C" fn vs_model_predict(
    model: *const VsModel,
    ds: *const VsDataset,
    out: *mut *mut VsPredictions,
) -> VsStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        let model = unsafe { borrow(model, "model") }?;
        let ds = unsafe { borrow(ds, "ds") }?;
        let inner = trainer::predict_dataset(&model.inner, &ds.inner)?;
        *out = Box::into_raw(Box::new(VsPredictions { inner }));
        Ok(())
    })
}

/// # Safety
/// `preds` must be null or a handle from [`vs_model_predict`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vs_predictions_free(preds: *mut VsPredictions) {
    if !preds.is_null() {
        // SAFETY: allocated by Box::into_raw in vs_model_predict
        drop(unsafe { Box::from_raw(preds) });
    }
}

/// Borrowed view of the scores for the video at `video_index`.
///
/// # Safety
/// `preds` must be a live handle or null; `out_ptr` and `out_len` writable or null.
#[no_mangle]
pub unsafe extern "C" fn vs_predictions_scores(
    preds: *const VsPredictions,
    video_index: usize,
    out_ptr: *mut *const f64,
    out_len: *mut usize,
) -> VsStatus {
    guard(|| {
        let preds = unsafe { borrow(preds, "preds") }?;
        let out_ptr = unsafe { out_ref(out_ptr, "out_ptr") }?;
        let out_len = unsafe { out_ref(out_len, "out_len") }?;
        let v = preds.inner.videos.get(video_index).ok_or_else(|| {
            Fail(
                VsStatus::OutOfRange,
                format!("video index {video_index} out of range for {} videos", preds.inner.videos.len()),
            )
        })?;
        *out_ptr = v.scores.as_ptr();
        *out_len = v.scores.len();
        Ok(())
    })
}

/// Mean summary score of `preds` against the importance in `ds`.
///
/// # Safety
/// Handles live or null; `out` writable or null.
#[no_mangle]
pub unsafe extern "C" fn vs_predictions_summary_score(
    preds: *const VsPredictions,
    ds: *const VsDataset,
    n_s: usize,
    out: *mut f64,
) -> VsStatus {
    guard(|| {
        let preds = unsafe { borrow(preds, "preds") }?;
        let ds = unsafe { borrow(ds, "ds") }?;
        let out = unsafe { out_ref(out, "out") }?;
        let scores = preds.inner.aligned_to(&ds.inner)?;
        *out = evaluator::score_predictions(&scores, &evaluator::ground_truth(&ds.inner), n_s)?.mean;
        Ok(())
    })
}

/// Indices of the `k` highest scores, ascending; ties go to the lower index.
/// Writes `min(k, len)` indices into `out` (capacity `out_cap`) and the count
/// into `out_written`.
///
/// # Safety
/// `scores` must point to `len` readable values (or be null when `len` is 0);
/// `out` must have room for `out_cap` values; `out_written` writable or null.
#[no_mangle]
pub unsafe extern "C" fn vs_top_k(
    scores: *const f64,
    len: usize,
    k: usize,
    out: *mut usize,
    out_cap: usize,
    out_written: *mut usize,
) -> VsStatus {
    guard(|| {
        let scores = unsafe { slice_arg(scores, len, "scores") }?;
        let written = unsafe { out_ref(out_written, "out_written") }?;
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Fail(VsStatus::NonFinite, "non-finite value in scores".into()));
        }
        let pick = evaluator::top_k_summary(scores, k);
        *written = pick.len();
        if pick.len() > out_cap {
            return Err(Fail(
                VsStatus::BufferTooSmall,
                format!("need room for {} indices, have {out_cap}", pick.len()),
            ));
        }
        if !pick.is_empty() {
            if out.is_null() {
                return Err(null("out"));
            }
            // SAFETY: out has room for out_cap >= pick.len() values
            unsafe { ptr::copy_nonoverlapping(pick.as_ptr(), out, pick.len()) };
        }
        Ok(())
    })
}

/// Summary ratio of one video: importance of the `n_s` submitted segments
/// over the importance of the best `n_s` segments.
///
/// # Safety
/// `importance` must point to `len` values and `submission` to `n_s`
/// values; `out` writable or null.
#[no_mangle]
pub unsafe extern "C" fn vs_summary_ratio(
    importance: *const f64,
    len: usize,
    submission: *const usize,
    n_s: usize,
    out: *mut f64,
) -> VsStatus {
    guard(|| {
        let gt = unsafe { slice_arg(importance, len, "importance") }?;
        let sub = unsafe { slice_arg(submission, n_s, "submission") }?;
        let out = unsafe { out_ref(out, "out") }?;
        *out = evaluator::summary_score(&[sub.to_vec()], &[gt.to_vec()], n_s)?.mean;
        Ok(())
    })
}

/// Expected summary score of uniformly random `n_s`-subsets on `ds`, and the
/// standard deviation of a single random submission's score.
///
/// # Safety
/// `ds` live or null; `out_mean` writable or null; `out_std` writable or null
/// (null skips it).
#[no_mangle]
pub unsafe extern "C" fn vs_baseline_exact(
    ds: *const VsDataset,
    n_s: usize,
    out_mean: *mut f64,
    out_std: *mut f64,
) -> VsStatus {
    guard(|| {
        let ds = unsafe { borrow(ds, "ds") }?;
        let mean = unsafe { out_ref(out_mean, "out_mean") }?;
        let report = evaluator::exact_baseline(&ds.inner, n_s)?;
        *mean = report.mean;
        if let Some(std) = unsafe { out_std.as_mut() } {
            *std = report.std;
        }
        Ok(())
    })
}
