//! C ABI for the spcascade segmentation library.
//!
//! Objects cross the boundary as opaque handles created by `*_load` or
//! `*_generate` functions and released with the matching `*_free`.
//! Every fallible call returns an `SpcStatus`; on failure a message is
//! available from `spc_last_error` on the same thread until the next
//! failing call. Panics are caught and reported as `SPC_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use spcascade::commands::{load_fold_models, Work};
use spcascade::config::PipelineConfig;
use spcascade::forest::ForestModel;
use spcascade::pipeline::{segment, FoldModels, Prepared};
use spcascade::postmetrics::compute_metrics;
use spcascade::volume::{
    body_mask, generate_phantom, load_mask, load_volume, save_mask, PhantomSpec, SegmentationMask,
    Volume3D,
};
use spcascade::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[allow(non_camel_case_types)]
pub enum SpcStatus {
    SPC_OK = 0,
    SPC_ERROR = 1,
    SPC_CONFIG = 2,
    SPC_MISSING_INPUT = 3,
    SPC_NUMERIC = 4,
    SPC_NULL_POINTER = 5,
    SPC_INVALID_ARGUMENT = 6,
    SPC_FORMAT = 7,
    SPC_INTERNAL = 8,
}

/// Opaque intensity volume.
pub struct SpcVolume(Volume3D);
/// Opaque binary mask.
pub struct SpcMask(SegmentationMask);
/// Opaque random forest.
pub struct SpcForest(ForestModel);
/// Opaque trained pipeline: configuration plus one fold's models.
pub struct SpcSegmenter {
    cfg: PipelineConfig,
    models: FoldModels,
}

/// Overlap metrics of a prediction against ground truth.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpcMetrics {
    pub dice: f64,
    pub jaccard: f64,
    pub precision: f64,
    pub recall: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SpcStatus {
    match e.root() {
        Error::Config { .. } => SpcStatus::SPC_CONFIG,
        Error::MissingInput(_) => SpcStatus::SPC_MISSING_INPUT,
        Error::Numeric(_) => SpcStatus::SPC_NUMERIC,
        Error::InvalidArgument(_) | Error::DimMismatch(_) | Error::SingleClass { .. } => {
            SpcStatus::SPC_INVALID_ARGUMENT
        }
        Error::Format(_) | Error::Header { .. } | Error::PayloadSize { .. } => {
            SpcStatus::SPC_FORMAT
        }
        _ => SpcStatus::SPC_ERROR,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
    Arg(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SpcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpcStatus::SPC_OK,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SpcStatus::SPC_NULL_POINTER
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            SpcStatus::SPC_INVALID_ARGUMENT
        }
        Err(_) => {
            set_error("internal panic".into());
            SpcStatus::SPC_INTERNAL
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_dims(out: *mut usize, dims: [usize; 3]) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("dims"));
    }
    std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&dims);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a volume from `<path>.json` and `<path>.raw`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spc_volume_load(
    path: *const c_char,
    out: *mut *mut SpcVolume,
) -> SpcStatus {
    guard(|| put(out, SpcVolume(load_volume(&path_arg(path, "path")?)?)))
}

/// Writes the volume dimensions (x, y, z) into `dims[3]`.
///
/// # Safety
/// `vol` must be a live handle and `dims` point to three writable values.
#[no_mangle]
pub unsafe extern "C" fn spc_volume_dims(vol: *const SpcVolume, dims: *mut usize) -> SpcStatus {
    guard(|| put_dims(dims, handle(vol, "vol")?.0.dims()))
}

/// Borrowed pointer to the x-fastest intensities, or NULL for a NULL handle.
///
/// # Safety
/// `vol` must be NULL or a live handle; the data lives as long as it.
#[no_mangle]
pub unsafe extern "C" fn spc_volume_data(vol: *const SpcVolume) -> *const i16 {
    vol.as_ref().map_or(ptr::null(), |v| v.0.values().as_ptr())
}

/// # Safety
/// `vol` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn spc_volume_free(vol: *mut SpcVolume) {
    if !vol.is_null() {
        drop(Box::from_raw(vol));
    }
}

/// Generates the default phantom for `seed`.
///
/// # Safety
/// `vol` and `gt` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn spc_phantom_generate(
    seed: u64,
    vol: *mut *mut SpcVolume,
    gt: *mut *mut SpcMask,
) -> SpcStatus {
    guard(|| {
        if vol.is_null() || gt.is_null() {
            return Err(Fail::Null("out"));
        }
        let (v, m) = generate_phantom(&PhantomSpec {
            seed,
            ..PhantomSpec::default()
        })?;
        put(vol, SpcVolume(v))?;
        put(gt, SpcMask(m))
    })
}

/// Body region of a volume: voxels above `air_threshold` after table
/// removal and hole filling.
///
/// # Safety
/// `vol` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spc_body_mask(
    vol: *const SpcVolume,
    air_threshold: i16,
    out: *mut *mut SpcMask,
) -> SpcStatus {
    guard(|| {
        put(
            out,
            SpcMask(body_mask(&handle(vol, "vol")?.0, air_threshold)),
        )
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spc_mask_load(path: *const c_char, out: *mut *mut SpcMask) -> SpcStatus {
    guard(|| put(out, SpcMask(load_mask(&path_arg(path, "path")?)?)))
}

/// # Safety
/// `mask` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn spc_mask_save(mask: *const SpcMask, path: *const c_char) -> SpcStatus {
    guard(|| {
        Ok(save_mask(
            &handle(mask, "mask")?.0,
            &path_arg(path, "path")?,
        )?)
    })
}

/// # Safety
/// `mask` must be a live handle and `dims` point to three writable values.
#[no_mangle]
pub unsafe extern "C" fn spc_mask_dims(mask: *const SpcMask, dims: *mut usize) -> SpcStatus {
    guard(|| put_dims(dims, handle(mask, "mask")?.0.dims()))
}

/// Number of foreground voxels, or 0 for a NULL handle.
///
/// # Safety
/// `mask` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spc_mask_count(mask: *const SpcMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.count())
}

/// Borrowed pointer to the 0/1 voxels, or NULL for a NULL handle.
///
/// # Safety
/// `mask` must be NULL or a live handle; the data lives as long as it.
#[no_mangle]
pub unsafe extern "C" fn spc_mask_data(mask: *const SpcMask) -> *const u8 {
    mask.as_ref().map_or(ptr::null(), |m| m.0.values().as_ptr())
}

/// # Safety
/// `mask` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn spc_mask_free(mask: *mut SpcMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Dice, Jaccard, precision and recall of `pred` against `gt`.
///
/// # Safety
/// Both masks must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spc_metrics(
    pred: *const SpcMask,
    gt: *const SpcMask,
    out: *mut SpcMetrics,
) -> SpcStatus {
    guard(|| {
        let m = compute_metrics(&handle(pred, "pred")?.0, &handle(gt, "gt")?.0)?;
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        *out = SpcMetrics {
            dice: m.dice,
            jaccard: m.jaccard,
            precision: m.precision,
            recall: m.recall,
        };
        Ok(())
    })
}

/// Loads a serialized random forest.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spc_forest_load(
    path: *const c_char,
    out: *mut *mut SpcForest,
) -> SpcStatus {
    guard(|| put(out, SpcForest(ForestModel::load(&path_arg(path, "path")?)?)))
}

/// Feature count the forest expects, or 0 for a NULL handle.
///
/// # Safety
/// `forest` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spc_forest_n_features(forest: *const SpcForest) -> usize {
    forest.as_ref().map_or(0, |f| f.0.n_features())
}

/// Positive-class probability of one feature row of length `n`.
///
/// # Safety
/// `forest` must be a live handle, `features` point to `n` floats and
/// `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spc_forest_predict(
    forest: *const SpcForest,
    features: *const f32,
    n: usize,
    out: *mut f64,
) -> SpcStatus {
    guard(|| {
        let f = handle(forest, "forest")?;
        if features.is_null() {
            return Err(Fail::Null("features"));
        }
        let p = f.0.predict_proba(std::slice::from_raw_parts(features, n))?;
        *out.as_mut().ok_or(Fail::Null("out"))? = p;
        Ok(())
    })
}

/// # Safety
/// `forest` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn spc_forest_free(forest: *mut SpcForest) {
    if !forest.is_null() {
        drop(Box::from_raw(forest));
    }
}

/// Loads the models of one fold from a work directory (`fold < 0` selects
/// models trained on the whole corpus). `config` may be NULL for the
/// default configuration.
///
/// # Safety
/// `work_dir` must be a NUL-terminated string, `config` NULL or one, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spc_segmenter_load(
    config: *const c_char,
    work_dir: *const c_char,
    fold: i32,
    out: *mut *mut SpcSegmenter,
) -> SpcStatus {
    guard(|| {
        let cfg = if config.is_null() {
            PipelineConfig::default()
        } else {
            PipelineConfig::load(&path_arg(config, "config")?)?
        };
        let fold = usize::try_from(fold).ok();
        let models = load_fold_models(&Work::new(&path_arg(work_dir, "work_dir")?), fold)?;
        put(out, SpcSegmenter { cfg, models })
    })
}

/// Segments a volume end to end.
///
/// # Safety
/// `seg` and `vol` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spc_segment(
    seg: *const SpcSegmenter,
    vol: *const SpcVolume,
    out: *mut *mut SpcMask,
) -> SpcStatus {
    guard(|| {
        let s = handle(seg, "seg")?;
        let v = handle(vol, "vol")?;
        let p = Prepared::new("volume", v.0.clone(), None, &s.cfg)?;
        put(out, SpcMask(segment(&p, &s.models, &s.cfg)?.mask))
    })
}

/// # Safety
/// `seg` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn spc_segmenter_free(seg: *mut SpcSegmenter) {
    if !seg.is_null() {
        drop(Box::from_raw(seg));
    }
}
