//! C ABI over `artic-core`.
//!
//! Every function returns an [`ArticStatus`]; outputs go through pointer
//! arguments. On failure, [`artic_last_error`] describes the most recent
//! error on the calling thread. Handles are opaque and must be released
//! with their matching `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use artic_core::allocator::{build_frame_budget, cosine_similarity, patch_bits, qp_from_correlation};
use artic_core::controller::{select_frame_rate, ControllerConfig, RateController, RateDecision};
use artic_core::metrics::{write_csv, CsvRow};
use artic_core::runner::{run_scenario, RunOptions};
use artic_core::{mapfile, CorrelationMap, Error, FeatureVector, RateModelParams, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArticStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Config = 4,
    NotFound = 5,
    MapFormat = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArticRateDecision {
    /// Capture rate in frames per second.
    pub rate: f64,
    /// Frames per MLLM sampling interval.
    pub k: u32,
    /// True when `r_max` capped the rate below the reliability target.
    pub residual_violation: bool,
}

impl From<RateDecision> for ArticRateDecision {
    fn from(d: RateDecision) -> Self {
        Self {
            rate: d.rate,
            k: d.k,
            residual_violation: d.residual_violation,
        }
    }
}

/// Opaque correlation map.
pub struct ArticCorrelationMap {
    inner: CorrelationMap,
}

/// Opaque loss-adaptive rate controller.
pub struct ArticController {
    inner: RateController,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ArticStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config { .. } => ArticStatus::Config,
            Error::MissingFile(_) => ArticStatus::NotFound,
            Error::MapFormat(_) => ArticStatus::MapFormat,
            Error::Io(_) | Error::Csv(_) => ArticStatus::Io,
            _ => ArticStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ArticStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ArticStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            ArticStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(ArticStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn utf8<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ArticStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn artic_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Cosine similarity of two `len`-element vectors.
///
/// # Safety
/// `a` and `b` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artic_cosine_similarity(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> ArticStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let a = FeatureVector::new(slice(a, len, "a")?.to_vec())?;
        let b = FeatureVector::new(slice(b, len, "b")?.to_vec())?;
        *out = cosine_similarity(&a, &b)?;
        Ok(())
    })
}

/// QP in `[0, 51]` for correlation `rho` and exponent `gamma`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artic_qp_from_correlation(rho: f64, gamma: f64, out: *mut u8) -> ArticStatus {
    guard(|| {
        *out_ref(out, "out")? = qp_from_correlation(rho, gamma)?;
        Ok(())
    })
}

/// Bits of one patch at `qp` under the exponential rate model.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artic_patch_bits(
    qp: u8,
    ref_bits_per_patch: f64,
    ref_qp: u8,
    halving_step: f64,
    out: *mut f64,
) -> ArticStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let params = RateModelParams::new(ref_bits_per_patch, ref_qp, halving_step)?;
        *out = patch_bits(qp, &params)?;
        Ok(())
    })
}

/// Minimum capture rate meeting the `1 - eps` group delivery target.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artic_select_frame_rate(
    p: f64,
    kappa: f64,
    mllm_rate: f64,
    eps: f64,
    r_max: f64,
    out: *mut ArticRateDecision,
) -> ArticStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = select_frame_rate(p, kappa, mllm_rate, eps, r_max)?.into();
        Ok(())
    })
}

/// Builds a map from `rows * cols` row-major values in `[-1, 1]`.
///
/// # Safety
/// `values` must point to `len` readable floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artic_map_new(
    rows: usize,
    cols: usize,
    patch_size: u16,
    values: *const f32,
    len: usize,
    out: *mut *mut ArticCorrelationMap,
) -> ArticStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let inner = CorrelationMap::new(rows, cols, patch_size, slice(values, len, "values")?.to_vec())?;
        *out = Box::into_raw(Box::new(ArticCorrelationMap { inner }));
        Ok(())
    })
}

/// Reads a correlation-map file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artic_map_load(path: *const c_char, out: *mut *mut ArticCorrelationMap) -> ArticStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let inner = mapfile::load(utf8(path, "path")?)?;
        *out = Box::into_raw(Box::new(ArticCorrelationMap { inner }));
        Ok(())
    })
}

/// Writes `map` as a correlation-map file.
///
/// # Safety
/// `map` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn artic_map_save(map: *const ArticCorrelationMap, path: *const c_char) -> ArticStatus {
    guard(|| {
        let map = map.as_ref().ok_or_else(|| null("map"))?;
        mapfile::save(&map.inner, utf8(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `map` must come from this library; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn artic_map_dims(
    map: *const ArticCorrelationMap,
    rows: *mut usize,
    cols: *mut usize,
    patch_size: *mut u16,
) -> ArticStatus {
    guard(|| {
        let map = map.as_ref().ok_or_else(|| null("map"))?;
        *out_ref(rows, "rows")? = map.inner.rows();
        *out_ref(cols, "cols")? = map.inner.cols();
        *out_ref(patch_size, "patch_size")? = map.inner.patch_size();
        Ok(())
    })
}

/// Releases a map. Null is ignored.
///
/// # Safety
/// `map` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn artic_map_free(map: *mut ArticCorrelationMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Per-patch QPs and total bits of one frame coded with `map`.
///
/// `qp_out` may be null; otherwise it must hold `rows * cols` bytes, given
/// in `qp_len`.
///
/// # Safety
/// `map` must come from this library; `total_bits` must be writable;
/// `qp_out`, when non-null, must point to `qp_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn artic_frame_budget(
    map: *const ArticCorrelationMap,
    gamma: f64,
    ref_bits_per_patch: f64,
    ref_qp: u8,
    halving_step: f64,
    total_bits: *mut f64,
    qp_out: *mut u8,
    qp_len: usize,
) -> ArticStatus {
    guard(|| {
        let map = map.as_ref().ok_or_else(|| null("map"))?;
        let total_bits = out_ref(total_bits, "total_bits")?;
        let params = RateModelParams::new(ref_bits_per_patch, ref_qp, halving_step)?;
        let budget = build_frame_budget(&map.inner, gamma, &params)?;
        if !qp_out.is_null() {
            let qps = budget.qp_map().values();
            if qp_len != qps.len() {
                return Err(Failure(
                    ArticStatus::InvalidArgument,
                    format!("qp_len is {qp_len}, map has {} patches", qps.len()),
                ));
            }
            std::slice::from_raw_parts_mut(qp_out, qp_len).copy_from_slice(qps);
        }
        *total_bits = budget.total_bits();
        Ok(())
    })
}

/// Creates a controller with the given parameters; others take defaults.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artic_controller_new(
    mllm_rate: f64,
    eps: f64,
    r_max: f64,
    alpha: f64,
    out: *mut *mut ArticController,
) -> ArticStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let inner = RateController::new(ControllerConfig {
            mllm_rate,
            epsilon: eps,
            r_max,
            alpha,
            ..ControllerConfig::default()
        })?;
        *out = Box::into_raw(Box::new(ArticController { inner }));
        Ok(())
    })
}

/// Feeds one epoch of loss feedback and the sizes of frames sent in it.
///
/// # Safety
/// `ctrl` must come from this library; `frame_sizes_bits` must point to
/// `n_frames` doubles (or be null with `n_frames == 0`); `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn artic_controller_on_epoch(
    ctrl: *mut ArticController,
    acked: u64,
    lost: u64,
    frame_sizes_bits: *const f64,
    n_frames: usize,
    mtu_payload_bits: f64,
    out: *mut ArticRateDecision,
) -> ArticStatus {
    guard(|| {
        let ctrl = ctrl.as_mut().ok_or_else(|| null("ctrl"))?;
        let out = out_ref(out, "out")?;
        let sizes = slice(frame_sizes_bits, n_frames, "frame_sizes_bits")?;
        *out = ctrl.inner.on_epoch(acked, lost, sizes, mtu_payload_bits)?.into();
        Ok(())
    })
}

/// Current loss estimate of the controller.
///
/// # Safety
/// `ctrl` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artic_controller_loss(ctrl: *const ArticController, out: *mut f64) -> ArticStatus {
    guard(|| {
        let ctrl = ctrl.as_ref().ok_or_else(|| null("ctrl"))?;
        *out_ref(out, "out")? = ctrl.inner.loss().p;
        Ok(())
    })
}

/// Releases a controller. Null is ignored.
///
/// # Safety
/// `ctrl` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn artic_controller_free(ctrl: *mut ArticController) {
    if !ctrl.is_null() {
        drop(Box::from_raw(ctrl));
    }
}

/// Runs the scenario config at `config_path` for every configured seed and
/// returns the CSV (header included) in `*csv_out`. Free it with
/// [`artic_string_free`].
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `csv_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artic_run_scenario(
    config_path: *const c_char,
    parallel: u32,
    csv_out: *mut *mut c_char,
) -> ArticStatus {
    guard(|| {
        let csv_out = out_ref(csv_out, "csv_out")?;
        let scenario = Scenario::load(utf8(config_path, "config_path")?)?;
        let opts = RunOptions {
            parallel: parallel.max(1) as usize,
            trace: false,
        };
        let rows: Vec<CsvRow> = run_scenario(&scenario, opts)?.into_iter().map(|r| r.row).collect();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf)?;
        let text = CString::new(buf).map_err(|e| Failure(ArticStatus::Io, e.to_string()))?;
        *csv_out = text.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn artic_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
