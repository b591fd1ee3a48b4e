//! C ABI bindings for the pcqa toolkit.
//!
//! The surface follows the usual opaque-handle pattern: constructors return
//! a status code and write a handle through an out-pointer, every handle has
//! a matching `_free`, and the last failure message of the calling thread is
//! available through [`pcqa_last_error_message`]. The matching C header is
//! generated into `include/pcqa_ffi.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::path::PathBuf;

use pcqa::features::extract_structural_features;
use pcqa::metrics::compute_report;
use pcqa::projection::{render_cube_projections, RenderConfig};
use pcqa::rating::{logits_to_probabilities, mos_to_level, MosRange};

/// Result codes of every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcqaStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// File could not be read or written.
    Io = 2,
    /// Input file or payload failed to parse.
    Parse = 3,
    /// Argument outside its documented domain.
    InvalidArgument = 4,
    /// Numerical routine failed.
    Compute = 5,
}

/// Opaque colored point cloud handle.
pub struct PcqaPointCloud {
    inner: pcqa::PointCloud,
}

/// Opaque trained regressor handle.
pub struct PcqaSvrModel {
    inner: pcqa::svr::SvrModel,
}

/// Agreement metrics between predictions and subjective scores.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PcqaMetricReport {
    pub srcc: f64,
    pub plcc: f64,
    pub krcc: f64,
    pub rmse: f64,
    pub n: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

fn fail(status: PcqaStatus, message: impl std::fmt::Display) -> PcqaStatus {
    set_error(message);
    status
}

/// Copies the calling thread's last error message into `buffer` (NUL
/// terminated, truncated to `length` bytes). Returns the full message
/// length in bytes, excluding the terminator.
///
/// # Safety
/// `buffer` must point to `length` writable bytes, or be null (then only
/// the required length is returned).
#[no_mangle]
pub unsafe extern "C" fn pcqa_last_error_message(buffer: *mut c_char, length: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buffer.is_null() && length > 0 {
            let n = bytes.len().min(length - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buffer, n);
                *buffer.add(n) = 0;
            }
        }
        bytes.len()
    })
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, PcqaStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(PcqaStatus::NullArgument);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        PcqaStatus::InvalidArgument
    })
}

/// Loads a colored point cloud from a PLY file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer. On
/// success `*out` owns the cloud and must be released with
/// [`pcqa_point_cloud_free`].
#[no_mangle]
pub unsafe extern "C" fn pcqa_point_cloud_load(
    path: *const c_char,
    out: *mut *mut PcqaPointCloud,
) -> PcqaStatus {
    if out.is_null() {
        return fail(PcqaStatus::NullArgument, "null out pointer");
    }
    let path = match unsafe { cstr_arg(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match pcqa::load_ply(path) {
        Ok(cloud) => {
            unsafe { *out = Box::into_raw(Box::new(PcqaPointCloud { inner: cloud })) };
            PcqaStatus::Ok
        }
        Err(err @ pcqa::pointcloud::PlyError::Io(_)) => fail(PcqaStatus::Io, err),
        Err(err) => fail(PcqaStatus::Parse, err),
    }
}

/// Releases a cloud handle; a null pointer is a no-op.
///
/// # Safety
/// `cloud` must come from [`pcqa_point_cloud_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pcqa_point_cloud_free(cloud: *mut PcqaPointCloud) {
    if !cloud.is_null() {
        drop(unsafe { Box::from_raw(cloud) });
    }
}

/// Writes the point count of the cloud to `out`.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pcqa_point_cloud_size(
    cloud: *const PcqaPointCloud,
    out: *mut usize,
) -> PcqaStatus {
    if cloud.is_null() || out.is_null() {
        return fail(PcqaStatus::NullArgument, "null argument");
    }
    unsafe { *out = (*cloud).inner.len() };
    PcqaStatus::Ok
}

/// Computes the structural feature vector over `scale_count` neighborhood
/// sizes: `out` receives `6 * scale_count` values ordered
/// (avg, std, entropy) x (linearity, planarity) x ascending scale.
///
/// # Safety
/// `scales` must hold `scale_count` entries and `out` must hold
/// `out_length >= 6 * scale_count` doubles.
#[no_mangle]
pub unsafe extern "C" fn pcqa_structural_features(
    cloud: *const PcqaPointCloud,
    scales: *const u32,
    scale_count: usize,
    out: *mut f64,
    out_length: usize,
) -> PcqaStatus {
    if cloud.is_null() || scales.is_null() || out.is_null() {
        return fail(PcqaStatus::NullArgument, "null argument");
    }
    let scales = unsafe { std::slice::from_raw_parts(scales, scale_count) };
    let scales: Vec<usize> = scales.iter().map(|&k| k as usize).collect();
    if out_length < 6 * scales.len() {
        return fail(
            PcqaStatus::InvalidArgument,
            format!("output buffer holds {out_length}, need {}", 6 * scales.len()),
        );
    }
    match extract_structural_features(unsafe { &(*cloud).inner }, &scales) {
        Ok(fv) => {
            let values = fv.values();
            unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len()) };
            PcqaStatus::Ok
        }
        Err(err) => fail(PcqaStatus::InvalidArgument, err),
    }
}

/// Renders the six cube-face projections as `<name>_face<k>.png` under
/// `out_dir`.
///
/// # Safety
/// `cloud` must be a live handle and `out_dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn pcqa_render_projections(
    cloud: *const PcqaPointCloud,
    resolution: u32,
    splat_radius: u32,
    margin: f64,
    out_dir: *const c_char,
) -> PcqaStatus {
    if cloud.is_null() {
        return fail(PcqaStatus::NullArgument, "null cloud");
    }
    let out_dir = match unsafe { cstr_arg(out_dir) } {
        Ok(p) => PathBuf::from(p),
        Err(status) => return status,
    };
    let cfg = RenderConfig {
        resolution,
        splat_radius,
        margin,
        ..RenderConfig::default()
    };
    if let Err(err) = cfg.validate() {
        return fail(PcqaStatus::InvalidArgument, err);
    }
    let set = render_cube_projections(unsafe { &(*cloud).inner }, &cfg);
    match set.save_pngs(&out_dir) {
        Ok(_) => PcqaStatus::Ok,
        Err(err) => fail(PcqaStatus::Io, err),
    }
}

/// Maps a MOS to its five-level rating: 1 = bad through 5 = excellent.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcqa_mos_to_level(
    mos: f64,
    mos_min: f64,
    mos_max: f64,
    out: *mut c_int,
) -> PcqaStatus {
    if out.is_null() {
        return fail(PcqaStatus::NullArgument, "null out pointer");
    }
    let range = match MosRange::new(mos_min, mos_max) {
        Ok(r) => r,
        Err(err) => return fail(PcqaStatus::InvalidArgument, err),
    };
    match mos_to_level(mos, range) {
        Ok(level) => {
            unsafe { *out = level.ordinal() as c_int };
            PcqaStatus::Ok
        }
        Err(err) => fail(PcqaStatus::InvalidArgument, err),
    }
}

/// Softmax over the five rating log-probabilities.
///
/// # Safety
/// Both pointers must reference five doubles.
#[no_mangle]
pub unsafe extern "C" fn pcqa_softmax_probabilities(
    logprobs: *const f64,
    probs_out: *mut f64,
) -> PcqaStatus {
    if logprobs.is_null() || probs_out.is_null() {
        return fail(PcqaStatus::NullArgument, "null argument");
    }
    let input: [f64; 5] = unsafe { std::slice::from_raw_parts(logprobs, 5) }
        .try_into()
        .expect("length checked");
    match logits_to_probabilities(input) {
        Ok(eval) => {
            unsafe { std::ptr::copy_nonoverlapping(eval.probs.as_ptr(), probs_out, 5) };
            PcqaStatus::Ok
        }
        Err(err) => fail(PcqaStatus::Compute, err),
    }
}

/// Deterministic mock rating of a named cloud; writes the five
/// probabilities in level order.
///
/// # Safety
/// `cloud_name` must be NUL-terminated; `probs_out` must hold five doubles.
#[no_mangle]
pub unsafe extern "C" fn pcqa_mock_score(
    cloud_name: *const c_char,
    mos: f64,
    mos_min: f64,
    mos_max: f64,
    seed: u64,
    sigma: f64,
    probs_out: *mut f64,
) -> PcqaStatus {
    if probs_out.is_null() {
        return fail(PcqaStatus::NullArgument, "null out pointer");
    }
    let name = match unsafe { cstr_arg(cloud_name) } {
        Ok(n) => n,
        Err(status) => return status,
    };
    let range = match MosRange::new(mos_min, mos_max) {
        Ok(r) => r,
        Err(err) => return fail(PcqaStatus::InvalidArgument, err),
    };
    if !range.contains(mos) {
        return fail(PcqaStatus::InvalidArgument, format!("mos {mos} out of range"));
    }
    let eval = pcqa::evaluator::mock_score(name, mos, range, seed, sigma);
    unsafe { std::ptr::copy_nonoverlapping(eval.probs.as_ptr(), probs_out, 5) };
    PcqaStatus::Ok
}

/// Loads a trained model file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` receives an owned handle to free
/// with [`pcqa_svr_model_free`].
#[no_mangle]
pub unsafe extern "C" fn pcqa_svr_model_load(
    path: *const c_char,
    out: *mut *mut PcqaSvrModel,
) -> PcqaStatus {
    if out.is_null() {
        return fail(PcqaStatus::NullArgument, "null out pointer");
    }
    let path = match unsafe { cstr_arg(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match pcqa::svr::load_model(path) {
        Ok(model) => {
            unsafe { *out = Box::into_raw(Box::new(PcqaSvrModel { inner: model })) };
            PcqaStatus::Ok
        }
        Err(err @ pcqa::svr::SvrError::Io(_)) => fail(PcqaStatus::Io, err),
        Err(err) => fail(PcqaStatus::Parse, err),
    }
}

/// Releases a model handle; a null pointer is a no-op.
///
/// # Safety
/// `model` must come from [`pcqa_svr_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pcqa_svr_model_free(model: *mut PcqaSvrModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Predicts the quality score of one fused feature row (five rating
/// probabilities followed by the structural features).
///
/// # Safety
/// `features` must hold `feature_count` doubles matching the model's
/// training dimension; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pcqa_svr_predict(
    model: *const PcqaSvrModel,
    features: *const f64,
    feature_count: usize,
    out: *mut f64,
) -> PcqaStatus {
    if model.is_null() || features.is_null() || out.is_null() {
        return fail(PcqaStatus::NullArgument, "null argument");
    }
    let model = unsafe { &(*model).inner };
    if feature_count != model.scaler.mean.len() {
        return fail(
            PcqaStatus::InvalidArgument,
            format!(
                "model expects {} features, got {feature_count}",
                model.scaler.mean.len()
            ),
        );
    }
    let row = unsafe { std::slice::from_raw_parts(features, feature_count) };
    if !row.iter().all(|v| v.is_finite()) {
        return fail(PcqaStatus::InvalidArgument, "non-finite feature value");
    }
    unsafe { *out = model.predict_raw(row) };
    PcqaStatus::Ok
}

/// SRCC, PLCC, KRCC and RMSE between `length` predictions and MOS values.
///
/// # Safety
/// `pred` and `mos` must hold `length` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pcqa_metrics_report(
    pred: *const f64,
    mos: *const f64,
    length: usize,
    apply_logistic: bool,
    out: *mut PcqaMetricReport,
) -> PcqaStatus {
    if pred.is_null() || mos.is_null() || out.is_null() {
        return fail(PcqaStatus::NullArgument, "null argument");
    }
    let pred = unsafe { std::slice::from_raw_parts(pred, length) };
    let mos = unsafe { std::slice::from_raw_parts(mos, length) };
    match compute_report(pred, mos, apply_logistic) {
        Ok(report) => {
            unsafe {
                *out = PcqaMetricReport {
                    srcc: report.srcc,
                    plcc: report.plcc,
                    krcc: report.krcc,
                    rmse: report.rmse,
                    n: report.n,
                };
            }
            PcqaStatus::Ok
        }
        Err(err) => fail(PcqaStatus::Compute, err),
    }
}
