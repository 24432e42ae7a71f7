//! C ABI for the meshpref library.
//!
//! Meshes and reward parameters cross the boundary as opaque handles; every
//! entry point returns an `MpStatus` and writes results through out
//! pointers. The most recent failure message is kept per thread and can be
//! fetched with `mp_last_error_message`. Panics are caught at the boundary
//! and reported as `MP_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::CStr;
use std::os::raw::{c_char, c_double};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use meshpref::csdiv::{cs_divergence, EmbeddingBatch, KernelConfig};
use meshpref::error::Error;
use meshpref::guidance::{guide_optimize, GuidanceSchedule, QuadraticAnchor};
use meshpref::mesh::TriangleMesh;
use meshpref::obj;
use meshpref::prep::{adaptive_fuse, qem_simplify, FusionConfig};
use meshpref::reward::{score, text_featurize, RewardParams, DEFAULT_TEXT_SEED};

/// Status codes returned by every FFI entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpStatus {
    MpStatusOk = 0,
    /// A required pointer argument was null.
    MpStatusNullPointer = 1,
    /// A string argument was not valid UTF-8.
    MpStatusInvalidUtf8 = 2,
    /// Malformed input data (OBJ, JSON, embedding shapes, bandwidth).
    MpStatusInvalidInput = 3,
    /// The operation is well formed but failed on this input.
    MpStatusOperationFailed = 4,
    /// A panic was caught at the boundary; state may be stale.
    MpStatusInternal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> MpStatus {
    match err.code() {
        "E_PARSE" | "E_JSON" | "E_FORMAT" | "E_SHAPE" | "E_DIM_MISMATCH" | "E_BANDWIDTH"
        | "E_NON_FINITE" | "E_CAPACITY" | "E_INVALID_TARGET" | "E_HARNESS_CONFIG" => {
            MpStatus::MpStatusInvalidInput
        }
        _ => MpStatus::MpStatusOperationFailed,
    }
}

fn fail(err: Error) -> MpStatus {
    let status = status_of(&err);
    set_error(format!("{}: {err}", err.code()));
    status
}

/// Runs `f` with panics converted to `MP_STATUS_INTERNAL`.
fn guarded(f: impl FnOnce() -> MpStatus) -> MpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            MpStatus::MpStatusInternal
        }
    }
}

/// Opaque triangle mesh handle.
pub struct MpMesh {
    inner: TriangleMesh,
}

/// Opaque reward-model parameter handle.
pub struct MpParams {
    inner: RewardParams,
}

/// Copies the most recent error message on this thread into `buf`
/// (NUL-terminated, truncated to `cap`). Returns the full message length.
#[no_mangle]
pub extern "C" fn mp_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Parses Wavefront OBJ bytes into a mesh handle.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be a valid
/// pointer. The returned handle must be released with `mp_mesh_free`.
#[no_mangle]
pub unsafe extern "C" fn mp_mesh_from_obj(
    bytes: *const u8,
    len: usize,
    out: *mut *mut MpMesh,
) -> MpStatus {
    if bytes.is_null() || out.is_null() {
        return MpStatus::MpStatusNullPointer;
    }
    let data = std::slice::from_raw_parts(bytes, len);
    guarded(|| match obj::parse_obj(data) {
        Ok(mesh) => {
            *out = Box::into_raw(Box::new(MpMesh { inner: mesh }));
            MpStatus::MpStatusOk
        }
        Err(e) => fail(e),
    })
}

/// Serializes a mesh back to OBJ. The buffer is owned by the library and
/// must be released with `mp_buffer_free`.
///
/// # Safety
/// All pointers must be valid; `mesh` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn mp_mesh_to_obj(
    mesh: *const MpMesh,
    out_bytes: *mut *mut u8,
    out_len: *mut usize,
) -> MpStatus {
    if mesh.is_null() || out_bytes.is_null() || out_len.is_null() {
        return MpStatus::MpStatusNullPointer;
    }
    guarded(|| {
        let text = obj::write_obj(&(*mesh).inner).into_boxed_slice();
        *out_len = text.len();
        *out_bytes = Box::into_raw(text) as *mut u8;
        MpStatus::MpStatusOk
    })
}

/// Releases a buffer returned by `mp_mesh_to_obj`.
///
/// # Safety
/// `bytes`/`len` must match a prior `mp_mesh_to_obj` result exactly.
#[no_mangle]
pub unsafe extern "C" fn mp_buffer_free(bytes: *mut u8, len: usize) {
    if !bytes.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(bytes, len)));
    }
}

/// Releases a mesh handle. Null is a no-op.
///
/// # Safety
/// `mesh` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mp_mesh_free(mesh: *mut MpMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// # Safety
/// `mesh` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mp_mesh_face_count(mesh: *const MpMesh) -> usize {
    if mesh.is_null() {
        return 0;
    }
    (*mesh).inner.face_count()
}

/// # Safety
/// `mesh` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mp_mesh_vertex_count(mesh: *const MpMesh) -> usize {
    if mesh.is_null() {
        return 0;
    }
    (*mesh).inner.vertex_count()
}

/// Quadric edge-collapse simplification toward `target_faces`.
///
/// # Safety
/// `mesh` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mp_simplify(
    mesh: *const MpMesh,
    target_faces: usize,
    out: *mut *mut MpMesh,
) -> MpStatus {
    if mesh.is_null() || out.is_null() {
        return MpStatus::MpStatusNullPointer;
    }
    guarded(|| match qem_simplify(&(*mesh).inner, target_faces) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(MpMesh { inner: result }));
            MpStatus::MpStatusOk
        }
        Err(e) => fail(e),
    })
}

/// Normal-similarity face fusion toward `target_faces`.
///
/// # Safety
/// `mesh` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mp_fuse(
    mesh: *const MpMesh,
    normal_similarity_threshold: c_double,
    target_faces: usize,
    max_passes: usize,
    out: *mut *mut MpMesh,
) -> MpStatus {
    if mesh.is_null() || out.is_null() {
        return MpStatus::MpStatusNullPointer;
    }
    let cfg = FusionConfig {
        normal_similarity_threshold,
        target_faces,
        max_passes,
    };
    guarded(|| match adaptive_fuse(&(*mesh).inner, &cfg) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(MpMesh { inner: result }));
            MpStatus::MpStatusOk
        }
        Err(e) => fail(e),
    })
}

/// Empirical Cauchy-Schwarz divergence between two row-major sample
/// matrices of shape (`x_rows`, `dim`) and (`y_rows`, `dim`). A bandwidth
/// of 0 or below selects the median heuristic. Writes the divergence and
/// the bandwidth actually used.
///
/// # Safety
/// The data pointers must cover the stated shapes; out pointers must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn mp_cs_divergence(
    x_data: *const c_double,
    x_rows: usize,
    y_data: *const c_double,
    y_rows: usize,
    dim: usize,
    bandwidth: c_double,
    out_value: *mut c_double,
    out_bandwidth: *mut c_double,
) -> MpStatus {
    if x_data.is_null() || y_data.is_null() || out_value.is_null() || out_bandwidth.is_null() {
        return MpStatus::MpStatusNullPointer;
    }
    let xs = std::slice::from_raw_parts(x_data, x_rows * dim);
    let ys = std::slice::from_raw_parts(y_data, y_rows * dim);
    guarded(|| {
        let to_rows = |flat: &[f64], rows: usize| -> Vec<Vec<f64>> {
            flat.chunks(dim).take(rows).map(|c| c.to_vec()).collect()
        };
        let cfg = if bandwidth > 0.0 {
            KernelConfig::Explicit(bandwidth)
        } else {
            KernelConfig::Median
        };
        let run = || -> meshpref::error::Result<(f64, f64)> {
            let x = EmbeddingBatch::from_rows(&to_rows(xs, x_rows))?;
            let y = EmbeddingBatch::from_rows(&to_rows(ys, y_rows))?;
            let report = cs_divergence(&x, &y, cfg)?;
            Ok((report.value, report.bandwidth_used))
        };
        match run() {
            Ok((value, used)) => {
                *out_value = value;
                *out_bandwidth = used;
                MpStatus::MpStatusOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Loads reward-model parameters from their JSON serialization.
///
/// # Safety
/// `bytes` must cover `len` bytes; `out` must be valid. Release the handle
/// with `mp_params_free`.
#[no_mangle]
pub unsafe extern "C" fn mp_params_from_json(
    bytes: *const u8,
    len: usize,
    out: *mut *mut MpParams,
) -> MpStatus {
    if bytes.is_null() || out.is_null() {
        return MpStatus::MpStatusNullPointer;
    }
    let data = std::slice::from_raw_parts(bytes, len);
    guarded(|| match RewardParams::from_json(data) {
        Ok(params) => {
            *out = Box::into_raw(Box::new(MpParams { inner: params }));
            MpStatus::MpStatusOk
        }
        Err(e) => fail(e),
    })
}

/// Releases a parameter handle. Null is a no-op.
///
/// # Safety
/// `params` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mp_params_free(params: *mut MpParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Scores a mesh against a NUL-terminated prompt.
///
/// # Safety
/// All pointers must be valid; `prompt` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mp_score(
    params: *const MpParams,
    mesh: *const MpMesh,
    prompt: *const c_char,
    out_value: *mut c_double,
) -> MpStatus {
    if params.is_null() || mesh.is_null() || prompt.is_null() || out_value.is_null() {
        return MpStatus::MpStatusNullPointer;
    }
    let prompt = match CStr::from_ptr(prompt).to_str() {
        Ok(s) => s,
        Err(_) => return MpStatus::MpStatusInvalidUtf8,
    };
    guarded(|| match score(&(*params).inner, &(*mesh).inner, prompt) {
        Ok(value) => {
            *out_value = value;
            MpStatus::MpStatusOk
        }
        Err(e) => fail(e),
    })
}

/// Reward-guided deformation: gradient descent on a quadratic anchor minus
/// a linearly increasing multiple of the reward, over `steps` iterations.
///
/// # Safety
/// All pointers must be valid; `prompt` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mp_guide(
    params: *const MpParams,
    mesh: *const MpMesh,
    prompt: *const c_char,
    steps: usize,
    alpha_start: c_double,
    alpha_end: c_double,
    learning_rate: c_double,
    anchor_weight: c_double,
    out: *mut *mut MpMesh,
) -> MpStatus {
    if params.is_null() || mesh.is_null() || prompt.is_null() || out.is_null() {
        return MpStatus::MpStatusNullPointer;
    }
    let prompt = match CStr::from_ptr(prompt).to_str() {
        Ok(s) => s,
        Err(_) => return MpStatus::MpStatusInvalidUtf8,
    };
    let schedule = GuidanceSchedule {
        alpha_start,
        alpha_end,
        total_steps: steps,
    };
    let anchor = QuadraticAnchor {
        weight: anchor_weight,
    };
    guarded(|| {
        let text = text_featurize(prompt, DEFAULT_TEXT_SEED);
        match guide_optimize(
            &(*mesh).inner,
            &text,
            &(*params).inner,
            &schedule,
            &anchor,
            learning_rate,
        ) {
            Ok((result, _)) => {
                *out = Box::into_raw(Box::new(MpMesh { inner: result }));
                MpStatus::MpStatusOk
            }
            Err(e) => fail(e),
        }
    })
}
