//! Exercises the C entry points the way a foreign caller would: raw
//! pointers, out parameters, and explicit frees.

use std::ffi::CString;
use std::os::raw::c_char;
use std::ptr;

use meshpref::obj;
use meshpref::reward::{init_params, ModelDims};
use meshpref::shapes;
use meshpref_ffi::*;

fn obj_bytes() -> Vec<u8> {
    obj::write_obj(&shapes::icosphere(2))
}

unsafe fn load_mesh(bytes: &[u8]) -> *mut MpMesh {
    let mut handle: *mut MpMesh = ptr::null_mut();
    let status = mp_mesh_from_obj(bytes.as_ptr(), bytes.len(), &mut handle);
    assert_eq!(status, MpStatus::MpStatusOk);
    assert!(!handle.is_null());
    handle
}

#[test]
fn mesh_round_trip_preserves_bytes() {
    unsafe {
        let bytes = obj_bytes();
        let mesh = load_mesh(&bytes);
        assert_eq!(mp_mesh_face_count(mesh), 320);
        assert_eq!(mp_mesh_vertex_count(mesh), 162);

        let mut out: *mut u8 = ptr::null_mut();
        let mut len = 0usize;
        assert_eq!(
            mp_mesh_to_obj(mesh, &mut out, &mut len),
            MpStatus::MpStatusOk
        );
        let round = std::slice::from_raw_parts(out, len).to_vec();
        assert_eq!(round, bytes);

        mp_buffer_free(out, len);
        mp_mesh_free(mesh);
    }
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        let mut handle: *mut MpMesh = ptr::null_mut();
        assert_eq!(
            mp_mesh_from_obj(ptr::null(), 0, &mut handle),
            MpStatus::MpStatusNullPointer
        );
        assert_eq!(
            mp_simplify(ptr::null(), 10, &mut handle),
            MpStatus::MpStatusNullPointer
        );
        mp_mesh_free(ptr::null_mut());
        mp_params_free(ptr::null_mut());
    }
}

#[test]
fn parse_failure_sets_error_message() {
    unsafe {
        let garbage = b"v 0 zero 0\n";
        let mut handle: *mut MpMesh = ptr::null_mut();
        let status = mp_mesh_from_obj(garbage.as_ptr(), garbage.len(), &mut handle);
        assert_eq!(status, MpStatus::MpStatusInvalidInput);

        let mut buf = [0 as c_char; 256];
        let n = mp_last_error_message(buf.as_mut_ptr(), buf.len());
        assert!(n > 0);
        let msg: String = buf[..n.min(255)].iter().map(|&c| c as u8 as char).collect();
        assert!(msg.starts_with("E_"), "message '{msg}' lacks a code prefix");
    }
}

#[test]
fn simplify_and_fuse_through_the_boundary() {
    unsafe {
        let mesh = load_mesh(&obj_bytes());
        let mut simplified: *mut MpMesh = ptr::null_mut();
        assert_eq!(
            mp_simplify(mesh, 80, &mut simplified),
            MpStatus::MpStatusOk
        );
        assert!(mp_mesh_face_count(simplified) <= 80);

        let grid = obj::write_obj(&shapes::flat_grid(8, 1.0));
        let flat = load_mesh(&grid);
        let mut fused: *mut MpMesh = ptr::null_mut();
        assert_eq!(
            mp_fuse(flat, 0.99, 16384, 32, &mut fused),
            MpStatus::MpStatusOk
        );
        assert!(mp_mesh_face_count(fused) <= 64);

        mp_mesh_free(mesh);
        mp_mesh_free(simplified);
        mp_mesh_free(flat);
        mp_mesh_free(fused);
    }
}

#[test]
fn divergence_matches_library_and_rejects_bad_shapes() {
    unsafe {
        let x = [0.0f64, 0.1, 0.2, 0.9, 1.0, 1.1];
        let y = [2.0f64, 2.1, 2.2, 2.9, 3.0, 3.1];
        let mut value = 0.0;
        let mut used = 0.0;
        let status = mp_cs_divergence(
            x.as_ptr(),
            3,
            y.as_ptr(),
            3,
            2,
            0.5,
            &mut value,
            &mut used,
        );
        assert_eq!(status, MpStatus::MpStatusOk);
        assert_eq!(used, 0.5);
        assert!(value > 0.0);

        // median heuristic path
        assert_eq!(
            mp_cs_divergence(x.as_ptr(), 3, y.as_ptr(), 3, 2, 0.0, &mut value, &mut used),
            MpStatus::MpStatusOk
        );
        assert!(used > 0.0);

        // identical samples give zero divergence
        assert_eq!(
            mp_cs_divergence(x.as_ptr(), 3, x.as_ptr(), 3, 2, 0.5, &mut value, &mut used),
            MpStatus::MpStatusOk
        );
        assert!(value.abs() < 1e-12);
    }
}

#[test]
fn score_and_guide_with_loaded_params() {
    unsafe {
        let params_json = init_params(11, ModelDims::default()).to_json().unwrap();
        let mut params: *mut MpParams = ptr::null_mut();
        assert_eq!(
            mp_params_from_json(params_json.as_ptr(), params_json.len(), &mut params),
            MpStatus::MpStatusOk
        );

        let mesh = load_mesh(&obj_bytes());
        let prompt = CString::new("a clean sphere").unwrap();
        let mut value = f64::NAN;
        assert_eq!(
            mp_score(params, mesh, prompt.as_ptr(), &mut value),
            MpStatus::MpStatusOk
        );
        assert!(value.is_finite());

        let mut guided: *mut MpMesh = ptr::null_mut();
        assert_eq!(
            mp_guide(params, mesh, prompt.as_ptr(), 5, 10.0, 20.0, 1e-3, 1.0, &mut guided),
            MpStatus::MpStatusOk
        );
        assert_eq!(mp_mesh_face_count(guided), mp_mesh_face_count(mesh));

        mp_mesh_free(guided);
        mp_mesh_free(mesh);
        mp_params_free(params);
    }
}

#[test]
fn generated_header_covers_the_surface() {
    let header = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/meshpref.h"),
    )
    .unwrap();
    for symbol in [
        "mp_mesh_from_obj",
        "mp_mesh_to_obj",
        "mp_buffer_free",
        "mp_mesh_free",
        "mp_simplify",
        "mp_fuse",
        "mp_cs_divergence",
        "mp_params_from_json",
        "mp_params_free",
        "mp_score",
        "mp_guide",
        "mp_last_error_message",
        "MP_STATUS_OK",
    ] {
        assert!(header.contains(symbol), "header lacks {symbol}");
    }
}
