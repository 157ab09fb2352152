use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use branchtree_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(bt_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn csbp_handles() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(bt_mechanism_quadratic(1.0, &mut m), BtStatus::Ok);
        let mut psi = 0.0;
        assert_eq!(bt_mechanism_psi(m, 3.0, &mut psi), BtStatus::Ok);
        assert_eq!(psi, 9.0);
        assert_eq!(bt_mechanism_psi(m, -1.0, &mut psi), BtStatus::Domain);
        assert!(last_error().contains("lambda"));

        let mut k = ptr::null_mut();
        assert_eq!(bt_csbp_new(m, &mut k), BtStatus::Ok);
        let (mut u, mut v) = (0.0, 0.0);
        assert_eq!(bt_csbp_u(k, 1.0, 1.0, &mut u), BtStatus::Ok);
        assert_eq!(bt_csbp_v(k, 2.0, &mut v), BtStatus::Ok);
        assert!((u - 0.5).abs() < 1e-12);
        assert!((v - 0.5).abs() < 1e-12);
        bt_csbp_free(k);
        bt_mechanism_free(m);

        let mut s = ptr::null_mut();
        assert_eq!(bt_mechanism_stable(1.0, 2.5, &mut s), BtStatus::InvalidMechanism);
        assert!(s.is_null());
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(bt_csbp_u(ptr::null(), 1.0, 1.0, ptr::null_mut()), BtStatus::NullPointer);
        assert_eq!(bt_mechanism_quadratic(1.0, ptr::null_mut()), BtStatus::NullPointer);
        assert_eq!(bt_tree_parse(ptr::null(), ptr::null_mut()), BtStatus::NullPointer);
        bt_tree_free(ptr::null_mut());
        bt_string_free(ptr::null_mut());
    }
}

#[test]
fn tree_round_trip_and_buffers() {
    unsafe {
        let src = CString::new("2,3,0,2,0,0,0,0").unwrap();
        let mut t = ptr::null_mut();
        assert_eq!(bt_tree_parse(src.as_ptr(), &mut t), BtStatus::Ok);
        let mut n = 0usize;
        assert_eq!(bt_tree_size(t, &mut n), BtStatus::Ok);
        assert_eq!(n, 8);

        let mut needed = 0usize;
        assert_eq!(bt_tree_height(t, ptr::null_mut(), 0, &mut needed), BtStatus::BufferTooSmall);
        let mut h = vec![0u32; needed];
        assert_eq!(bt_tree_height(t, h.as_mut_ptr(), h.len(), &mut needed), BtStatus::Ok);
        assert_eq!(h, [0, 1, 2, 2, 3, 3, 2, 1]);

        assert_eq!(bt_tree_contour(t, ptr::null_mut(), 0, &mut needed), BtStatus::BufferTooSmall);
        assert_eq!(needed, 15);

        let mut mirror = ptr::null_mut();
        assert_eq!(bt_tree_mirror(t, &mut mirror), BtStatus::Ok);
        let mut buf = vec![0 as std::ffi::c_char; 64];
        assert_eq!(bt_tree_to_string(mirror, buf.as_mut_ptr(), buf.len(), &mut needed), BtStatus::Ok);
        let s = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
        assert_eq!(s, "2,0,3,0,2,0,0,0");
        assert_eq!(needed, s.len() + 1);
        bt_tree_free(mirror);
        bt_tree_free(t);

        let bad = CString::new("1,1").unwrap();
        let mut t = ptr::null_mut();
        assert_eq!(bt_tree_parse(bad.as_ptr(), &mut t), BtStatus::InvalidTree);
    }
}

#[test]
fn offspring_and_sampling() {
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(bt_offspring_stable(1.5, &mut d), BtStatus::Ok);
        let mut p = 0.0;
        assert_eq!(bt_offspring_pmf(d, 0, &mut p), BtStatus::Ok);
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(bt_tree_sample(d, 9, 1 << 20, &mut a), BtStatus::Ok);
        assert_eq!(bt_tree_sample(d, 9, 1 << 20, &mut b), BtStatus::Ok);
        let (mut na, mut nb) = (0, 0);
        bt_tree_size(a, &mut na);
        bt_tree_size(b, &mut nb);
        assert_eq!(na, nb);
        bt_tree_free(a);
        bt_tree_free(b);
        bt_offspring_free(d);

        let mut g = ptr::null_mut();
        assert_eq!(bt_offspring_geometric(&mut g), BtStatus::Ok);
        let mut e = 0.0;
        // 1 − g_n(0) = 1/(n+1) for the geometric law
        assert_eq!(bt_offspring_gf_iterate(g, 9, 0.0, &mut e), BtStatus::Ok);
        assert!((e - 0.9).abs() < 1e-12);
        bt_offspring_free(g);

        let pmf = [0.5, 0.6];
        let mut c = ptr::null_mut();
        assert_eq!(bt_offspring_custom(pmf.as_ptr(), 2, &mut c), BtStatus::InvalidOffspring);
    }
}

#[test]
fn skeleton_pmf() {
    unsafe {
        let s = CString::new("3,0,0,0").unwrap();
        let mut p = 0.0;
        assert_eq!(bt_stable_skeleton_pmf(1.5, s.as_ptr(), &mut p), BtStatus::Ok);
        assert!((p - 0.25).abs() < 1e-15);
    }
}

#[test]
fn experiment_report() {
    unsafe {
        let cfg = CString::new("experiment = \"poisson-tree\"\nseed = 1\n").unwrap();
        let mut json = ptr::null_mut();
        let mut passed = 0;
        assert_eq!(bt_run_experiment(cfg.as_ptr(), &mut json, &mut passed), BtStatus::Ok);
        assert_eq!(passed, 1);
        let text = CStr::from_ptr(json).to_str().unwrap();
        assert!(text.contains("\"experiment\":\"poisson-tree\""));
        bt_string_free(json);

        let bad = CString::new("experiment = \"nope\"\nseed = 1\n").unwrap();
        assert_eq!(bt_run_experiment(bad.as_ptr(), &mut json, &mut passed), BtStatus::Config);
        assert!(last_error().contains("nope"));
        let name = CStr::from_ptr(bt_status_name(BtStatus::Config)).to_str().unwrap();
        assert_eq!(name, "configuration error");
    }
}

#[test]
fn header_declares_the_api() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/branchtree.h")).unwrap();
    for name in [
        "bt_mechanism_quadratic",
        "bt_csbp_u",
        "bt_tree_height",
        "bt_run_experiment",
        "BT_STATUS_BUFFER_TOO_SMALL",
        "typedef struct BtTree BtTree",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Compiles and runs a C program against the static library.
#[test]
fn c_program_links_and_runs() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        panic!("no C compiler found");
    };
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libbranchtree_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new(cc)
        .arg(dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
