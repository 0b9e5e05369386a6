use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use cocycle_lab_ffi::*;

fn last_error() -> String {
    let p = cl_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn diag28() -> *mut CLCocycle {
    let mats = [2.0, 0.0, 0.0, 0.5, 8.0, 0.0, 0.0, 0.125];
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { cl_cocycle_new(mats.as_ptr(), ptr::null(), 2, &mut h) }, CLStatus::Ok);
    h
}

#[test]
fn handle_lifecycle_and_estimate() {
    let h = diag28();
    assert_eq!(unsafe { cl_cocycle_size(h) }, 2);
    let mut le = CLLyapunov::default();
    assert_eq!(unsafe { cl_mc_le(h, 1000, 2000, 3, &mut le) }, CLStatus::Ok);
    assert!((le.mean - 4f64.ln()).abs() < 0.02);
    assert!((le.bottom + le.mean).abs() < 1e-12);

    let mut js = ptr::null_mut();
    assert_eq!(unsafe { cl_cocycle_to_json(h, &mut js) }, CLStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { cl_cocycle_from_json(js, &mut back) }, CLStatus::Ok);
    assert_eq!(unsafe { cl_cocycle_size(back) }, 2);
    unsafe {
        cl_string_free(js);
        cl_cocycle_free(back);
        cl_cocycle_free(h);
        cl_cocycle_free(ptr::null_mut());
    }
}

#[test]
fn closed_form_and_tail() {
    let (t, p) = ([2.0, 8.0], [0.5, 0.5]);
    let mut l = 0.0;
    assert_eq!(unsafe { cl_closed_form_diag_le(t.as_ptr(), p.as_ptr(), 2, &mut l) }, CLStatus::Ok);
    assert!((l - 4f64.ln()).abs() < 1e-15);
    let h = diag28();
    let (mut prob, mut se) = (0.0, 0.0);
    assert_eq!(unsafe { cl_ldt_tail(h, 100, 0.2, l, 4000, 1, &mut prob, &mut se) }, CLStatus::Ok);
    assert!(prob < 0.02 && se >= 0.0);
    let mut lf = 0.0;
    let toy =
        CString::new(r#"{"probs": [0.5, 0.5], "mats": [[-0.375, -1, 0.25, -2], [-0.09375, -4, 0.0625, -8]]}"#).unwrap();
    let mut th = ptr::null_mut();
    assert_eq!(unsafe { cl_cocycle_from_json(toy.as_ptr(), &mut th) }, CLStatus::Ok);
    assert_eq!(unsafe { cl_furstenberg_le(th, 256, 1e-12, &mut lf) }, CLStatus::Ok);
    assert!(lf > 1.0 && lf < 1.6, "{lf}");
    unsafe {
        cl_cocycle_free(th);
        cl_cocycle_free(h);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mats = [1.0, 0.0, 0.0, 1.0];
    let bad = [0.7];
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { cl_cocycle_new(mats.as_ptr(), bad.as_ptr(), 1, &mut h) }, CLStatus::InvalidProbabilities);
    assert!(h.is_null());
    assert!(last_error().contains("sum"));
    assert_eq!(unsafe { cl_cocycle_new(ptr::null(), ptr::null(), 1, &mut h) }, CLStatus::NullPointer);
    let mut le = CLLyapunov::default();
    assert_eq!(unsafe { cl_mc_le(ptr::null(), 10, 10, 0, &mut le) }, CLStatus::NullPointer);
    let junk = CString::new("{").unwrap();
    assert_eq!(unsafe { cl_cocycle_from_json(junk.as_ptr(), &mut h) }, CLStatus::ConfigInvalid);
    // a successful call clears the message
    let ok = diag28();
    assert!(cl_last_error_message().is_null());
    unsafe { cl_cocycle_free(ok) };
}

#[test]
fn experiments_through_the_abi() {
    let name = CString::new("le").unwrap();
    let cfg = CString::new(r#"{"cocycle": {"family": "diag", "thetas": [2, 8]}, "n": 200, "samples": 300}"#).unwrap();
    let run = |workers| {
        let (mut csv, mut rep) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            unsafe { cl_run_experiment(name.as_ptr(), cfg.as_ptr(), 5, workers, &mut csv, &mut rep) },
            CLStatus::Ok
        );
        let text = unsafe { CStr::from_ptr(csv) }.to_string_lossy().into_owned();
        let report = unsafe { CStr::from_ptr(rep) }.to_string_lossy().into_owned();
        unsafe {
            cl_string_free(csv);
            cl_string_free(rep);
        }
        assert!(report.contains("\"meta\""));
        cocycle_lab::experiments::csv_body(&text)
    };
    assert_eq!(run(1), run(2));
    let bad = CString::new(r#"{"samplez": 1}"#).unwrap();
    let mut csv = ptr::null_mut();
    let st = unsafe { cl_run_experiment(name.as_ptr(), bad.as_ptr(), 0, 0, &mut csv, ptr::null_mut()) };
    assert_eq!(st, CLStatus::ConfigInvalid);
    assert!(csv.is_null());
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/cocycle_lab.h")).unwrap();
    for f in [
        "cl_version",
        "cl_last_error_message",
        "cl_cocycle_new",
        "cl_cocycle_from_json",
        "cl_cocycle_free",
        "cl_cocycle_size",
        "cl_cocycle_to_json",
        "cl_closed_form_diag_le",
        "cl_mc_le",
        "cl_ldt_tail",
        "cl_furstenberg_le",
        "cl_run_experiment",
        "cl_string_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct CLCocycle CLCocycle;"));
    assert!(header.contains("CL_STATUS_OK = 0"));
}

/// Compiles the C smoke test against the static library when a C compiler
/// is on the path.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libcocycle_lab_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
