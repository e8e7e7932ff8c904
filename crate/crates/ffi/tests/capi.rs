use std::ffi::{CStr, CString};
use std::ptr;

use dml_ffi::*;

fn last_error() -> String {
    let p = dml_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { dml_string_free(p) };
    s
}

#[test]
fn bound_run_matches_direct_call() {
    let config = CString::new("command = \"bound\"\n[bound]\ntheorem = 1\nregime = \"bounded\"\n[bound.theorem1]\nn = 1e6\n").unwrap();
    let mut report = ptr::null_mut();
    assert_eq!(
        unsafe { dml_run(config.as_ptr(), 0, &mut report) },
        DmlStatus::Ok
    );
    assert!(dml_last_error().is_null());
    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { dml_report_results_json(report, &mut json) },
        DmlStatus::Ok
    );
    let results: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    unsafe { dml_report_free(report) };

    let inputs = CString::new(r#"{"n": 1e6}"#).unwrap();
    let mut total = f64::NAN;
    assert_eq!(
        unsafe { dml_bound_theorem1(inputs.as_ptr(), DmlRegime::Bounded as i32, &mut total) },
        DmlStatus::Ok
    );
    assert_eq!(results["total"].as_f64().unwrap(), total);
}

#[test]
fn full_report_is_json() {
    let config = CString::new(r#"{"command": "bound", "bound": {"theorem": 2}}"#).unwrap();
    let mut report = ptr::null_mut();
    assert_eq!(
        unsafe { dml_run(config.as_ptr(), 1, &mut report) },
        DmlStatus::Ok
    );
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { dml_report_json(report, &mut json) }, DmlStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["results"]["theorem"], 2);
    unsafe { dml_report_free(report) };
}

#[test]
fn config_errors_are_input_errors() {
    let config = CString::new("command = \"bound\"\nlevel = 1.5\n[bound]\ntheorem = 1\n").unwrap();
    let mut report = ptr::null_mut();
    assert_eq!(
        unsafe { dml_run(config.as_ptr(), 0, &mut report) },
        DmlStatus::InputError
    );
    assert!(report.is_null());
    assert!(last_error().contains("level must lie in (0,1)"));

    let unknown = CString::new(r#"{"n": 1e6, "bogus": 1}"#).unwrap();
    let mut total = 0.0;
    assert_eq!(
        unsafe { dml_bound_theorem1(unknown.as_ptr(), 0, &mut total) },
        DmlStatus::InputError
    );
    assert!(last_error().contains("bogus"));
}

#[test]
fn null_and_bad_arguments() {
    let mut report = ptr::null_mut();
    assert_eq!(
        unsafe { dml_run(ptr::null(), 0, &mut report) },
        DmlStatus::InvalidArgument
    );
    assert!(last_error().contains("config is null"));
    let inputs = CString::new("{}").unwrap();
    assert_eq!(
        unsafe { dml_bound_theorem1(inputs.as_ptr(), 0, ptr::null_mut()) },
        DmlStatus::InvalidArgument
    );
    let mut total = 0.0;
    assert_eq!(
        unsafe { dml_bound_theorem1(inputs.as_ptr(), 7, &mut total) },
        DmlStatus::InvalidArgument
    );
    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { dml_report_json(ptr::null(), &mut json) },
        DmlStatus::InvalidArgument
    );
    unsafe {
        dml_report_free(ptr::null_mut());
        dml_string_free(ptr::null_mut());
    }
}

#[test]
fn critical_value_and_ks() {
    let corr = [1.0];
    let mut c = 0.0;
    assert_eq!(
        unsafe { dml_sup_t_critical_value(corr.as_ptr(), 1, 0.95, 200_000, 3, 0, &mut c) },
        DmlStatus::Ok
    );
    assert!((c - 1.959964).abs() < 0.02, "{c}");
    assert_eq!(
        unsafe { dml_sup_t_critical_value(corr.as_ptr(), 1, 1.5, 100, 3, 0, &mut c) },
        DmlStatus::InputError
    );

    let a = [0.0, 1.0, 2.0, 3.0];
    let b = [2.0, 3.0, 4.0, 5.0];
    let mut ks = 0.0;
    assert_eq!(
        unsafe { dml_ks_distance(a.as_ptr(), 4, b.as_ptr(), 4, &mut ks) },
        DmlStatus::Ok
    );
    assert!((ks - 0.5).abs() < 1e-15);
    assert_eq!(
        unsafe { dml_ks_distance(a.as_ptr(), 0, b.as_ptr(), 4, &mut ks) },
        DmlStatus::InputError
    );
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(dml_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dml.h")).unwrap();
    for name in [
        "dml_last_error",
        "dml_version",
        "dml_run",
        "dml_report_json",
        "dml_report_results_json",
        "dml_report_free",
        "dml_string_free",
        "dml_bound_theorem1",
        "dml_bound_theorem2",
        "dml_sup_t_critical_value",
        "dml_ks_distance",
        "typedef struct DmlReport DmlReport",
        "DML_STATUS_NUMERICAL_ERROR = 3",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dml.h"))
        .status()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success());
}
