use std::ffi::{CStr, CString};
use std::ptr;

use gotu_ffi::*;

fn last_error() -> String {
    let p = gotu_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn example1_and_inverse_block_cross_the_boundary() {
    let mut g = [0.0f64; 3];
    assert_eq!(unsafe { gotu_example1_asymptotic(1_000_000, g.as_mut_ptr()) }, GotuStatus::Ok);
    assert!((g[0] - 0.6).abs() < 1e-3 && (g[1] - 0.4).abs() < 1e-3);
    assert_eq!(unsafe { gotu_example1_asymptotic(1, g.as_mut_ptr()) }, GotuStatus::Invalid);
    assert!(last_error().contains("d ≥ 2"));
    let mut b = [0.0f64; 4];
    assert_eq!(unsafe { gotu_prop1_inverse_block(15, b.as_mut_ptr()) }, GotuStatus::Ok);
    assert!(b.iter().all(|v| v.is_finite()));
    assert_eq!(unsafe { gotu_prop1_inverse_block(15, ptr::null_mut()) }, GotuStatus::NullPointer);
}

#[test]
fn preset_run_and_rows() {
    let name = CString::new("table2-square").unwrap();
    let mut spec = ptr::null_mut();
    assert_eq!(unsafe { gotu_spec_from_preset(name.as_ptr(), &mut spec) }, GotuStatus::Ok);
    assert_eq!(unsafe { gotu_spec_configure(spec, 3, 1, 128, 2048) }, GotuStatus::Ok);
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { gotu_spec_to_json(spec, &mut json) }, GotuStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"width\": 128"));
    unsafe { gotu_string_free(json) };

    let mut result = ptr::null_mut();
    assert_eq!(unsafe { gotu_run(spec, &mut result) }, GotuStatus::Ok);
    assert_eq!(unsafe { gotu_result_rows(result) }, 2);
    let (mut label, mut mean, mut std, mut se) = (ptr::null(), 0.0, 0.0, 0.0);
    assert_eq!(unsafe { gotu_result_row(result, 0, &mut label, &mut mean, &mut std, &mut se) }, GotuStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(label) }.to_str().unwrap(), "1");
    assert!(std.is_nan(), "one repetition reports no spread");
    assert!(mean > 0.4 && mean < 0.8, "{mean}");
    assert_eq!(unsafe { gotu_result_row(result, 9, &mut label, &mut mean, &mut std, &mut se) }, GotuStatus::Invalid);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gotu_result_write(result, path.as_ptr()) }, GotuStatus::Ok);
    assert!(dir.path().join("results.csv").exists());
    unsafe {
        gotu_result_free(result);
        gotu_spec_free(spec);
    }
}

#[test]
fn configs_and_error_codes() {
    let mut spec = ptr::null_mut();
    let bad = CString::new("regime = small-features\n").unwrap();
    assert_eq!(unsafe { gotu_spec_from_config(bad.as_ptr(), &mut spec) }, GotuStatus::Invalid);
    assert!(last_error().contains("eps"));
    assert!(spec.is_null());
    let unknown = CString::new("table3").unwrap();
    assert_eq!(unsafe { gotu_spec_from_preset(unknown.as_ptr(), &mut spec) }, GotuStatus::Invalid);
    assert_eq!(unsafe { gotu_spec_from_preset(ptr::null(), &mut spec) }, GotuStatus::NullPointer);

    let src = CString::new("d = 3\nmethod = limit-predictor\nkernel = monte-carlo\nkernel_samples = 10\nrepetitions = 1\n").unwrap();
    assert_eq!(unsafe { gotu_spec_from_config(src.as_ptr(), &mut spec) }, GotuStatus::Ok);
    let mut result = ptr::null_mut();
    assert_eq!(unsafe { gotu_run(spec, &mut result) }, GotuStatus::Invalid);
    assert!(last_error().starts_with("kernel:"), "{}", last_error());
    assert!(result.is_null());
    unsafe { gotu_spec_free(spec) };
    unsafe { gotu_spec_free(ptr::null_mut()) };
    assert_eq!(unsafe { gotu_result_rows(ptr::null()) }, 0);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(gotu_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(dir.join("gotu.h")).unwrap();
    for f in [
        "gotu_last_error", "gotu_version", "gotu_spec_from_preset", "gotu_spec_from_config", "gotu_spec_configure",
        "gotu_spec_to_json", "gotu_spec_free", "gotu_string_free", "gotu_run", "gotu_result_rows", "gotu_result_row",
        "gotu_result_write", "gotu_result_free", "gotu_example1_asymptotic", "gotu_prop1_inverse_block",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct GotuSpec GotuSpec;"));
    let probe = tempfile::tempdir().unwrap();
    let src = probe.path().join("probe.c");
    std::fs::write(&src, "#include \"gotu.h\"\nint main(void) { GotuSpec *s = 0; return (int)gotu_spec_free == 0 || s != 0; }\n").unwrap();
    match std::process::Command::new("cc").arg("-std=c99").arg("-fsyntax-only").arg("-I").arg(&dir).arg(&src).output() {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler; header syntax not checked"),
    }
}
