use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use timebin_ffi::*;

fn last_error() -> String {
    let p = tb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn analytical_detuning_through_the_abi() {
    let (mut m, mut p) = (0.0, 0.0);
    let sigma = 658.2119569 / 16.0;
    let s = unsafe { tb_analytical_detuning(std::f64::consts::PI, 500.0, sigma, &mut m, &mut p) };
    assert_eq!(s, TbStatus::TbOk);
    assert!((m - 3.408).abs() < 0.01, "{m}");
    assert!(p > 400.0);
    let s = unsafe { tb_analytical_detuning(std::f64::consts::PI, 500.0, sigma, ptr::null_mut(), &mut p) };
    assert_eq!(s, TbStatus::TbNullArgument);
    assert!(last_error().contains("NULL"));
}

#[test]
fn witness_and_bound() {
    let zxz = [0.96];
    let w = unsafe { tb_witness(0.96, zxz.as_ptr(), 1, 3) };
    assert!((w + 0.88).abs() < 1e-12);
    assert!(unsafe { tb_witness(0.5, ptr::null(), 2, 3) }.is_nan());
    let (mut n, mut unb) = (0u64, -1i32);
    assert_eq!(unsafe { tb_length_bound(1.0, 0.5, &mut n, &mut unb) }, TbStatus::TbOk);
    assert_eq!((n, unb), (3, 0));
    assert_eq!(unsafe { tb_length_bound(1.0, 1.0, &mut n, &mut unb) }, TbStatus::TbOk);
    assert_eq!(unb, 1);
}

#[test]
fn config_handles_and_errors() {
    let cfg = tb_config_default();
    assert!(!cfg.is_null());
    assert_eq!(unsafe { tb_config_set_loss(cfg, TbLossChannel::TbDephasing, 0.1) }, TbStatus::TbOk);
    assert_eq!(unsafe { tb_config_set_loss(cfg, TbLossChannel::TbRadiative, -1.0) }, TbStatus::TbConfigError);
    assert!(last_error().contains("gamma_r_tu"));
    unsafe { tb_config_free(cfg) };
    unsafe { tb_config_free(ptr::null_mut()) };

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "schema_version = 1\n[system]\ngamma_cyc = 2.0\n").unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { tb_config_from_file(c.as_ptr(), &mut out) }, TbStatus::TbOk);
    unsafe { tb_config_free(out) };

    std::fs::write(&path, "[system]\nnot_a_key = 1\n").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { tb_config_from_file(c.as_ptr(), &mut out) }, TbStatus::TbConfigError);
    assert!(out.is_null());
}

#[test]
fn calibration_and_stabilizers() {
    let cfg = tb_config_default();
    let (mut d, mut f) = (0.0, 0.0);
    let s = unsafe { tb_calibrate_rotation(cfg, std::f64::consts::PI, 0.0, &mut d, &mut f) };
    assert_eq!(s, TbStatus::TbOk);
    assert!(f > 0.99 && d.abs() < 5.0, "{d} {f}");

    let mut report = ptr::null_mut();
    assert_eq!(unsafe { tb_run_stabilizers(cfg, 24, 1, &mut report) }, TbStatus::TbOk);
    assert_eq!(unsafe { tb_report_z_phi_z_count(report) }, 1);
    let (mut re, mut im) = (0.0, 0.0);
    assert_eq!(unsafe { tb_report_phi_z(report, &mut re, &mut im) }, TbStatus::TbOk);
    assert!((re.hypot(im) - 1.0).abs() < 0.05);
    assert_eq!(unsafe { tb_report_z_phi_z(report, 1, &mut re, &mut im) }, TbStatus::TbOk);
    assert!((re.hypot(im) - 1.0).abs() < 0.05);
    assert_eq!(unsafe { tb_report_z_phi_z(report, 2, &mut re, &mut im) }, TbStatus::TbConfigError);
    assert_eq!(unsafe { tb_report_z_phi_z(report, 0, &mut re, &mut im) }, TbStatus::TbConfigError);
    unsafe { tb_report_free(report) };

    let mut report = ptr::null_mut();
    assert_eq!(unsafe { tb_run_stabilizers(cfg, 4, 1, &mut report) }, TbStatus::TbConfigError);
    assert!(report.is_null());
    unsafe { tb_config_free(cfg) };
}

#[test]
fn header_is_valid_c() {
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("timebin.h").exists());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"timebin.h\"\nint main(void) { TbConfig *c = tb_config_default(); tb_config_free(c); return TB_OK; }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header does not compile as C99"),
        Err(e) => eprintln!("no C compiler available, skipping: {e}"),
    }
}
