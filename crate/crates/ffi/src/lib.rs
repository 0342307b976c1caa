//! C ABI over `timebin-core`.
//!
//! Handles are opaque and owned by the caller: every `*_new`/`*_from_*`
//! result must be released with the matching `*_free`. Fallible calls return
//! a [`TbStatus`]; the message of the last failure on the calling thread is
//! available from [`tb_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use timebin_core::config::RunConfig;
use timebin_core::protocol::DriveMode;
use timebin_core::pulses::{analytical_detuning, calibrate_rotation};
use timebin_core::stabilizers::{higher_order_stabilizers, length_bound, witness, LengthBound, PipelineSetup, StabilizerReport};
use timebin_core::Error;

/// Result codes of fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    TbOk = 0,
    TbNullArgument = 1,
    TbConfigError = 2,
    TbNumericalError = 3,
    TbDegenerateInput = 4,
    TbIoError = 5,
    TbPanic = 6,
}

/// Loss channel selector for [`tb_config_set_loss`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbLossChannel {
    TbRadiative = 0,
    TbDephasing = 1,
}

/// Opaque run configuration.
pub struct TbConfig {
    inner: RunConfig,
}

/// Opaque stabilizer report.
pub struct TbReport {
    inner: StabilizerReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> TbStatus {
    match err.exit_code() {
        2 => TbStatus::TbConfigError,
        3 => TbStatus::TbNumericalError,
        4 => TbStatus::TbDegenerateInput,
        _ => TbStatus::TbIoError,
    }
}

fn guard<F>(f: F) -> TbStatus
where
    F: FnOnce() -> Result<(), (TbStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TbStatus::TbOk,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TbStatus::TbPanic
        }
    }
}

fn lift(err: Error) -> (TbStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (TbStatus, String) {
    (TbStatus::TbNullArgument, format!("{what} is NULL"))
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Configuration with all defaults.
#[no_mangle]
pub extern "C" fn tb_config_default() -> *mut TbConfig {
    Box::into_raw(Box::new(TbConfig { inner: RunConfig::default() }))
}

/// Reads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_config_from_file(path: *const c_char, out: *mut *mut TbConfig) -> TbStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let p = CStr::from_ptr(path).to_str().map_err(|_| (TbStatus::TbConfigError, "path is not UTF-8".into()))?;
        let cfg = RunConfig::load(Path::new(p)).map_err(lift)?;
        *out = Box::into_raw(Box::new(TbConfig { inner: cfg }));
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tb_config_free(config: *mut TbConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Sets a transition-state loss rate (μeV).
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tb_config_set_loss(config: *mut TbConfig, channel: TbLossChannel, rate: f64) -> TbStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| null("config"))?;
        let mut sys = cfg.inner.system.clone();
        match channel {
            TbLossChannel::TbRadiative => sys.gamma_r_tu = rate,
            TbLossChannel::TbDephasing => sys.gamma_d_tu = rate,
        }
        sys.validate().map_err(lift)?;
        cfg.inner.system = sys;
        Ok(())
    })
}

/// Closed-form detuning branches (μeV) for rotation angle `theta`.
///
/// # Safety
/// `minus` and `plus` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tb_analytical_detuning(
    theta: f64,
    epsilon: f64,
    sigma: f64,
    minus: *mut f64,
    plus: *mut f64,
) -> TbStatus {
    guard(|| {
        if minus.is_null() || plus.is_null() {
            return Err(null("output"));
        }
        let (m, p) = analytical_detuning(theta, epsilon, sigma).map_err(lift)?;
        *minus = m;
        *plus = p;
        Ok(())
    })
}

/// Calibrates R_ϑ(Θ); writes the detuning (μeV) and the average fidelity.
///
/// # Safety
/// `config` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tb_calibrate_rotation(
    config: *const TbConfig,
    theta: f64,
    azimuth: f64,
    detuning: *mut f64,
    fidelity: *mut f64,
) -> TbStatus {
    guard(|| {
        let cfg = config.as_ref().ok_or_else(|| null("config"))?;
        if detuning.is_null() || fidelity.is_null() {
            return Err(null("output"));
        }
        let c = calibrate_rotation(theta, azimuth, &cfg.inner.system, &cfg.inner.solver).map_err(lift)?;
        *detuning = c.spec.detuning;
        *fidelity = c.fidelity;
        Ok(())
    })
}

/// Full pipeline on a kmax + 2 qubit protocol with calibrated rotations.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_run_stabilizers(
    config: *const TbConfig,
    resolution: u32,
    kmax: u32,
    out: *mut *mut TbReport,
) -> TbStatus {
    guard(|| {
        let cfg = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = &cfg.inner;
        let rot = c.resolve_pulses().map_err(lift)?;
        let setup = PipelineSetup {
            config: c.system.clone(),
            bins: c.bins,
            pulses: c.protocol_pulses(&rot),
            settings: c.solver,
            mode: DriveMode::Pulsed,
            resolution: resolution as usize,
        };
        let ctx = setup.context(kmax as usize + 2).map_err(lift)?;
        let report = higher_order_stabilizers(&ctx, kmax as usize, resolution as usize).map_err(lift)?;
        *out = Box::into_raw(Box::new(TbReport { inner: report }));
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tb_report_free(report: *mut TbReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// ⟨ΦZ⟩ as (re, im).
///
/// # Safety
/// `report` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tb_report_phi_z(report: *const TbReport, re: *mut f64, im: *mut f64) -> TbStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if re.is_null() || im.is_null() {
            return Err(null("output"));
        }
        *re = r.inner.phi_z.value.re;
        *im = r.inner.phi_z.value.im;
        Ok(())
    })
}

/// Number of ⟨ZΦZ⟩ values in the report (0 for a NULL handle).
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tb_report_z_phi_z_count(report: *const TbReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.z_phi_z.len())
}

/// ⟨ZΦZ⟩⁽ᵏ⁾ as (re, im) for 1-based `k`.
///
/// # Safety
/// `report` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tb_report_z_phi_z(report: *const TbReport, k: usize, re: *mut f64, im: *mut f64) -> TbStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if re.is_null() || im.is_null() {
            return Err(null("output"));
        }
        let v = k
            .checked_sub(1)
            .and_then(|i| r.inner.z_phi_z.get(i))
            .ok_or_else(|| (TbStatus::TbConfigError, format!("stabilizer index {k} out of range")))?;
        *re = v.value.re;
        *im = v.value.im;
        Ok(())
    })
}

/// ⟨W⟩ for a cluster of `n` qubits; missing ⟨ZXZ⟩ terms repeat the smallest
/// supplied one. NaN when `zxz` is NULL with `len > 0`.
///
/// # Safety
/// `zxz` must point to `len` doubles (or be NULL when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn tb_witness(xz: f64, zxz: *const f64, len: usize, n: usize) -> f64 {
    let values: &[f64] = if len == 0 {
        &[]
    } else if zxz.is_null() {
        return f64::NAN;
    } else {
        std::slice::from_raw_parts(zxz, len)
    };
    witness(xz, values, n).value
}

/// floor(xz/(1 − zxz) + 1). Writes 1 to `unbounded` (and 0 to `out`) when
/// zxz ≥ 1.
///
/// # Safety
/// Outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tb_length_bound(xz: f64, zxz: f64, out: *mut u64, unbounded: *mut i32) -> TbStatus {
    guard(|| {
        if out.is_null() || unbounded.is_null() {
            return Err(null("output"));
        }
        match length_bound(xz, zxz) {
            LengthBound::Finite(n) => {
                *out = n;
                *unbounded = 0;
            }
            LengthBound::Unbounded => {
                *out = 0;
                *unbounded = 1;
            }
        }
        Ok(())
    })
}
