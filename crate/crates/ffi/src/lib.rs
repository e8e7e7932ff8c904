//! C ABI over `dml-core`.
//!
//! Every function returns a [`DmlStatus`]; on failure the message is
//! available from [`dml_last_error`] on the same thread until the next
//! call. Strings returned to the caller are released with
//! [`dml_string_free`], handles with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dml_core::bounds::{theorem1_bound, theorem2_terms, Regime, Theorem1Inputs, Theorem2Inputs};
use dml_core::cli::{parse_config_text, run, Report};
use dml_core::error::DmlError;
use dml_core::inference::{sup_t_critical_value, CorrelationEstimate, Sided};
use dml_core::montecarlo::ks_distance;

/// Status codes; 2 and 3 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmlStatus {
    Ok = 0,
    /// Null pointer, invalid UTF-8 or a bad enum value.
    InvalidArgument = 1,
    /// Configuration, validation or ingestion failure.
    InputError = 2,
    NumericalError = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmlRegime {
    HeavyTailQ = 0,
    SubGaussian = 1,
    Bounded = 2,
}

fn regime(code: i32) -> Result<Regime, Failure> {
    match code {
        c if c == DmlRegime::HeavyTailQ as i32 => Ok(Regime::HeavyTailQ),
        c if c == DmlRegime::SubGaussian as i32 => Ok(Regime::SubGaussian),
        c if c == DmlRegime::Bounded as i32 => Ok(Regime::Bounded),
        c => Err(invalid(&format!("unknown regime code {c}"))),
    }
}

/// Opaque result of [`dml_run`].
pub struct DmlReport {
    report: Report,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(DmlStatus, String);

impl From<DmlError> for Failure {
    fn from(e: DmlError) -> Self {
        let status = if e.is_input_error() {
            DmlStatus::InputError
        } else {
            DmlStatus::NumericalError
        };
        Failure(status, e.to_string())
    }
}

fn invalid(message: &str) -> Failure {
    Failure(DmlStatus::InvalidArgument, message.to_string())
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DmlStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DmlStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {message}"));
            DmlStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(&format!("{what} is not valid UTF-8")))
}

unsafe fn read_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(invalid(&format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| invalid("output contains a nul byte"))
}

/// Message of the last failed call on this thread, or null. Owned by the
/// library; do not free.
#[no_mangle]
pub extern "C" fn dml_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dml_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a configuration (TOML, or JSON if `is_json` is nonzero), runs it
/// and stores the report in `*out`.
///
/// # Safety
/// `config` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dml_run(
    config: *const c_char,
    is_json: i32,
    out: *mut *mut DmlReport,
) -> DmlStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let text = read_str(config, "config")?;
        let config = parse_config_text(text, is_json != 0)?;
        let report = run(&config).map_err(|e| Failure::from(e.source))?;
        *out = Box::into_raw(Box::new(DmlReport { report }));
        Ok(())
    })
}

/// Full report as JSON; free with [`dml_string_free`].
///
/// # Safety
/// `report` must come from [`dml_run`] and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dml_report_json(
    report: *const DmlReport,
    out: *mut *mut c_char,
) -> DmlStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let r = report.as_ref().ok_or_else(|| invalid("report is null"))?;
        *out = to_c_string(r.report.to_json()?)?;
        Ok(())
    })
}

/// Canonical JSON of the results block alone; free with [`dml_string_free`].
///
/// # Safety
/// `report` must come from [`dml_run`] and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dml_report_results_json(
    report: *const DmlReport,
    out: *mut *mut c_char,
) -> DmlStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let r = report.as_ref().ok_or_else(|| invalid("report is null"))?;
        *out = to_c_string(r.report.results_json()?)?;
        Ok(())
    })
}

/// # Safety
/// `report` must come from [`dml_run`] or be null.
#[no_mangle]
pub unsafe extern "C" fn dml_report_free(report: *mut DmlReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dml_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Total of the finite-dimensional bound. `inputs_json` is an object of
/// input overrides (`"{}"` for the defaults); `regime_code` is a [`DmlRegime`]
/// value.
///
/// # Safety
/// `inputs_json` must be a nul-terminated string and `total` valid.
#[no_mangle]
pub unsafe extern "C" fn dml_bound_theorem1(
    inputs_json: *const c_char,
    regime_code: i32,
    total: *mut f64,
) -> DmlStatus {
    guard(|| {
        out_ptr(total, "total")?;
        let regime = regime(regime_code)?;
        let inputs: Theorem1Inputs = serde_json::from_str(read_str(inputs_json, "inputs_json")?)
            .map_err(|e| Failure(DmlStatus::InputError, e.to_string()))?;
        *total = theorem1_bound(&inputs, regime)?.total;
        Ok(())
    })
}

/// Total of the continuum bound.
///
/// # Safety
/// `inputs_json` must be a nul-terminated string and `total` valid.
#[no_mangle]
pub unsafe extern "C" fn dml_bound_theorem2(
    inputs_json: *const c_char,
    total: *mut f64,
) -> DmlStatus {
    guard(|| {
        out_ptr(total, "total")?;
        let inputs: Theorem2Inputs = serde_json::from_str(read_str(inputs_json, "inputs_json")?)
            .map_err(|e| Failure(DmlStatus::InputError, e.to_string()))?;
        *total = theorem2_terms(&inputs)?.total;
        Ok(())
    })
}

/// Sup-t critical value for a `p x p` row-major correlation matrix.
///
/// # Safety
/// `corr` must point to `p * p` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dml_sup_t_critical_value(
    corr: *const f64,
    p: usize,
    level: f64,
    draws: usize,
    seed: u64,
    one_sided: i32,
    out: *mut f64,
) -> DmlStatus {
    guard(|| {
        out_ptr(out, "out")?;
        if p == 0 {
            return Err(invalid("p must be positive"));
        }
        let values = read_slice(
            corr,
            p.checked_mul(p).ok_or_else(|| invalid("p is too large"))?,
            "corr",
        )?;
        let matrix = nalgebra::DMatrix::from_row_slice(p, p, values);
        let corr = CorrelationEstimate::from_matrix(matrix, 0.0)?;
        let sided = if one_sided != 0 {
            Sided::OneSided
        } else {
            Sided::TwoSided
        };
        *out = sup_t_critical_value(&corr, level, draws, seed, sided)?;
        Ok(())
    })
}

/// Two-sample Kolmogorov distance.
///
/// # Safety
/// `a` and `b` must point to `na` and `nb` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dml_ks_distance(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    out: *mut f64,
) -> DmlStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = ks_distance(read_slice(a, na, "a")?, read_slice(b, nb, "b")?)?;
        Ok(())
    })
}
