//! C ABI for the residual-spike covariance test.
//!
//! All entry points are panic-safe: panics are caught and reported as
//! `RESPIKE_ERR_INTERNAL`. Reports are returned through an opaque handle
//! that must be released with [`respike_report_free`]; strings obtained
//! from [`respike_report_json`] must be released with
//! [`respike_string_free`].

use std::ffi::{c_char, c_double, c_int, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ndarray::Array2;
use respike::error::Error;
use respike::nulllaw::null_law_mp;
use respike::testkit::{residual_spike_test, TestReport, Variant};

/// Success.
pub const RESPIKE_OK: c_int = 0;
/// A pointer argument was null or a dimension was zero.
pub const RESPIKE_ERR_INVALID_ARGUMENT: c_int = 1;
/// No detectable spike in one of the samples.
pub const RESPIKE_ERR_NOT_DETECTABLE: c_int = 2;
/// The variable counts of the two samples differ.
pub const RESPIKE_ERR_DIMENSION_MISMATCH: c_int = 3;
/// Numerical failure (eigensolver, degenerate spectrum, complex branch).
pub const RESPIKE_ERR_NUMERICAL: c_int = 4;
/// Unexpected internal error.
pub const RESPIKE_ERR_INTERNAL: c_int = 5;

/// Filtering variant selector for [`respike_test`].
pub const RESPIKE_VARIANT_BOTH_FILTERED: c_int = 0;
/// Only the X estimate is filtered; Y enters raw.
pub const RESPIKE_VARIANT_FILTERED_RAW: c_int = 1;

/// Opaque result of a residual-spike test.
pub struct RespikeReport {
    inner: TestReport,
}

/// Null-law parameters of Theorem 2.3 in the Marcenko-Pastur special case.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct RespikeNullLawMp {
    pub lambda_plus: c_double,
    pub lambda_minus: c_double,
    pub sigma_plus: c_double,
    pub sigma_minus: c_double,
}

fn error_code(e: &Error) -> c_int {
    match e {
        Error::NotDetectable => RESPIKE_ERR_NOT_DETECTABLE,
        Error::DimensionMismatch(_) => RESPIKE_ERR_DIMENSION_MISMATCH,
        Error::NonSymmetric(_)
        | Error::ConvergenceFailure(_)
        | Error::ZeroTrace
        | Error::PoleTooClose(_)
        | Error::NotUnit(_)
        | Error::DegenerateSpectrum(_)
        | Error::DegenerateBulk
        | Error::NoRoot(_)
        | Error::ComplexBranch(_)
        | Error::RootBracketFailure(_, _)
        | Error::AllZero => RESPIKE_ERR_NUMERICAL,
        _ => RESPIKE_ERR_INTERNAL,
    }
}

unsafe fn matrix_from_raw(data: *const c_double, m: usize, n: usize) -> Option<Array2<f64>> {
    if data.is_null() || m == 0 || n == 0 {
        return None;
    }
    let slice = std::slice::from_raw_parts(data, m * n);
    Array2::from_shape_vec((m, n), slice.to_vec()).ok()
}

/// Run the residual-spike test on two row-major m-by-n data matrices
/// (rows are variables, columns are observations).
///
/// On success writes a report handle to `out` and returns `RESPIKE_OK`;
/// the caller owns the handle and must free it with [`respike_report_free`].
///
/// # Safety
/// `x` must point to `m * n_x` doubles, `y` to `m * n_y` doubles, and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn respike_test(
    x: *const c_double,
    y: *const c_double,
    m: usize,
    n_x: usize,
    n_y: usize,
    alpha: c_double,
    variant: c_int,
    center: bool,
    out: *mut *mut RespikeReport,
) -> c_int {
    if out.is_null() || !(0.0..1.0).contains(&alpha) {
        return RESPIKE_ERR_INVALID_ARGUMENT;
    }
    let (ax, ay) = match (matrix_from_raw(x, m, n_x), matrix_from_raw(y, m, n_y)) {
        (Some(ax), Some(ay)) => (ax, ay),
        _ => return RESPIKE_ERR_INVALID_ARGUMENT,
    };
    let var = match variant {
        RESPIKE_VARIANT_BOTH_FILTERED => Variant::BothFiltered,
        RESPIKE_VARIANT_FILTERED_RAW => Variant::FilteredRaw,
        _ => return RESPIKE_ERR_INVALID_ARGUMENT,
    };
    let result = catch_unwind(AssertUnwindSafe(|| {
        residual_spike_test(&ax, &ay, alpha, var, center)
    }));
    match result {
        Ok(Ok(report)) => {
            *out = Box::into_raw(Box::new(RespikeReport { inner: report }));
            RESPIKE_OK
        }
        Ok(Err(e)) => error_code(&e),
        Err(_) => RESPIKE_ERR_INTERNAL,
    }
}

/// Release a report handle. Passing null is a no-op.
///
/// # Safety
/// `report` must have come from [`respike_test`] and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn respike_report_free(report: *mut RespikeReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// 1 if the test rejects equality at its alpha level, 0 otherwise
/// (also 0 for a null handle).
///
/// # Safety
/// `report` must be a live handle from [`respike_test`] or null.
#[no_mangle]
pub unsafe extern "C" fn respike_report_reject(report: *const RespikeReport) -> c_int {
    match report.as_ref() {
        Some(r) if r.inner.reject => 1,
        _ => 0,
    }
}

/// Observed extreme eigenvalues of the filtered product. Returns
/// `RESPIKE_ERR_INVALID_ARGUMENT` on null pointers.
///
/// # Safety
/// `report` must be a live handle; `lambda_max` and `lambda_min` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn respike_report_extremes(
    report: *const RespikeReport,
    lambda_max: *mut c_double,
    lambda_min: *mut c_double,
) -> c_int {
    let r = match report.as_ref() {
        Some(r) => r,
        None => return RESPIKE_ERR_INVALID_ARGUMENT,
    };
    if lambda_max.is_null() || lambda_min.is_null() {
        return RESPIKE_ERR_INVALID_ARGUMENT;
    }
    *lambda_max = r.inner.lambda_max_obs;
    *lambda_min = r.inner.lambda_min_obs;
    RESPIKE_OK
}

/// Two-sided p-values for the upper and lower extremes.
///
/// # Safety
/// `report` must be a live handle; `p_max` and `p_min` must be valid
/// pointers.
#[no_mangle]
pub unsafe extern "C" fn respike_report_pvalues(
    report: *const RespikeReport,
    p_max: *mut c_double,
    p_min: *mut c_double,
) -> c_int {
    let r = match report.as_ref() {
        Some(r) => r,
        None => return RESPIKE_ERR_INVALID_ARGUMENT,
    };
    if p_max.is_null() || p_min.is_null() {
        return RESPIKE_ERR_INVALID_ARGUMENT;
    }
    *p_max = r.inner.p_max;
    *p_min = r.inner.p_min;
    RESPIKE_OK
}

/// The full report serialized as JSON. The returned string must be freed
/// with [`respike_string_free`]; returns null for a null handle.
///
/// # Safety
/// `report` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn respike_report_json(report: *const RespikeReport) -> *mut c_char {
    match report.as_ref() {
        Some(r) => match CString::new(r.inner.to_json()) {
            Ok(s) => s.into_raw(),
            Err(_) => std::ptr::null_mut(),
        },
        None => std::ptr::null_mut(),
    }
}

/// Release a string returned by [`respike_report_json`]. Null is a no-op.
///
/// # Safety
/// `s` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn respike_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Closed-form null-law parameters for Marcenko-Pastur bulks with aspect
/// ratios `c_x = m / n_x` and `c_y = m / n_y`. Returns
/// `RESPIKE_ERR_INVALID_ARGUMENT` for non-positive ratios or a null `out`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn respike_null_law_mp(
    c_x: c_double,
    c_y: c_double,
    m: usize,
    out: *mut RespikeNullLawMp,
) -> c_int {
    if out.is_null() || !(c_x > 0.0) || !(c_y > 0.0) || m == 0 {
        return RESPIKE_ERR_INVALID_ARGUMENT;
    }
    let law = null_law_mp(c_x, c_y, m);
    *out = RespikeNullLawMp {
        lambda_plus: law.lambda_plus,
        lambda_minus: law.lambda_minus,
        sigma_plus: law.sigma_plus,
        sigma_minus: law.sigma_minus,
    };
    RESPIKE_OK
}
