//! C ABI over `covert-fbl`.
//!
//! Every function returns a [`CfblStatus`] and writes results through out
//! pointers. On failure a description is kept per thread and can be read
//! with [`cfbl_last_error_message`]. Designs are returned as opaque
//! [`CfblDesign`] handles released with [`cfbl_design_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use covert_fbl::channel::{delta_fbl, rate_fbl, ChannelParams};
use covert_fbl::design::{optimize_design, ConstraintMode, CovertConstraint, DesignResult};
use covert_fbl::detection::total_error;
use covert_fbl::specfun::{q_func, q_inv};
use covert_fbl::{Error, Tolerance};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfblStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Domain = 3,
    Convergence = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfblMode {
    Kl = 0,
    Exact = 1,
}

/// Radiometer operating point.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CfblDetection {
    pub threshold: f64,
    pub p_false: f64,
    pub p_miss: f64,
    /// `p_false + p_miss`
    pub xi: f64,
    pub kl: f64,
    pub pinsker_bound: f64,
}

/// Plain-value view of a design.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CfblDesignValues {
    pub n_star: u64,
    pub p_star: f64,
    pub total_power: f64,
    pub r_star: f64,
    pub delta_star: f64,
    pub eta_star: f64,
    pub eta_per_use: f64,
    pub residual: f64,
    pub iterations: u64,
}

/// Opaque design handle.
pub struct CfblDesign {
    inner: DesignResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(e: &Error) -> CfblStatus {
    match e {
        Error::InvalidParameter(_) => CfblStatus::InvalidParameter,
        Error::Domain { .. } => CfblStatus::Domain,
        Error::Convergence { .. } => CfblStatus::Convergence,
    }
}

/// Run `body`, translating errors and panics into status codes.
fn guard<F>(body: F) -> CfblStatus
where
    F: FnOnce() -> Result<(), CfblStatus>,
{
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CfblStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_last_error("internal panic".to_owned());
            CfblStatus::Panic
        }
    }
}

fn fail(e: Error) -> CfblStatus {
    let status = status_of(&e);
    set_last_error(e.to_string());
    status
}

fn null_pointer(name: &str) -> CfblStatus {
    set_last_error(format!("{name} is null"));
    CfblStatus::NullPointer
}

/// # Safety
/// `out` must be null or valid for writing one `T`.
unsafe fn write_out<T>(out: *mut T, name: &str, value: T) -> Result<(), CfblStatus> {
    if out.is_null() {
        return Err(null_pointer(name));
    }
    out.write(value);
    Ok(())
}

/// Static description of a status code. Never null.
#[no_mangle]
pub extern "C" fn cfbl_status_str(status: CfblStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        CfblStatus::Ok => b"ok\0",
        CfblStatus::NullPointer => b"null pointer argument\0",
        CfblStatus::InvalidParameter => b"invalid parameter\0",
        CfblStatus::Domain => b"argument outside function domain\0",
        CfblStatus::Convergence => b"solver did not converge\0",
        CfblStatus::Panic => b"internal panic\0",
    };
    s.as_ptr().cast()
}

/// Message for the last failed call on this thread, or null after a
/// successful call. Valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn cfbl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Gaussian tail probability `Q(x)`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn cfbl_q_func(x: f64, out: *mut f64) -> CfblStatus {
    guard(|| {
        let v = q_func(x).map_err(fail)?.value();
        write_out(out, "out", v)
    })
}

/// Inverse of `Q` on `(0, 1)`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn cfbl_q_inv(p: f64, out: *mut f64) -> CfblStatus {
    guard(|| {
        let v = q_inv(p).map_err(fail)?;
        write_out(out, "out", v)
    })
}

/// Normal-approximation coding rate (bits per use) at blocklength `n` and
/// decoding error `delta`. Only `power / sigma_b2` matters.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn cfbl_rate(
    sigma_b2: f64,
    power: f64,
    n: u64,
    delta: f64,
    out: *mut f64,
) -> CfblStatus {
    guard(|| {
        let params = ChannelParams::new(sigma_b2, 1.0, power).map_err(fail)?;
        let v = rate_fbl(&params, n, delta).map_err(fail)?;
        write_out(out, "out", v)
    })
}

/// Decoding error at rate `rate`; inverse of [`cfbl_rate`].
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn cfbl_delta(
    sigma_b2: f64,
    power: f64,
    n: u64,
    rate: f64,
    out: *mut f64,
) -> CfblStatus {
    guard(|| {
        let params = ChannelParams::new(sigma_b2, 1.0, power).map_err(fail)?;
        let v = delta_fbl(&params, n, rate).map_err(fail)?.value();
        write_out(out, "out", v)
    })
}

/// Radiometer error rates for `n` observations at transmit power `power`.
///
/// # Safety
/// `out` must be null or point to a writable `CfblDetection`.
#[no_mangle]
pub unsafe extern "C" fn cfbl_detection(
    sigma_w2: f64,
    power: f64,
    n: u64,
    out: *mut CfblDetection,
) -> CfblStatus {
    guard(|| {
        let params = ChannelParams::new(1.0, sigma_w2, power).map_err(fail)?;
        let r = total_error(&params, n).map_err(fail)?;
        write_out(
            out,
            "out",
            CfblDetection {
                threshold: r.threshold,
                p_false: r.p_false.value(),
                p_miss: r.p_miss.value(),
                xi: r.xi,
                kl: r.kl,
                pinsker_bound: r.pinsker_bound,
            },
        )
    })
}

/// Solve the covert design at maximum blocklength `n_max`. On success
/// `*out` owns a new handle; release it with [`cfbl_design_free`].
///
/// # Safety
/// `out` must be null or point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cfbl_design_new(
    n_max: u64,
    epsilon: f64,
    mode: CfblMode,
    sigma_b2: f64,
    sigma_w2: f64,
    out: *mut *mut CfblDesign,
) -> CfblStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_pointer("out"));
        }
        out.write(ptr::null_mut());
        let mode = match mode {
            CfblMode::Kl => ConstraintMode::Kl,
            CfblMode::Exact => ConstraintMode::Exact,
        };
        let constraint = CovertConstraint::new(epsilon, mode).map_err(fail)?;
        let inner = optimize_design(
            n_max,
            &constraint,
            sigma_b2,
            sigma_w2,
            &Tolerance::default(),
        )
        .map_err(fail)?;
        out.write(Box::into_raw(Box::new(CfblDesign { inner })));
        Ok(())
    })
}

/// Copy the values of a design.
///
/// # Safety
/// `design` must be null or a live handle from [`cfbl_design_new`]; `out`
/// must be null or point to a writable `CfblDesignValues`.
#[no_mangle]
pub unsafe extern "C" fn cfbl_design_get(
    design: *const CfblDesign,
    out: *mut CfblDesignValues,
) -> CfblStatus {
    guard(|| {
        let Some(design) = design.as_ref() else {
            return Err(null_pointer("design"));
        };
        let d = &design.inner;
        write_out(
            out,
            "out",
            CfblDesignValues {
                n_star: d.n_star,
                p_star: d.p_star,
                total_power: d.total_power,
                r_star: d.r_star,
                delta_star: d.delta_star.value(),
                eta_star: d.eta_star,
                eta_per_use: d.eta_per_use(),
                residual: d.residual,
                iterations: d.iterations as u64,
            },
        )
    })
}

/// Release a design handle. Null is ignored.
///
/// # Safety
/// `design` must be null or a handle from [`cfbl_design_new`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn cfbl_design_free(design: *mut CfblDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn status_strings_are_terminated() {
        for s in [
            CfblStatus::Ok,
            CfblStatus::NullPointer,
            CfblStatus::InvalidParameter,
            CfblStatus::Domain,
            CfblStatus::Convergence,
            CfblStatus::Panic,
        ] {
            let text = unsafe { CStr::from_ptr(cfbl_status_str(s)) };
            assert!(!text.to_bytes().is_empty());
        }
    }

    #[test]
    fn last_error_cleared_on_success() {
        let mut v = 0.0;
        unsafe {
            assert_eq!(cfbl_q_inv(2.0, &mut v), CfblStatus::Domain);
            assert!(!cfbl_last_error_message().is_null());
            assert_eq!(cfbl_q_inv(0.5, &mut v), CfblStatus::Ok);
        }
        assert!(cfbl_last_error_message().is_null());
        assert!(v.abs() < 1e-15);
    }
}
