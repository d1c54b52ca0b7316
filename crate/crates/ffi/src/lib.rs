//! C ABI over `tribody`.
//!
//! Models live behind an opaque `TribodyModel` handle. Every fallible call
//! returns a `TribodyStatus`; on failure the message is kept per thread and
//! can be copied out with `tribody_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use tribody::couplings::{rate_ratios_fixed_etac, ModelSpec};
use tribody::metrology::{run_protocol, EchoStyle, ProtocolSpec, Readout};
use tribody::unitary::{find_tau_opt, qfi_curve};
use tribody::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TribodyStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Integration accuracy, search or fit failure.
    Numerical = 3,
    Failed = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TribodyModelKind {
    /// `chi3 (S+^3 + S-^3)`
    ThreeBody = 0,
    Oat = 1,
    Tat = 2,
}

/// Opaque model handle.
pub struct TribodyModel {
    spec: ModelSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn status_of(e: &Error) -> TribodyStatus {
    match e {
        _ if e.is_numerical() => TribodyStatus::Numerical,
        Error::InvalidParameter { .. }
        | Error::ZeroDetuning(_)
        | Error::NoDissipation(_)
        | Error::EmptyOperator { .. }
        | Error::Dimension { .. }
        | Error::Degenerate(_) => TribodyStatus::InvalidArgument,
        _ => TribodyStatus::Failed,
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TribodyStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TribodyStatus::Ok,
        Ok(Err(Fail::Null(name))) => {
            set_error(format!("null pointer passed as `{name}`"));
            TribodyStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TribodyStatus::Panic
        }
    }
}

fn out<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Fail> {
    // SAFETY: caller guarantees `p` is either null or valid for writes.
    unsafe { p.as_mut() }.ok_or(Fail::Null(name))
}

fn model<'a>(p: *const TribodyModel) -> Result<&'a TribodyModel, Fail> {
    // SAFETY: handles come from `tribody_model_new` and are not yet freed.
    unsafe { p.as_ref() }.ok_or(Fail::Null("model"))
}

fn slice<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    // SAFETY: non-null and valid for `len` reads per the caller contract.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn slice_mut<'a, T>(p: *mut T, len: usize, name: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    // SAFETY: non-null and valid for `len` writes per the caller contract.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

/// Creates a model with interaction `strength` (`chi3` or `chi2`),
/// collective decay `gamma` and single-atom rate `gamma_single`.
/// Free with `tribody_model_free`.
///
/// # Safety
///
/// `out_model` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tribody_model_new(
    kind: TribodyModelKind,
    strength: f64,
    gamma: f64,
    gamma_single: f64,
    out_model: *mut *mut TribodyModel,
) -> TribodyStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        for (name, v) in [("strength", strength), ("gamma", gamma), ("gamma_single", gamma_single)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Fail::Lib(Error::InvalidParameter {
                    name,
                    reason: "must be finite and non-negative".into(),
                }));
            }
        }
        let spec = match kind {
            TribodyModelKind::ThreeBody => ModelSpec::three_body(strength, gamma, gamma_single),
            TribodyModelKind::Oat => ModelSpec::oat(strength, gamma, gamma_single),
            TribodyModelKind::Tat => ModelSpec::tat(strength, gamma, gamma_single),
        };
        *slot = Box::into_raw(Box::new(TribodyModel { spec }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
///
/// `model` must be null or a live handle from `tribody_model_new`; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tribody_model_free(model: *mut TribodyModel) {
    if !model.is_null() {
        // SAFETY: the pointer came from `Box::into_raw` in `tribody_model_new`.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Physical time for the rescaled time `tau` at `n_atoms`.
///
/// # Safety
///
/// `model` must be null or a live handle; `out_t` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tribody_time_of_tau(
    model: *const TribodyModel,
    n_atoms: usize,
    tau: f64,
    out_t: *mut f64,
) -> TribodyStatus {
    guard(|| {
        *out(out_t, "out_t")? = self::model(model)?.spec.time_of_tau(n_atoms, tau);
        Ok(())
    })
}

/// QFI for `Sz` rotations along the closed evolution from the north pole,
/// at each of `len` rescaled times. Open models are rejected.
///
/// # Safety
///
/// `model` must be null or a live handle; `taus` and `out_qfi` null or valid for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn tribody_qfi_curve(
    model: *const TribodyModel,
    n_atoms: usize,
    taus: *const f64,
    len: usize,
    out_qfi: *mut f64,
) -> TribodyStatus {
    guard(|| {
        let m = self::model(model)?;
        if !m.spec.is_unitary() {
            return Err(Fail::Lib(Error::InvalidParameter {
                name: "model",
                reason: "QFI curves need a closed model".into(),
            }));
        }
        let taus = slice(taus, len, "taus")?;
        let dst = slice_mut(out_qfi, len, "out_qfi")?;
        dst.copy_from_slice(&qfi_curve(n_atoms, &m.spec, taus)?);
        Ok(())
    })
}

/// First QFI peak of the closed three-body model.
///
/// # Safety
///
/// Output pointers must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tribody_find_tau_opt(n_atoms: usize, out_tau: *mut f64, out_qfi: *mut f64) -> TribodyStatus {
    guard(|| {
        let p = find_tau_opt(n_atoms, &ModelSpec::unitary_three_body())?;
        *out(out_tau, "out_tau")? = p.tau_opt;
        *out(out_qfi, "out_qfi")? = p.qfi_peak;
        Ok(())
    })
}

/// Metrological gain over the standard quantum limit of the sign-flip echo
/// with `Sz` readout. Works for closed and open models.
///
/// # Safety
///
/// `model` must be null or a live handle; `out_gain` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tribody_echo_gain(
    model: *const TribodyModel,
    n_atoms: usize,
    tau: f64,
    phi0: f64,
    out_gain: *mut f64,
) -> TribodyStatus {
    guard(|| {
        let spec = ProtocolSpec {
            model: self::model(model)?.spec.clone(),
            tau,
            phi0,
            readout: Readout::Sz,
            echo_style: EchoStyle::SignFlip,
        };
        *out(out_gain, "out_gain")? = run_protocol(&spec, n_atoms)?.gain_linear;
        Ok(())
    })
}

/// Collective and single-atom rates in units of `chi3` at fixed `eta_c`,
/// with `d = 2 Delta_c / kappa`.
///
/// # Safety
///
/// Output pointers must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tribody_rate_ratios_fixed_etac(
    n_atoms: usize,
    cooperativity: f64,
    d: f64,
    eta_c: f64,
    out_gamma: *mut f64,
    out_gamma_single: *mut f64,
) -> TribodyStatus {
    guard(|| {
        let r = rate_ratios_fixed_etac(n_atoms, cooperativity, d, eta_c)?;
        *out(out_gamma, "out_gamma")? = r.gamma_collective;
        *out(out_gamma_single, "out_gamma_single")? = r.gamma_single;
        Ok(())
    })
}

/// Copies the last error of this thread into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full length including the NUL, or 0
/// when the last call succeeded.
///
/// # Safety
///
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn tribody_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            // SAFETY: `buf` is valid for `len` bytes per the caller contract.
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n - 1) = 0;
            }
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tribody_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
