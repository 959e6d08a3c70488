//! C interface. Payoffs and testers are opaque handles that must be released
//! with their `_free` function; every fallible call returns a `CbStatus` and
//! leaves a message retrievable with [`cb_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use causalbench::channels::{average_gate_fidelity, QubitChannel, Rotation};
use causalbench::discrimination::{average_success, control_entropy, GridSpec, Setup, TaskConfig};
use causalbench::fock::{truncation_order, DEFAULT_TAIL_TOL};
use causalbench::linalg::{c64, CMat};
use causalbench::sdp::{optimize_fco, SolverSettings, Status};
use causalbench::tester::{
    assemble_g_finite, assemble_g_haar, assemble_g_ideal, optimal_circuit_ba, success_probability, tester_from_circuit,
    Order, PayoffPair, Tester,
};
use causalbench::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Dimension = 3,
    Solver = 4,
    Rank = 5,
    MemoryCap = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbSetup {
    Qs = 0,
    FourBox = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbOrder {
    AThenB = 0,
    BThenA = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CbSuccessReport {
    pub p_commuting: f64,
    pub p_anticommuting: f64,
    pub p_average: f64,
    pub quadrature_error_estimate: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CbFcoResult {
    pub p_star: f64,
    pub certificate: f64,
    pub iterations: usize,
    /// 1 when the solver met its tolerance.
    pub converged: i32,
}

/// Opaque payoff pair.
pub struct CbPayoff(PayoffPair);

/// Opaque tester.
pub struct CbTester(Tester);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CbStatus {
    match e {
        Error::InvalidInput(_) => CbStatus::InvalidInput,
        Error::Dimension(_) => CbStatus::Dimension,
        Error::Solver { .. } => CbStatus::Solver,
        Error::Rank { .. } => CbStatus::Rank,
        Error::MemoryCap { .. } => CbStatus::MemoryCap,
        Error::Io { .. } | Error::Serde(_) => CbStatus::Io,
    }
}

fn guard<F: FnOnce() -> Result<(), Error>>(f: F) -> CbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CbStatus::Ok,
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            CbStatus::Panic
        }
    }
}

fn null_error(what: &str) -> CbStatus {
    set_error(format!("{what} is null"));
    CbStatus::NullPointer
}

fn order_of(o: CbOrder) -> Order {
    match o {
        CbOrder::AThenB => Order::AThenB,
        CbOrder::BThenA => Order::BThenA,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length, or 0 if none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cb_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Average gate fidelity of the rotation by `theta` about the equatorial
/// axis at `phi` driven by a coherent field of mean photon number `nbar`.
///
/// # Safety
/// `out` must be null or a valid pointer to a writable double.
#[no_mangle]
pub unsafe extern "C" fn cb_gate_fidelity(theta: f64, phi: f64, nbar: f64, out: *mut f64) -> CbStatus {
    if out.is_null() {
        return null_error("out");
    }
    guard(|| {
        let ch = QubitChannel::jaynes_cummings(theta, phi, nbar, truncation_order(nbar, DEFAULT_TAIL_TOL)?)?;
        *out = average_gate_fidelity(&ch, &Rotation::equatorial(theta, phi));
        Ok(())
    })
}

/// Quadrature-averaged success probability with the maximally mixed target
/// state and `grid` nodes per angle.
///
/// # Safety
/// `out` must be null or a valid pointer to a writable `CbSuccessReport`.
#[no_mangle]
pub unsafe extern "C" fn cb_success_average(setup: CbSetup, nbar: f64, grid: usize, out: *mut CbSuccessReport) -> CbStatus {
    if out.is_null() {
        return null_error("out");
    }
    guard(|| {
        let s = match setup {
            CbSetup::Qs => Setup::Qs,
            CbSetup::FourBox => Setup::FourBox,
        };
        let mut cfg = TaskConfig::new(s, nbar);
        cfg.grid = GridSpec::uniform(grid);
        let r = average_success(&cfg)?;
        *out = CbSuccessReport {
            p_commuting: r.p_commuting,
            p_anticommuting: r.p_anticommuting,
            p_average: r.p_average,
            quadrature_error_estimate: r.quadrature_error_estimate,
        };
        Ok(())
    })
}

/// Entanglement entropy in bits of the control qubit for a given overlap.
#[no_mangle]
pub extern "C" fn cb_control_entropy(overlap_re: f64, overlap_im: f64) -> f64 {
    control_entropy(c64(overlap_re, overlap_im))
}

/// Payoff for ideal unitaries. Release with [`cb_payoff_free`].
#[no_mangle]
pub extern "C" fn cb_payoff_ideal() -> *mut CbPayoff {
    Box::into_raw(Box::new(CbPayoff(assemble_g_ideal())))
}

/// Ideal payoff averaged over a common random frame. Release with [`cb_payoff_free`].
#[no_mangle]
pub extern "C" fn cb_payoff_haar() -> *mut CbPayoff {
    Box::into_raw(Box::new(CbPayoff(assemble_g_haar())))
}

/// Payoff when operation A is driven by a field of mean photon number `nbar`.
///
/// # Safety
/// `out` must be null or a valid pointer; on success it receives a handle
/// owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn cb_payoff_finite(nbar: f64, grid: usize, out: *mut *mut CbPayoff) -> CbStatus {
    if out.is_null() {
        return null_error("out");
    }
    guard(|| {
        let g = assemble_g_finite(nbar, &GridSpec::uniform(grid), DEFAULT_TAIL_TOL)?;
        *out = Box::into_raw(Box::new(CbPayoff(g)));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn cb_payoff_free(p: *mut CbPayoff) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Optimal fixed-order tester for `payoff`. `tester_out` may be null when
/// only the numbers are wanted.
///
/// # Safety
/// `payoff` must be a live handle; `result` must point to a writable
/// `CbFcoResult`; `tester_out` must be null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cb_optimize_fco(
    payoff: *const CbPayoff,
    order: CbOrder,
    isotropic: bool,
    tol: f64,
    result: *mut CbFcoResult,
    tester_out: *mut *mut CbTester,
) -> CbStatus {
    if payoff.is_null() {
        return null_error("payoff");
    }
    if result.is_null() {
        return null_error("result");
    }
    guard(|| {
        let s = optimize_fco(&(*payoff).0, order_of(order), isotropic, &SolverSettings::with_tol(tol))?;
        *result = CbFcoResult {
            p_star: s.p_star,
            certificate: s.certificate,
            iterations: s.iterations,
            converged: i32::from(s.status == Status::Optimal),
        };
        if !tester_out.is_null() {
            *tester_out = Box::into_raw(Box::new(CbTester(s.tester)));
        }
        Ok(())
    })
}

/// Tester of the perfect B-before-A circuit.
///
/// # Safety
/// `out` must be null or a valid pointer; on success it receives a handle
/// owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn cb_tester_optimal_circuit(out: *mut *mut CbTester) -> CbStatus {
    if out.is_null() {
        return null_error("out");
    }
    guard(|| {
        *out = Box::into_raw(Box::new(CbTester(tester_from_circuit(&optimal_circuit_ba())?)));
        Ok(())
    })
}

/// Tester from two 16x16 operators given as 512 interleaved (re, im) doubles
/// each, row-major on A_I, A_O, B_I, B_O.
///
/// # Safety
/// `w_plus` and `w_minus` must point to 512 readable doubles; `out` must be
/// null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cb_tester_new(order: CbOrder, w_plus: *const f64, w_minus: *const f64, out: *mut *mut CbTester) -> CbStatus {
    if w_plus.is_null() || w_minus.is_null() {
        return null_error("tester operator");
    }
    if out.is_null() {
        return null_error("out");
    }
    let read = |p: *const f64| {
        let s = std::slice::from_raw_parts(p, 512);
        CMat::from_fn(16, 16, |r, c| c64(s[2 * (16 * r + c)], s[2 * (16 * r + c) + 1]))
    };
    let (wp, wm) = (read(w_plus), read(w_minus));
    guard(|| {
        *out = Box::into_raw(Box::new(CbTester(Tester::new(order_of(order), wp, wm)?)));
        Ok(())
    })
}

/// Largest violation of the tester conditions.
///
/// # Safety
/// `t` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cb_tester_residual(t: *const CbTester) -> f64 {
    if t.is_null() {
        return f64::NAN;
    }
    (*t).0.residuals.max()
}

/// Average success probability of a tester on a payoff.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn cb_tester_success(t: *const CbTester, payoff: *const CbPayoff) -> f64 {
    if t.is_null() || payoff.is_null() {
        return f64::NAN;
    }
    success_probability(&(*t).0, &(*payoff).0)
}

/// Writes W₊ and W₋ as 512 interleaved (re, im) doubles each, row-major.
///
/// # Safety
/// `t` must be a live handle; `w_plus` and `w_minus` must point to 512
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cb_tester_operators(t: *const CbTester, w_plus: *mut f64, w_minus: *mut f64) -> CbStatus {
    if t.is_null() {
        return null_error("tester");
    }
    if w_plus.is_null() || w_minus.is_null() {
        return null_error("output buffer");
    }
    let write = |m: &CMat, p: *mut f64| {
        let s = std::slice::from_raw_parts_mut(p, 512);
        for r in 0..16 {
            for c in 0..16 {
                s[2 * (16 * r + c)] = m[(r, c)].re;
                s[2 * (16 * r + c) + 1] = m[(r, c)].im;
            }
        }
    };
    write(&(*t).0.w_plus, w_plus);
    write(&(*t).0.w_minus, w_minus);
    CbStatus::Ok
}

/// # Safety
/// `t` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn cb_tester_free(t: *mut CbTester) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}
