use std::ptr;

use causalbench_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { cb_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { std::ffi::CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { std::ffi::CStr::from_ptr(cb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn ideal_orders_through_handles() {
    let g = cb_payoff_ideal();
    let mut res = CbFcoResult::default();
    let mut t = ptr::null_mut();
    let st = unsafe { cb_optimize_fco(g, CbOrder::AThenB, false, 1e-7, &mut res, &mut t) };
    assert_eq!(st, CbStatus::Ok);
    assert_eq!(res.converged, 1);
    assert!((res.p_star - 0.9489).abs() < 2e-3);
    assert!(res.certificate >= res.p_star - 1e-7);
    let p = unsafe { cb_tester_success(t, g) };
    assert!((p - res.p_star).abs() < 1e-12);
    assert!(unsafe { cb_tester_residual(t) } < 1e-6);

    let mut wp = vec![0.0; 512];
    let mut wm = vec![0.0; 512];
    assert_eq!(unsafe { cb_tester_operators(t, wp.as_mut_ptr(), wm.as_mut_ptr()) }, CbStatus::Ok);
    let mut t2 = ptr::null_mut();
    assert_eq!(unsafe { cb_tester_new(CbOrder::AThenB, wp.as_ptr(), wm.as_ptr(), &mut t2) }, CbStatus::Ok);
    assert_eq!(unsafe { cb_tester_success(t2, g) }, p);
    unsafe {
        cb_tester_free(t);
        cb_tester_free(t2);
        cb_payoff_free(g);
    }
}

#[test]
fn circuit_tester_is_perfect() {
    let g = cb_payoff_ideal();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { cb_tester_optimal_circuit(&mut t) }, CbStatus::Ok);
    assert!(unsafe { cb_tester_success(t, g) } >= 1.0 - 1e-6);
    unsafe {
        cb_tester_free(t);
        cb_payoff_free(g);
    }
}

#[test]
fn haar_payoff_isotropic_value() {
    let g = cb_payoff_haar();
    let mut res = CbFcoResult::default();
    let st = unsafe { cb_optimize_fco(g, CbOrder::BThenA, false, 1e-7, &mut res, ptr::null_mut()) };
    assert_eq!(st, CbStatus::Ok);
    assert!((res.p_star - 0.9288).abs() < 2e-3);
    unsafe { cb_payoff_free(g) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cb_payoff_finite(-1.0, 8, &mut out) }, CbStatus::InvalidInput);
    assert!(out.is_null());
    assert!(last_error().contains("mean photon number"));
    assert_eq!(unsafe { cb_payoff_finite(5.0, 8, ptr::null_mut()) }, CbStatus::NullPointer);
    let mut f = 0.0;
    assert_eq!(unsafe { cb_gate_fidelity(1.0, 0.0, 0.0, &mut f) }, CbStatus::InvalidInput);
    let bad = [0.0; 512];
    let mut t = ptr::null_mut();
    // Zero operators violate the normalization condition but still form a handle.
    assert_eq!(unsafe { cb_tester_new(CbOrder::AThenB, bad.as_ptr(), bad.as_ptr(), &mut t) }, CbStatus::Ok);
    assert!((unsafe { cb_tester_residual(t) } - 1.0).abs() < 1e-12);
    unsafe { cb_tester_free(t) };
    assert!(unsafe { cb_tester_residual(ptr::null()) }.is_nan());
}

#[test]
fn scalar_entry_points() {
    let mut f = 0.0;
    assert_eq!(unsafe { cb_gate_fidelity(0.0, 0.0, 10.0, &mut f) }, CbStatus::Ok);
    assert!((f - 1.0).abs() < 1e-12);
    assert!((cb_control_entropy(0.0, 0.0) - 1.0).abs() < 1e-15);
    let mut r = CbSuccessReport::default();
    assert_eq!(unsafe { cb_success_average(CbSetup::Qs, 20.0, 12, &mut r) }, CbStatus::Ok);
    assert!((r.p_average - 0.980366).abs() < 1e-5);
    let mut q = CbSuccessReport::default();
    assert_eq!(unsafe { cb_success_average(CbSetup::FourBox, 20.0, 12, &mut q) }, CbStatus::Ok);
    assert!(r.p_average > q.p_average);
}

#[test]
fn header_declares_entry_points() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/causalbench.h")).unwrap();
    for name in ["cb_optimize_fco", "cb_payoff_free", "cb_tester_free", "cb_last_error_message", "CB_STATUS_SOLVER"] {
        assert!(header.contains(name), "{name}");
    }
}

#[cfg(target_os = "linux")]
#[test]
fn c_program_links_against_the_library() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if std::process::Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler, skipping");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    // Test binaries only link the rlib, so build the shared library explicitly.
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let built = std::process::Command::new(cargo)
        .args(["build", "--quiet", "-p", "causalbench-ffi", "--lib"])
        .status()
        .unwrap();
    assert!(built.success());
    assert!(lib_dir.join("libcausalbench_ffi.so").exists());
    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("smoke");
    let manifest = env!("CARGO_MANIFEST_DIR");
    let status = std::process::Command::new(&cc)
        .args([&format!("{manifest}/examples/smoke.c"), "-I", &format!("{manifest}/include"), "-L"])
        .arg(lib_dir)
        .args(["-lcausalbench_ffi", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let run = std::process::Command::new(&bin).env("LD_LIBRARY_PATH", lib_dir).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8(run.stdout).unwrap();
    let fields: Vec<f64> = text.split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert!(fields[0] >= 1.0 - 1e-5 && fields[2] == 1.0);
}
