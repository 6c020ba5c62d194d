use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use uav_relay_ffi::*;

fn last_error() -> String {
    let p = uavr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(uavr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn power_queries() {
    let cfg = uavr_config_default();
    unsafe {
        let mut p = 0.0;
        assert_eq!(uavr_mobility_power(cfg, 0.0, &mut p), UavrStatus::Ok);
        assert!((p - (79.86 + 88.63)).abs() < 1e-9);
        let (mut v, mut pm) = (0.0, 0.0);
        assert_eq!(uavr_min_power_speed(cfg, &mut v, &mut pm), UavrStatus::Ok);
        assert!(v > 0.0 && pm < p);
        assert_eq!(
            uavr_mobility_power(cfg, -1.0, &mut p),
            UavrStatus::InvalidArgument
        );
        assert!(last_error().contains("v"));
        let mut d = 0.0;
        assert_eq!(uavr_hover_center_delay(cfg, &mut d), UavrStatus::Ok);
        assert!((d / 90.59 - 1.0).abs() < 0.005);
        uavr_config_free(cfg);
    }
}

#[test]
fn null_and_bad_inputs_are_reported() {
    unsafe {
        let mut p = 0.0;
        assert_eq!(
            uavr_mobility_power(ptr::null(), 1.0, &mut p),
            UavrStatus::NullPointer
        );
        assert!(last_error().contains("cfg"));
        let mut cfg = ptr::null_mut();
        let bad = CString::new("[channel]\nbandwidth_hz = 1\n").unwrap();
        assert_eq!(
            uavr_config_from_toml(bad.as_ptr(), &mut cfg),
            UavrStatus::Config
        );
        assert!(cfg.is_null());
        let c = uavr_config_default();
        assert_eq!(uavr_config_set_p_avg(c, -5.0), UavrStatus::Config);
        assert!(last_error().contains("p_avg"));
        assert_eq!(
            uavr_config_set_payload_bits(c, f64::NAN),
            UavrStatus::Config
        );
        uavr_config_free(c);
        uavr_config_free(ptr::null_mut());
        uavr_solution_free(ptr::null_mut());
        assert_eq!(uavr_solution_num_radii(ptr::null()), 0);
    }
}

#[test]
fn infeasible_budget_names_minimum_power() {
    unsafe {
        let c = uavr_config_default();
        assert_eq!(uavr_config_set_p_avg(c, 100.0), UavrStatus::Ok);
        let mut sol = ptr::null_mut();
        assert_eq!(uavr_solve(c, &mut sol), UavrStatus::Infeasible);
        assert!(sol.is_null());
        assert!(last_error().contains("minimal achievable average power"));
        uavr_config_free(c);
    }
}

#[test]
fn solve_inspect_simulate() {
    unsafe {
        let text = CString::new(include_str!("../../../configs/default.toml")).unwrap();
        let mut cfg = ptr::null_mut();
        assert_eq!(
            uavr_config_from_toml(text.as_ptr(), &mut cfg),
            UavrStatus::Ok
        );
        assert_eq!(uavr_config_set_p_avg(cfg, 300.0), UavrStatus::Ok);
        let mut sol = ptr::null_mut();
        assert_eq!(uavr_solve(cfg, &mut sol), UavrStatus::Ok);
        let mut s = UavrSolutionSummary::default();
        assert_eq!(uavr_solution_summary(sol, &mut s), UavrStatus::Ok);
        assert!(s.nu_star > 0.0);
        assert!(s.power <= 300.0 * 1.001);
        assert!(s.delay > 0.0 && s.delay < 90.59);

        let n = uavr_solution_num_radii(sol);
        assert_eq!(n, 10);
        let (mut r, mut v, mut t) = (0.0, 0.0, 0.0);
        assert_eq!(
            uavr_solution_waiting(sol, n - 1, &mut r, &mut v, &mut t),
            UavrStatus::Ok
        );
        assert_eq!(r, 1600.0);
        assert_eq!(
            uavr_solution_waiting(sol, n, &mut r, &mut v, &mut t),
            UavrStatus::InvalidArgument
        );

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("p.json").to_str().unwrap()).unwrap();
        assert_eq!(uavr_solution_write_json(sol, path.as_ptr()), UavrStatus::Ok);
        assert!(std::fs::read_to_string(dir.path().join("p.json"))
            .unwrap()
            .contains("\"waiting\""));

        let mut a = UavrSimSummary::default();
        let mut b = UavrSimSummary::default();
        assert_eq!(uavr_simulate(sol, 11, 2000, false, &mut a), UavrStatus::Ok);
        assert_eq!(uavr_simulate(sol, 11, 2000, false, &mut b), UavrStatus::Ok);
        assert_eq!(a.delay.to_bits(), b.delay.to_bits());
        assert_eq!(a.cycles, 2000);
        assert_eq!(a.served + a.dropped, a.arrivals);
        assert!((a.delay - s.delay).abs() < 4.0 * a.delay_ci95.max(1e-9) + 0.05 * s.delay);

        uavr_solution_free(sol);
        uavr_config_free(cfg);
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include <uav_relay.h>\nint main(void) { UavrConfig *c = uavr_config_default(); double p; \
         UavrStatus s = uavr_mobility_power(c, 1.0, &p); uavr_config_free(c); return s == UAVR_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    for (compiler, extra) in [("cc", vec!["-std=c99"]), ("c++", vec!["-x", "c++"])] {
        let status = Command::new(compiler)
            .args(&extra)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I", include])
            .arg(&src)
            .status()
            .expect("C compiler available");
        assert!(status.success(), "{compiler} rejected the header");
    }
}
