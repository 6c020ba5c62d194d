//! C interface to the `uav-relay` solver and simulator.
//!
//! Objects are opaque handles created and released through this API. Every
//! fallible call returns a [`UavrStatus`]; on failure a description is kept
//! per thread and can be read with [`uavr_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use uav_relay::config::SimMode;
use uav_relay::dual::{maximize_dual, DualProblem, DualResult};
use uav_relay::heuristics::hover_center_delay;
use uav_relay::power::{min_power_speed, mobility_power};
use uav_relay::sim::{run_episode, SimOptions};
use uav_relay::smdp::StateGrid;
use uav_relay::{Error, SystemConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UavrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Infeasible = 4,
    NotConverged = 5,
    Io = 6,
    Panic = 7,
}

/// Scenario configuration.
pub struct UavrConfig {
    inner: SystemConfig,
}

/// Optimal policy and its metrics at one power budget.
pub struct UavrSolution {
    result: DualResult,
    grid: StateGrid,
    cfg: SystemConfig,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct UavrSolutionSummary {
    pub nu_star: f64,
    pub dual_value: f64,
    pub duality_gap: f64,
    /// Mean delay per request, s.
    pub delay: f64,
    /// Long-run average power, W.
    pub power: f64,
    /// Mean energy per cycle, J.
    pub energy: f64,
    /// Mean cycle duration, s.
    pub cycle_time: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct UavrSimSummary {
    pub cycles: usize,
    pub arrivals: u64,
    pub served: u64,
    pub dropped: u64,
    pub delay: f64,
    pub delay_ci95: f64,
    pub power: f64,
    pub power_ci95: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> UavrStatus {
    match err {
        Error::Config { .. } | Error::ConfigParse(_) => UavrStatus::Config,
        Error::InvalidArgument { .. } | Error::InadmissibleDual { .. } => {
            UavrStatus::InvalidArgument
        }
        Error::Infeasible { .. } | Error::NoFeasiblePolicy { .. } => UavrStatus::Infeasible,
        Error::NotConverged { .. } => UavrStatus::NotConverged,
        Error::PolicyVersion(_) | Error::PolicyMismatch(_) | Error::ReplayMismatch(_) => {
            UavrStatus::InvalidArgument
        }
        Error::Io(_) | Error::Json(_) => UavrStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), UavrStatus>) -> UavrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UavrStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            UavrStatus::Panic
        }
    }
}

fn fail(err: Error) -> UavrStatus {
    set_error(err.to_string());
    status_of(&err)
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, UavrStatus> {
    if p.is_null() {
        set_error(format!("{name} is null"));
        Err(UavrStatus::NullPointer)
    } else {
        Ok(&*p)
    }
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, UavrStatus> {
    if p.is_null() {
        set_error(format!("{name} is null"));
        Err(UavrStatus::NullPointer)
    } else {
        Ok(&mut *p)
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, UavrStatus> {
    let s = CStr::from_ptr(deref(p, name)?);
    s.to_str().map_err(|_| {
        set_error(format!("{name} is not valid UTF-8"));
        UavrStatus::InvalidArgument
    })
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn uavr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn uavr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Built-in default scenario. Release with [`uavr_config_free`].
#[no_mangle]
pub extern "C" fn uavr_config_default() -> *mut UavrConfig {
    Box::into_raw(Box::new(UavrConfig {
        inner: SystemConfig::default(),
    }))
}

/// Parses a TOML scenario.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out_cfg` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn uavr_config_from_toml(
    toml: *const c_char,
    out_cfg: *mut *mut UavrConfig,
) -> UavrStatus {
    guard(|| {
        let slot = out(out_cfg, "out")?;
        let cfg = SystemConfig::from_toml_str(text(toml, "toml")?).map_err(fail)?;
        *slot = Box::into_raw(Box::new(UavrConfig { inner: cfg }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn uavr_config_free(cfg: *mut UavrConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn uavr_config_set_p_avg(cfg: *mut UavrConfig, p_avg: f64) -> UavrStatus {
    guard(|| {
        let c = out(cfg, "cfg")?;
        c.inner = c.inner.with_p_avg(p_avg).map_err(fail)?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn uavr_config_set_payload_bits(
    cfg: *mut UavrConfig,
    bits: f64,
) -> UavrStatus {
    guard(|| {
        let c = out(cfg, "cfg")?;
        c.inner = c.inner.with_payload_bits(bits).map_err(fail)?;
        Ok(())
    })
}

/// Propulsion power at speed `v` (m/s), W.
///
/// # Safety
/// `cfg` must be a live handle and `power` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn uavr_mobility_power(
    cfg: *const UavrConfig,
    v: f64,
    power: *mut f64,
) -> UavrStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        *out(power, "power")? = mobility_power(v, &c.inner.power).map_err(fail)?;
        Ok(())
    })
}

/// Speed in `[0, v_max]` minimizing propulsion power, and that power.
///
/// # Safety
/// `cfg` must be a live handle; `speed` and `power` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn uavr_min_power_speed(
    cfg: *const UavrConfig,
    speed: *mut f64,
    power: *mut f64,
) -> UavrStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        let (s, p) = (out(speed, "speed")?, out(power, "power")?);
        let m = min_power_speed(&c.inner.power, c.inner.v_max).map_err(fail)?;
        *s = m.speed;
        *p = m.power;
        Ok(())
    })
}

/// Mean delay when the UAV hovers at the cell center, s.
///
/// # Safety
/// `cfg` must be a live handle and `delay` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn uavr_hover_center_delay(
    cfg: *const UavrConfig,
    delay: *mut f64,
) -> UavrStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        *out(delay, "delay")? = hover_center_delay(&c.inner);
        Ok(())
    })
}

/// Solves for the delay-optimal policy under the configured power budget.
/// Release the result with [`uavr_solution_free`].
///
/// # Safety
/// `cfg` must be a live handle and `solution` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn uavr_solve(
    cfg: *const UavrConfig,
    solution: *mut *mut UavrSolution,
) -> UavrStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        let slot = out(solution, "solution")?;
        let problem = DualProblem::new(&c.inner).map_err(fail)?;
        let result = maximize_dual(&problem).map_err(fail)?;
        *slot = Box::into_raw(Box::new(UavrSolution {
            result,
            grid: problem.grid.clone(),
            cfg: c.inner.clone(),
        }));
        Ok(())
    })
}

/// # Safety
/// `solution` must come from [`uavr_solve`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn uavr_solution_free(solution: *mut UavrSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// # Safety
/// `solution` must be a live handle and `summary` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn uavr_solution_summary(
    solution: *const UavrSolution,
    summary: *mut UavrSolutionSummary,
) -> UavrStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        let m = &s.result.primal.metrics;
        *out(summary, "summary")? = UavrSolutionSummary {
            nu_star: s.result.nu_star,
            dual_value: s.result.dual_value,
            duality_gap: s.result.duality_gap,
            delay: m.delay,
            power: m.power,
            energy: m.energy,
            cycle_time: m.cycle_time,
        };
        Ok(())
    })
}

/// Number of waiting radii in the solution's policy.
///
/// # Safety
/// `solution` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn uavr_solution_num_radii(solution: *const UavrSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.grid.n_radii())
}

/// Waiting decision at grid radius `index`: the radius (m), radial
/// velocity (m/s) and angular rate (rad/s).
///
/// # Safety
/// `solution` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn uavr_solution_waiting(
    solution: *const UavrSolution,
    index: usize,
    radius: *mut f64,
    v_r: *mut f64,
    theta_c: *mut f64,
) -> UavrStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        let (r, v, t) = (
            out(radius, "radius")?,
            out(v_r, "v_r")?,
            out(theta_c, "theta_c")?,
        );
        if index >= s.grid.n_radii() {
            set_error(format!(
                "radius index {index} out of range ({} radii)",
                s.grid.n_radii()
            ));
            return Err(UavrStatus::InvalidArgument);
        }
        let w = s.result.primal.solution.policy.waiting(index);
        *r = s.grid.radii[index];
        *v = w.v_r;
        *t = w.theta_c;
        Ok(())
    })
}

/// Writes the policy as JSON to `path`.
///
/// # Safety
/// `solution` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn uavr_solution_write_json(
    solution: *const UavrSolution,
    path: *const c_char,
) -> UavrStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        let p = text(path, "path")?;
        s.result.primal.solution.policy.write_json(p).map_err(fail)
    })
}

/// Simulates the solution's policy for `cycles` served requests with the
/// given seed. `continuum` selects true request locations instead of grid nodes.
///
/// # Safety
/// `solution` must be a live handle and `summary` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn uavr_simulate(
    solution: *const UavrSolution,
    seed: u64,
    cycles: usize,
    continuum: bool,
    summary: *mut UavrSimSummary,
) -> UavrStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        let slot = out(summary, "summary")?;
        let mut opts = SimOptions::from_config(&s.cfg);
        opts.cycles = cycles;
        opts.mode = if continuum {
            SimMode::Continuum
        } else {
            SimMode::Grid
        };
        let ep = run_episode(
            &s.result.primal.solution.policy,
            &s.grid,
            &s.cfg,
            &opts,
            seed,
        )
        .map_err(fail)?;
        let m = ep.metrics;
        *slot = UavrSimSummary {
            cycles: m.cycles,
            arrivals: m.arrivals,
            served: m.served,
            dropped: m.dropped,
            delay: m.delay,
            delay_ci95: m.ci95_delay,
            power: m.power,
            power_ci95: m.ci95_power,
        };
        Ok(())
    })
}
