//! C ABI for trap maps, ramps, forward simulation and the optimizer.
//!
//! Objects are opaque handles created by `bt_*_new`/`bt_*_build` functions and
//! released with the matching `bt_*_free`. Every fallible call returns a
//! `BtStatus`; the message of the last failure on the calling thread is
//! available through `bt_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use bec_transport::constants::GAUSS;
use bec_transport::experiment::simulate_ramp;
use bec_transport::metrics::transport_metrics;
use bec_transport::oct::{evaluate_ramp, initial_ground_state, optimize, CostWeights, ModelOptions, OptimizeOptions};
use bec_transport::ramp::{linear_ramp_with, sta_ramp_with, ControlRamp, RampEndpoints};
use bec_transport::trap::{build_trap_map, load_tabulated_map, CharacterizeOptions, ChipGeometry, TrapMap};
use bec_transport::{Error, PhysicalConstants};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Config = 3,
    OutOfRange = 4,
    Numerical = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Bias -> trap map.
pub struct BtTrapMap {
    map: TrapMap,
}

/// Control ramp u(t_k) with its bias endpoints.
pub struct BtRamp {
    ramp: ControlRamp,
}

/// Transport metrics of a forward run; SI lengths, energies in nK.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BtMetrics {
    pub mean_classical_nk: f64,
    pub max_offset_m: f64,
    pub max_velocity_offset_m_per_s: f64,
    pub residual_amplitude_m: [f64; 3],
}

/// Cost of a ramp, nK.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BtCost {
    pub final_classical_nk: f64,
    pub final_quantum_nk: f64,
    pub mean_classical_nk: f64,
    pub total: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> BtStatus {
    match err {
        Error::OutOfRange { .. } => BtStatus::OutOfRange,
        Error::Config(_) => BtStatus::Config,
        Error::Io(_) | Error::Parse { .. } => BtStatus::Io,
        Error::InvalidInput(_) | Error::InvalidGeometry(_) | Error::InfeasibleSta { .. } => BtStatus::InvalidInput,
        _ => BtStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (BtStatus, String)>) -> BtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BtStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            BtStatus::Panic
        }
    }
}

fn lift<T>(r: bec_transport::Result<T>) -> Result<T, (BtStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (BtStatus, String) {
    (BtStatus::NullPointer, format!("`{name}` is null"))
}

fn endpoints(bias_start_gauss: f64, bias_end_gauss: f64) -> RampEndpoints {
    RampEndpoints { bias_start: bias_start_gauss * GAUSS, bias_end: bias_end_gauss * GAUSS, ..RampEndpoints::default() }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated).
/// Returns the full message length without the NUL, 0 when there is none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn bt_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Samples the default Z-wire surrogate (Rb-87, N = 1e5) over `[min, max]` G.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bt_trap_map_build_default(
    bias_min_gauss: f64,
    bias_max_gauss: f64,
    samples: usize,
    out: *mut *mut BtTrapMap,
) -> BtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let map = lift(build_trap_map(
            &ChipGeometry::default(),
            &PhysicalConstants::rb87(),
            (bias_min_gauss * GAUSS, bias_max_gauss * GAUSS),
            samples,
            &CharacterizeOptions::default(),
        ))?;
        *out = Box::into_raw(Box::new(BtTrapMap { map }));
        Ok(())
    })
}

/// Reads a tabulated map (`B_gauss z0_mm fx_Hz fy_Hz fz_Hz [rotation_rad]`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bt_trap_map_load(path: *const c_char, out: *mut *mut BtTrapMap) -> BtStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let p = CStr::from_ptr(path).to_str().map_err(|_| (BtStatus::InvalidInput, "path is not UTF-8".to_string()))?;
        let map = lift(load_tabulated_map(Path::new(p)))?;
        *out = Box::into_raw(Box::new(BtTrapMap { map }));
        Ok(())
    })
}

/// Trap height (m) and angular frequencies (rad/s) at one bias.
///
/// # Safety
/// `map` must come from this library; `z0` and `omega` (3 entries) must be valid.
#[no_mangle]
pub unsafe extern "C" fn bt_trap_map_eval(
    map: *const BtTrapMap,
    bias_gauss: f64,
    z0: *mut f64,
    omega: *mut f64,
) -> BtStatus {
    guard(|| {
        let map = map.as_ref().ok_or_else(|| null("map"))?;
        if z0.is_null() || omega.is_null() {
            return Err(null("z0/omega"));
        }
        let p = lift(map.map.eval(bias_gauss * GAUSS))?;
        *z0 = p.z0;
        for i in 0..3 {
            *omega.add(i) = p.omega_sq[i].sqrt();
        }
        Ok(())
    })
}

/// # Safety
/// `map` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bt_trap_map_free(map: *mut BtTrapMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Shortcut-to-adiabaticity ramp.
///
/// # Safety
/// `map` must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn bt_ramp_sta(
    map: *const BtTrapMap,
    final_time: f64,
    node_count: usize,
    bias_start_gauss: f64,
    bias_end_gauss: f64,
    out: *mut *mut BtRamp,
) -> BtStatus {
    guard(|| {
        let map = map.as_ref().ok_or_else(|| null("map"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ramp = lift(sta_ramp_with(final_time, &map.map, node_count, endpoints(bias_start_gauss, bias_end_gauss)))?;
        *out = Box::into_raw(Box::new(BtRamp { ramp }));
        Ok(())
    })
}

/// Linear ramp u = t / t_f.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bt_ramp_linear(
    final_time: f64,
    node_count: usize,
    bias_start_gauss: f64,
    bias_end_gauss: f64,
    out: *mut *mut BtRamp,
) -> BtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ramp = lift(linear_ramp_with(final_time, node_count, endpoints(bias_start_gauss, bias_end_gauss)))?;
        *out = Box::into_raw(Box::new(BtRamp { ramp }));
        Ok(())
    })
}

/// Number of nodes, 0 for a null handle.
///
/// # Safety
/// `ramp` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn bt_ramp_node_count(ramp: *const BtRamp) -> usize {
    ramp.as_ref().map_or(0, |r| r.ramp.node_count())
}

/// Copies u at the nodes into `values` (`len` >= node count).
///
/// # Safety
/// `values` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bt_ramp_values(ramp: *const BtRamp, values: *mut f64, len: usize) -> BtStatus {
    guard(|| {
        let r = ramp.as_ref().ok_or_else(|| null("ramp"))?;
        if values.is_null() {
            return Err(null("values"));
        }
        let u = r.ramp.u_values();
        if len < u.len() {
            return Err((BtStatus::BufferTooSmall, format!("need {} values, buffer holds {len}", u.len())));
        }
        std::ptr::copy_nonoverlapping(u.as_ptr(), values, u.len());
        Ok(())
    })
}

/// # Safety
/// `ramp` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bt_ramp_free(ramp: *mut BtRamp) {
    if !ramp.is_null() {
        drop(Box::from_raw(ramp));
    }
}

/// Forward run from the initial ground state with a static hold, 4 Verlet substeps per node.
///
/// # Safety
/// Handles must come from this library; `metrics` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bt_simulate(
    map: *const BtTrapMap,
    ramp: *const BtRamp,
    hold_time: f64,
    metrics: *mut BtMetrics,
) -> BtStatus {
    guard(|| {
        let map = map.as_ref().ok_or_else(|| null("map"))?;
        let ramp = ramp.as_ref().ok_or_else(|| null("ramp"))?;
        let out = metrics.as_mut().ok_or_else(|| null("metrics"))?;
        let c = PhysicalConstants::rb87();
        let ground = lift(initial_ground_state(&map.map, &ramp.ramp, &c))?;
        let history = lift(simulate_ramp(&ramp.ramp, &map.map, &ModelOptions::default(), hold_time))?;
        let m = transport_metrics(&history, &ground, &c);
        *out = BtMetrics {
            mean_classical_nk: m.mean_classical,
            max_offset_m: m.max_offset,
            max_velocity_offset_m_per_s: m.max_velocity_offset,
            residual_amplitude_m: m.residual_amplitude,
        };
        Ok(())
    })
}

/// Cost of `ramp` under the weights (lambda1, lambda2, lambda3).
///
/// # Safety
/// Handles must come from this library; `cost` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bt_evaluate(
    map: *const BtTrapMap,
    ramp: *const BtRamp,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    cost: *mut BtCost,
) -> BtStatus {
    guard(|| {
        let map = map.as_ref().ok_or_else(|| null("map"))?;
        let ramp = ramp.as_ref().ok_or_else(|| null("ramp"))?;
        let out = cost.as_mut().ok_or_else(|| null("cost"))?;
        let c = PhysicalConstants::rb87();
        let w = lift(CostWeights::new(lambda1, lambda2, lambda3))?;
        let ground = lift(initial_ground_state(&map.map, &ramp.ramp, &c))?;
        let e = lift(evaluate_ramp(&ramp.ramp, &map.map, &ground, &w, &c, &ModelOptions::default()))?;
        let n = e.cost.in_nanokelvin(&c);
        *out = BtCost {
            final_classical_nk: n.final_classical,
            final_quantum_nk: n.final_quantum,
            mean_classical_nk: n.mean_classical,
            total: n.total,
        };
        Ok(())
    })
}

/// Gradient descent from `initial`; the improved ramp is returned in `out`.
///
/// # Safety
/// Handles must come from this library; `out` must be valid, `cost` may be null.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn bt_optimize(
    map: *const BtTrapMap,
    initial: *const BtRamp,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    epsilon: f64,
    max_iterations: usize,
    out: *mut *mut BtRamp,
    cost: *mut BtCost,
) -> BtStatus {
    guard(|| {
        let map = map.as_ref().ok_or_else(|| null("map"))?;
        let initial = initial.as_ref().ok_or_else(|| null("initial"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = PhysicalConstants::rb87();
        let w = lift(CostWeights::new(lambda1, lambda2, lambda3))?;
        let ground = lift(initial_ground_state(&map.map, &initial.ramp, &c))?;
        let opts = OptimizeOptions { epsilon, max_iterations, ..Default::default() };
        let r = lift(optimize(&initial.ramp, &map.map, &ground, &w, &c, &ModelOptions::default(), &opts, |_| {}))?;
        if let Some(cost) = cost.as_mut() {
            *cost = BtCost {
                final_classical_nk: r.cost.final_classical,
                final_quantum_nk: r.cost.final_quantum,
                mean_classical_nk: r.cost.mean_classical,
                total: r.cost.total,
            };
        }
        *out = Box::into_raw(Box::new(BtRamp { ramp: r.ramp }));
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
