//! C interface to the sampler.
//!
//! Every fallible call returns an `NhbStatus`; on failure the message is kept
//! per thread and read with `nhb_last_error`. Handles are opaque and owned by
//! the caller, who releases them with the matching `_free` call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nhb::config::RunConfig;
use nhb::control::{build_control_path, min_xi, verify_control};
use nhb::dynamics::{simulate, Trajectory};
use nhb::model::{hamiltonian, PotentialHandle, State, SystemParams};
use nhb::specfun::{beta_star_ratio, dawson};
use nhb::NhbError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NhbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Rejected = 4,
    Infeasible = 5,
    Unreachable = 6,
    Config = 7,
    Io = 8,
    StepFailed = 9,
    Panic = 10,
}

/// A validated configuration: system parameters, potential and integrator settings.
pub struct NhbSystem {
    cfg: RunConfig,
    pot: PotentialHandle,
}

/// A stored trajectory.
pub struct NhbTrajectory {
    traj: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(NhbStatus, String);

impl From<NhbError> for Failure {
    fn from(e: NhbError) -> Self {
        let status = match e {
            NhbError::Contract(_) | NhbError::Stencil { .. } => NhbStatus::InvalidArgument,
            NhbError::Domain(_) => NhbStatus::Domain,
            NhbError::Rejected(_) => NhbStatus::Rejected,
            NhbError::StepFailed { .. } => NhbStatus::StepFailed,
            NhbError::Infeasible(_) => NhbStatus::Infeasible,
            NhbError::Unreachable(_) => NhbStatus::Unreachable,
            NhbError::Config(_) | NhbError::Json(_) => NhbStatus::Config,
            NhbError::Io(_) => NhbStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(NhbStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NhbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NhbStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NhbStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn system<'a>(sys: *const NhbSystem) -> Result<&'a NhbSystem, Failure> {
    sys.as_ref().ok_or_else(|| null("system"))
}

unsafe fn read_state(sys: &NhbSystem, q: *const f64, p: *const f64, xi: f64) -> Result<State, Failure> {
    let n = sys.cfg.system.n_coords();
    Ok(State::new(slice(q, n, "q")?.to_vec(), slice(p, n, "p")?.to_vec(), xi))
}

fn params(sys: &NhbSystem) -> &SystemParams {
    &sys.cfg.system
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nhb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty when none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nhb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn nhb_clear_error() {
    set_error("");
}

/// Parse and validate a TOML run configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nhb_system_from_toml(toml: *const c_char, out: *mut *mut NhbSystem) -> NhbStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|_| Failure(NhbStatus::InvalidArgument, "configuration is not UTF-8".into()))?;
        let cfg = RunConfig::from_toml_str(text)?;
        let pot = cfg.validate()?;
        *out = Box::into_raw(Box::new(NhbSystem { cfg, pot }));
        Ok(())
    })
}

/// # Safety
/// `sys` must come from `nhb_system_from_toml` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nhb_system_free(sys: *mut NhbSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Number of coordinates k N, or 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nhb_system_n_coords(sys: *const NhbSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.cfg.system.n_coords())
}

/// H(q, p, xi). `q` and `p` hold `nhb_system_n_coords` values each.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn nhb_hamiltonian(
    sys: *const NhbSystem,
    q: *const f64,
    p: *const f64,
    xi: f64,
    out: *mut f64,
) -> NhbStatus {
    guard(|| {
        let s = system(sys)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let x = read_state(s, q, p, xi)?;
        *out = hamiltonian(&x, s.pot.as_ref(), params(s))?;
        Ok(())
    })
}

/// Run one chain with the configured integrator, storing every `thin`-th state.
///
/// # Safety
/// Pointers must be valid; `q0` and `p0` hold `nhb_system_n_coords` values.
#[no_mangle]
pub unsafe extern "C" fn nhb_simulate(
    sys: *const NhbSystem,
    q0: *const f64,
    p0: *const f64,
    xi0: f64,
    seed: u64,
    thin: usize,
    out: *mut *mut NhbTrajectory,
) -> NhbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = system(sys)?;
        let x0 = read_state(s, q0, p0, xi0)?;
        let mut ic = s.cfg.integrator_config()?;
        ic.seed = seed;
        let traj = simulate(&x0, &ic, s.pot.as_ref(), params(s), thin.max(1))?;
        *out = Box::into_raw(Box::new(NhbTrajectory { traj }));
        Ok(())
    })
}

/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nhb_trajectory_len(traj: *const NhbTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.traj.len())
}

/// Copy stored state `index` into the caller's buffers.
///
/// # Safety
/// `q` and `p` must have room for the system's coordinates; `t` and `xi` valid.
#[no_mangle]
pub unsafe extern "C" fn nhb_trajectory_state(
    traj: *const NhbTrajectory,
    index: usize,
    t: *mut f64,
    q: *mut f64,
    p: *mut f64,
    xi: *mut f64,
) -> NhbStatus {
    guard(|| {
        let tr = &traj.as_ref().ok_or_else(|| null("trajectory"))?.traj;
        let st = tr.states.get(index).ok_or_else(|| {
            Failure(
                NhbStatus::InvalidArgument,
                format!("index {index} out of range (length {})", tr.len()),
            )
        })?;
        if t.is_null() || q.is_null() || p.is_null() || xi.is_null() {
            return Err(null("output buffer"));
        }
        *t = tr.times[index];
        ptr::copy_nonoverlapping(st.q.as_ptr(), q, st.q.len());
        ptr::copy_nonoverlapping(st.p.as_ptr(), p, st.p.len());
        *xi = st.xi;
        Ok(())
    })
}

/// Pathwise audit of the run: thermostat identity residual and count of
/// violated lower bounds on xi.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nhb_trajectory_audit(
    traj: *const NhbTrajectory,
    identity_residual: *mut f64,
    bound_violations: *mut u64,
) -> NhbStatus {
    guard(|| {
        let tr = &traj.as_ref().ok_or_else(|| null("trajectory"))?.traj;
        let a = tr
            .audit
            .as_ref()
            .ok_or_else(|| Failure(NhbStatus::InvalidArgument, "trajectory has no audit".into()))?;
        *identity_residual.as_mut().ok_or_else(|| null("identity_residual"))? = a.identity_residual;
        *bound_violations.as_mut().ok_or_else(|| null("bound_violations"))? = a.bound_violations;
        Ok(())
    })
}

/// # Safety
/// `traj` must come from `nhb_simulate` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nhb_trajectory_free(traj: *mut NhbTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Dawson's integral; NaN for non-finite input.
#[no_mangle]
pub extern "C" fn nhb_dawson(z: f64) -> f64 {
    if z.is_finite() {
        dawson(z)
    } else {
        f64::NAN
    }
}

/// Largest admissible Lyapunov exponent at temperature kB T; NaN unless kbt > 0.
#[no_mangle]
pub extern "C" fn nhb_beta_star(kbt: f64) -> f64 {
    if kbt > 0.0 && kbt.is_finite() {
        beta_star_ratio() / kbt
    } else {
        f64::NAN
    }
}

/// Least thermostat value reachable at position `q_target` after time `t`.
///
/// # Safety
/// Arrays hold `nhb_system_n_coords` values; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nhb_min_xi(
    sys: *const NhbSystem,
    q: *const f64,
    p: *const f64,
    xi: f64,
    t: f64,
    q_target: *const f64,
    out: *mut f64,
) -> NhbStatus {
    guard(|| {
        let s = system(sys)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let x = read_state(s, q, p, xi)?;
        let q2 = slice(q_target, s.cfg.system.n_coords(), "q_target")?;
        *out = min_xi(&x, t, q2, params(s), s.pot.as_ref())?;
        Ok(())
    })
}

/// Build the control path from (q, p, xi) to the target over time `t` and
/// integrate the controlled system; writes the largest endpoint error. Pass
/// NaN as `dwell` to solve for the transit duration.
///
/// # Safety
/// Arrays hold `nhb_system_n_coords` values; `max_error` valid.
#[no_mangle]
pub unsafe extern "C" fn nhb_control_verify(
    sys: *const NhbSystem,
    q: *const f64,
    p: *const f64,
    xi: f64,
    t: f64,
    q_target: *const f64,
    p_target: *const f64,
    xi_target: f64,
    delta: f64,
    dwell: f64,
    max_error: *mut f64,
) -> NhbStatus {
    guard(|| {
        let s = system(sys)?;
        let out = max_error.as_mut().ok_or_else(|| null("max_error"))?;
        let x = read_state(s, q, p, xi)?;
        let y = read_state(s, q_target, p_target, xi_target)?;
        let dwell = (!dwell.is_nan()).then_some(dwell);
        let path = build_control_path(&x, t, &y, delta, dwell, s.pot.as_ref(), params(s))?;
        *out = verify_control(&path, &x, s.pot.as_ref(), params(s))?.max_error;
        Ok(())
    })
}
