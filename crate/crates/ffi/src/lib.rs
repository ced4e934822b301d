//! C ABI for the diracmech engine: opaque handles, integer status codes, and
//! a thread-local error message. The companion header `include/diracmech.h`
//! is regenerated on every build.
//!
//! Conventions: every function that can fail returns [`DmStatus`] and leaves
//! a human-readable explanation in [`dm_last_error_message`]. Handles are
//! created and destroyed by this library only; passing a foreign or freed
//! pointer is undefined behavior, passing NULL is reported as an error.

use diracmech::cli::{exit_code, run_hj_check};
use diracmech::integrator::{integrate, IntegrateOptions, Trajectory};
use diracmech::systems::{make_system, SystemDef};
use diracmech::Error;
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

/// Outcome of a fallible call. Mirrors the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DmStatus {
    /// Success.
    Ok = 0,
    /// The operation ran but a verification threshold was exceeded.
    CheckFailed = 1,
    /// Bad arguments, unknown names, or malformed input.
    InvalidArgument = 2,
    /// Singular KKT or Legendre data; the requested formulation does not
    /// apply to this system.
    Singular = 3,
    /// The trajectory left the configured norm bound.
    BlowUp = 4,
}

/// A configured mechanical system plus its initial data. Opaque.
pub struct DmSystem {
    name: String,
    overrides: Vec<(String, f64)>,
    def: SystemDef,
    q0: Vec<f64>,
    v0: Vec<f64>,
    custom_initial: bool,
}

/// An integrated trajectory. Opaque.
pub struct DmTrajectory {
    inner: Trajectory,
}

/// Residual summary of a solution-section verification run. Fields that a
/// run does not produce are NaN (`crosscheck_dev`) or -1 (`bracket_generating`).
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DmHjReport {
    /// Sup-norm distance of the section image from the admissible set.
    pub in_k_residual: f64,
    /// Closedness defect of the momentum one-form on the constraint.
    pub dgamma_residual: f64,
    /// Defect of the differential equation itself.
    pub dhj_residual: f64,
    /// Mean generalized energy along the section.
    pub energy_mean: f64,
    /// Max deviation of the generalized energy from its mean.
    pub energy_dev: f64,
    /// Sup-norm gap between the section flow and the direct simulation.
    pub crosscheck_dev: f64,
    /// 1 if the Lagrangian is linear in velocity (residuals skipped).
    pub linear_velocity: bool,
    /// 1 if the constraint is integrable and checks ran on its leaf.
    pub holonomic: bool,
    /// 1 / 0 for the iterated-bracket spanning test, -1 if not evaluated.
    pub bracket_generating: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(sanitized).unwrap());
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::default());
}

fn status_of(err: &Error) -> DmStatus {
    set_error(&err.to_string());
    match exit_code(err) {
        3 => DmStatus::Singular,
        4 => DmStatus::BlowUp,
        _ => DmStatus::InvalidArgument,
    }
}

fn invalid(msg: &str) -> DmStatus {
    set_error(msg);
    DmStatus::InvalidArgument
}

/// Panics must not unwind across the ABI boundary.
fn guarded(f: impl FnOnce() -> DmStatus) -> DmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => invalid("internal panic"),
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, DmStatus> {
    if ptr.is_null() {
        return Err(invalid(&format!("{what} is NULL")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid(&format!("{what} is not valid UTF-8")))
}

/// Last error message recorded on this thread, empty string if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Create a system by built-in name (`roller-racer`, `lc-circuit`, `bicycle`,
/// `flat-toy`, `point-vortex`). Returns NULL on failure; see
/// `dm_last_error_message`.
#[no_mangle]
pub unsafe extern "C" fn dm_system_create(name: *const c_char) -> *mut DmSystem {
    let mut out: *mut DmSystem = ptr::null_mut();
    guarded(|| {
        let name = match cstr_arg(name, "name") {
            Ok(s) => s.to_string(),
            Err(status) => return status,
        };
        match make_system(&name, &[]) {
            Ok(def) => {
                clear_error();
                let q0 = def.q0.clone();
                let v0 = def.v0.clone();
                out = Box::into_raw(Box::new(DmSystem {
                    name,
                    overrides: Vec::new(),
                    def,
                    q0,
                    v0,
                    custom_initial: false,
                }));
                DmStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    });
    out
}

/// Override one named parameter and rebuild the system. Initial data set via
/// `dm_system_set_initial` is preserved; otherwise the defaults track the new
/// parameters.
#[no_mangle]
pub unsafe extern "C" fn dm_system_set_param(
    sys: *mut DmSystem,
    key: *const c_char,
    value: f64,
) -> DmStatus {
    guarded(|| {
        let Some(sys) = sys.as_mut() else {
            return invalid("sys is NULL");
        };
        let key = match cstr_arg(key, "key") {
            Ok(s) => s.to_string(),
            Err(status) => return status,
        };
        sys.overrides.push((key, value));
        match make_system(&sys.name, &sys.overrides) {
            Ok(def) => {
                if !sys.custom_initial {
                    sys.q0 = def.q0.clone();
                    sys.v0 = def.v0.clone();
                }
                sys.def = def;
                clear_error();
                DmStatus::Ok
            }
            Err(e) => {
                sys.overrides.pop();
                status_of(&e)
            }
        }
    })
}

/// Configuration-space dimension, 0 if `sys` is NULL.
#[no_mangle]
pub unsafe extern "C" fn dm_system_dim(sys: *const DmSystem) -> usize {
    guarded(|| {
        if sys.is_null() {
            invalid("sys is NULL")
        } else {
            DmStatus::Ok
        }
    });
    sys.as_ref().map_or(0, |s| s.def.dim())
}

/// Replace the initial configuration and/or velocity. Either pointer may be
/// NULL to keep the current value; a non-NULL pointer must reference `dim`
/// doubles matching the system dimension.
#[no_mangle]
pub unsafe extern "C" fn dm_system_set_initial(
    sys: *mut DmSystem,
    q: *const f64,
    v: *const f64,
    dim: usize,
) -> DmStatus {
    guarded(|| {
        let Some(sys) = sys.as_mut() else {
            return invalid("sys is NULL");
        };
        if (!q.is_null() || !v.is_null()) && dim != sys.def.dim() {
            return invalid(&format!(
                "dim = {dim} does not match system dimension {}",
                sys.def.dim()
            ));
        }
        if !q.is_null() {
            sys.q0 = std::slice::from_raw_parts(q, dim).to_vec();
            sys.custom_initial = true;
        }
        if !v.is_null() {
            sys.v0 = std::slice::from_raw_parts(v, dim).to_vec();
            sys.custom_initial = true;
        }
        clear_error();
        DmStatus::Ok
    })
}

/// Destroy a system handle. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn dm_system_free(sys: *mut DmSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Integrate the constrained dynamics from the system's initial data over
/// `[0, t_final]` with step `h`. On success `*out` owns a new trajectory.
#[no_mangle]
pub unsafe extern "C" fn dm_simulate(
    sys: *const DmSystem,
    t_final: f64,
    h: f64,
    out: *mut *mut DmTrajectory,
) -> DmStatus {
    guarded(|| {
        let Some(out) = out.as_mut() else {
            return invalid("out is NULL");
        };
        *out = ptr::null_mut();
        let Some(sys) = sys.as_ref() else {
            return invalid("sys is NULL");
        };
        if !(t_final > 0.0) || !(h > 0.0) || h >= t_final {
            return invalid("need 0 < h < t_final");
        }
        match integrate(
            &sys.def.lagrangian,
            &sys.def.constraints,
            &sys.q0,
            &sys.v0,
            t_final,
            h,
            &IntegrateOptions::default(),
        ) {
            Ok(traj) => {
                *out = Box::into_raw(Box::new(DmTrajectory { inner: traj }));
                clear_error();
                DmStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Number of stored samples, 0 if `traj` is NULL.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_len(traj: *const DmTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.len())
}

/// Configuration-space dimension of the stored states, 0 if empty or NULL.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_dim(traj: *const DmTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.dim())
}

/// Time stamp of sample `index`.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_time(
    traj: *const DmTrajectory,
    index: usize,
    out: *mut f64,
) -> DmStatus {
    guarded(|| {
        let Some(traj) = traj.as_ref() else {
            return invalid("traj is NULL");
        };
        let Some(out) = out.as_mut() else {
            return invalid("out is NULL");
        };
        match traj.inner.t.get(index) {
            Some(t) => {
                *out = *t;
                clear_error();
                DmStatus::Ok
            }
            None => invalid(&format!(
                "index {index} out of range ({} samples)",
                traj.inner.len()
            )),
        }
    })
}

/// Copy sample `index` into caller buffers of length `dm_trajectory_dim`.
/// Any of `q`, `v`, `p` may be NULL to skip that component.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_state(
    traj: *const DmTrajectory,
    index: usize,
    q: *mut f64,
    v: *mut f64,
    p: *mut f64,
) -> DmStatus {
    guarded(|| {
        let Some(traj) = traj.as_ref() else {
            return invalid("traj is NULL");
        };
        let Some(state) = traj.inner.states.get(index) else {
            return invalid(&format!(
                "index {index} out of range ({} samples)",
                traj.inner.len()
            ));
        };
        let n = state.q.len();
        if !q.is_null() {
            std::slice::from_raw_parts_mut(q, n).copy_from_slice(state.q.as_slice());
        }
        if !v.is_null() {
            std::slice::from_raw_parts_mut(v, n).copy_from_slice(state.v.as_slice());
        }
        if !p.is_null() {
            std::slice::from_raw_parts_mut(p, n).copy_from_slice(state.p.as_slice());
        }
        clear_error();
        DmStatus::Ok
    })
}

/// Generalized energy at sample `index`.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_energy(
    traj: *const DmTrajectory,
    index: usize,
    out: *mut f64,
) -> DmStatus {
    guarded(|| {
        let Some(traj) = traj.as_ref() else {
            return invalid("traj is NULL");
        };
        let Some(out) = out.as_mut() else {
            return invalid("out is NULL");
        };
        match traj.inner.energy.get(index) {
            Some(e) => {
                *out = *e;
                clear_error();
                DmStatus::Ok
            }
            None => invalid(&format!(
                "index {index} out of range ({} samples)",
                traj.inner.len()
            )),
        }
    })
}

/// Max |E(t) - E(0)| over the trajectory; NaN if `traj` is NULL.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_energy_drift(traj: *const DmTrajectory) -> f64 {
    traj.as_ref().map_or(f64::NAN, |t| t.inner.energy_drift())
}

/// Max constraint-pairing residual over the trajectory; NaN if NULL.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_max_constraint_residual(
    traj: *const DmTrajectory,
) -> f64 {
    traj.as_ref()
        .map_or(f64::NAN, |t| t.inner.max_constraint_residual())
}

/// Write the trajectory as CSV (same format as the CLI `simulate` output).
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_write_csv(
    traj: *const DmTrajectory,
    path: *const c_char,
) -> DmStatus {
    guarded(|| {
        let Some(traj) = traj.as_ref() else {
            return invalid("traj is NULL");
        };
        let path = match cstr_arg(path, "path") {
            Ok(s) => PathBuf::from(s),
            Err(status) => return status,
        };
        match diracmech::io::write_trajectory_csv(&path, &traj.inner) {
            Ok(()) => {
                clear_error();
                DmStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Destroy a trajectory handle. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_free(traj: *mut DmTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Verify the system's built-in solution section, optionally scaled by
/// `1 + perturb`. `branch` selects the root branch (+1 or -1); pass
/// `t_final <= 0` for the per-system default cross-check horizon. Returns
/// `DM_STATUS_OK` when every residual meets `tol` (flow agreement gets a
/// floor of 1e-6), `DM_STATUS_CHECK_FAILED` otherwise; the failure list is
/// in `dm_last_error_message`.
#[no_mangle]
pub unsafe extern "C" fn dm_hj_check(
    sys: *const DmSystem,
    branch: i32,
    perturb: f64,
    t_final: f64,
    step: f64,
    seed: u64,
    tol: f64,
    report: *mut DmHjReport,
) -> DmStatus {
    guarded(|| {
        let Some(sys) = sys.as_ref() else {
            return invalid("sys is NULL");
        };
        let Some(report) = report.as_mut() else {
            return invalid("report is NULL");
        };
        let Ok(branch) = i8::try_from(branch) else {
            return invalid("branch must be +1 or -1");
        };
        let horizon = if t_final > 0.0 { Some(t_final) } else { None };
        match run_hj_check(&sys.def, &sys.q0, branch, perturb, horizon, step, seed, tol) {
            Ok(outcome) => {
                *report = DmHjReport {
                    in_k_residual: f64::NAN,
                    dgamma_residual: f64::NAN,
                    dhj_residual: f64::NAN,
                    energy_mean: f64::NAN,
                    energy_dev: f64::NAN,
                    crosscheck_dev: f64::NAN,
                    linear_velocity: outcome.linear_velocity,
                    holonomic: outcome.holonomic,
                    bracket_generating: -1,
                };
                if let Some(r) = &outcome.report {
                    report.in_k_residual = r.in_k_residual;
                    report.dgamma_residual = r.dgamma_residual;
                    report.dhj_residual = r.dhj_residual;
                    report.energy_mean = r.energy_mean;
                    report.energy_dev = r.energy_dev;
                    if let Some(c) = r.crosscheck_dev {
                        report.crosscheck_dev = c;
                    }
                    if let Some(b) = r.bracket_generating {
                        report.bracket_generating = b as i32;
                    }
                }
                if outcome.failures.is_empty() {
                    clear_error();
                    DmStatus::Ok
                } else {
                    set_error(&outcome.failures.join("; "));
                    DmStatus::CheckFailed
                }
            }
            Err(e) => status_of(&e),
        }
    })
}
