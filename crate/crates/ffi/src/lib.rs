//! C ABI over the trial runner and the robust safe control step.
//!
//! Every function returns an [`RssaStatus`]; on failure the message is
//! available from [`rssa_last_error`] on the same thread. Handles are opaque
//! and owned by the caller until passed to [`rssa_trial_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{Matrix2, Vector2};

use rssa::safe_control::{feasibility, rssa_step, SafeMode};
use rssa::safety::{LieDerivatives, Margin};
use rssa::sim::{Method, Scenario, Trial};
use rssa::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RssaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Scenario = 4,
    Numerical = 5,
    Infeasible = 6,
    Finished = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RssaMode {
    ReferencePassed = 0,
    RssaOverride = 1,
    BaselineOverride = 2,
    InfeasibleFallback = 3,
}

impl From<SafeMode> for RssaMode {
    fn from(m: SafeMode) -> Self {
        match m {
            SafeMode::ReferencePassed => RssaMode::ReferencePassed,
            SafeMode::RssaOverride => RssaMode::RssaOverride,
            SafeMode::BaselineOverride => RssaMode::BaselineOverride,
            SafeMode::InfeasibleFallback => RssaMode::InfeasibleFallback,
        }
    }
}

/// One logged tick. `d` and `phi` are NaN for the no-obstacle run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RssaTick {
    pub k: u64,
    pub t: f64,
    pub theta: [f64; 2],
    pub theta_dot: [f64; 2],
    pub u_r: [f64; 2],
    pub u: [f64; 2],
    pub cursor: [f64; 2],
    pub d: f64,
    pub phi: f64,
    pub phi_alpha: f64,
    pub xi_hat: [f64; 3],
    pub mode: i32,
    pub goal_index: u64,
    pub clipped: bool,
    pub infeasible: bool,
}

/// Running metrics. Distances are NaN when nothing was logged.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RssaMetrics {
    pub ticks: u64,
    pub goals_reached: u64,
    pub violations: u64,
    pub min_distance: f64,
    pub avg_distance: f64,
    pub clipped_ticks: u64,
    pub infeasible_ticks: u64,
    pub aborted: bool,
}

pub struct RssaTrial {
    trial: Trial,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn fail(status: RssaStatus, msg: impl Into<String>) -> RssaStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> RssaStatus {
    let status = match e {
        Error::Scenario(_) | Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::Domain(_) => RssaStatus::Scenario,
        Error::SingularMassMatrix(_) | Error::Integration(_) | Error::Collision => RssaStatus::Numerical,
        Error::Infeasible(_) => RssaStatus::Infeasible,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> RssaStatus) -> RssaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RssaStatus::Panic, "internal panic"),
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, RssaStatus> {
    if p.is_null() {
        return Err(fail(RssaStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(RssaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Message of the last failure on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rssa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rssa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create a trial from scenario JSON and a method id (`NO_OBSTACLE`, `M0`..`M4`).
///
/// # Safety
/// `scenario_json` and `method` must be NUL-terminated strings and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rssa_trial_new(scenario_json: *const c_char, method: *const c_char, out: *mut *mut RssaTrial) -> RssaStatus {
    guard(|| {
        if out.is_null() {
            return fail(RssaStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let (json, id) = match (text(scenario_json, "scenario_json"), text(method, "method")) {
            (Ok(j), Ok(m)) => (j, m),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let method: Method = match id.parse() {
            Ok(m) => m,
            Err(e) => return fail(RssaStatus::InvalidArgument, e.to_string()),
        };
        let trial = match Scenario::from_json(json).and_then(|s| Trial::new(&s, method)) {
            Ok(t) => t,
            Err(e) => return from_error(&e),
        };
        *out = Box::into_raw(Box::new(RssaTrial { trial }));
        RssaStatus::Ok
    })
}

/// Advance one tick. Returns `Finished` once the step budget is spent and
/// `Numerical` if the trial aborted.
///
/// # Safety
/// `trial` must come from [`rssa_trial_new`]; `out` may be null.
#[no_mangle]
pub unsafe extern "C" fn rssa_trial_step(trial: *mut RssaTrial, out: *mut RssaTick) -> RssaStatus {
    guard(|| {
        let Some(h) = trial.as_mut() else { return fail(RssaStatus::NullPointer, "trial is null") };
        if let Some(why) = h.trial.aborted() {
            return fail(RssaStatus::Numerical, why.to_string());
        }
        let Some(e) = h.trial.step() else {
            return match h.trial.aborted() {
                Some(why) => fail(RssaStatus::Numerical, why.to_string()),
                None => fail(RssaStatus::Finished, "trial finished"),
            };
        };
        if let Some(o) = out.as_mut() {
            *o = RssaTick {
                k: e.k as u64,
                t: e.t,
                theta: [e.theta.x, e.theta.y],
                theta_dot: [e.theta_dot.x, e.theta_dot.y],
                u_r: [e.u_r.x, e.u_r.y],
                u: [e.u.x, e.u.y],
                cursor: [e.cursor.x, e.cursor.y],
                d: e.d.unwrap_or(f64::NAN),
                phi: e.phi.unwrap_or(f64::NAN),
                phi_alpha: e.phi_alpha,
                xi_hat: [e.xi_hat.xi1, e.xi_hat.xi2, e.xi_hat.xi3],
                mode: RssaMode::from(e.mode) as i32,
                goal_index: e.goal_index as u64,
                clipped: e.clipped,
                infeasible: e.infeasible,
            };
        }
        RssaStatus::Ok
    })
}

/// Move the cursor of a live trial; takes effect on the next tick.
///
/// # Safety
/// `trial` must come from [`rssa_trial_new`].
#[no_mangle]
pub unsafe extern "C" fn rssa_trial_set_cursor(trial: *mut RssaTrial, x: f64, y: f64) -> RssaStatus {
    guard(|| {
        let Some(h) = trial.as_mut() else { return fail(RssaStatus::NullPointer, "trial is null") };
        if h.trial.set_cursor(Vector2::new(x, y)) {
            RssaStatus::Ok
        } else {
            fail(RssaStatus::InvalidArgument, "cursor must be finite and the scenario track live")
        }
    })
}

/// Metrics over the ticks run so far.
///
/// # Safety
/// `trial` must come from [`rssa_trial_new`] and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn rssa_trial_metrics(trial: *const RssaTrial, out: *mut RssaMetrics) -> RssaStatus {
    guard(|| {
        let (Some(h), Some(o)) = (trial.as_ref(), out.as_mut()) else {
            return fail(RssaStatus::NullPointer, "trial or out is null");
        };
        let r = h.trial.record();
        let m = &r.metrics;
        *o = RssaMetrics {
            ticks: r.ticks.len() as u64,
            goals_reached: m.goals_reached as u64,
            violations: m.violations as u64,
            min_distance: m.min_distance.unwrap_or(f64::NAN),
            avg_distance: m.avg_distance.unwrap_or(f64::NAN),
            clipped_ticks: m.clipped_ticks as u64,
            infeasible_ticks: m.infeasible_ticks as u64,
            aborted: r.aborted.is_some(),
        };
        RssaStatus::Ok
    })
}

/// Release a trial. Null is ignored.
///
/// # Safety
/// `trial` must come from [`rssa_trial_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rssa_trial_free(trial: *mut RssaTrial) {
    if !trial.is_null() {
        drop(Box::from_raw(trial));
    }
}

unsafe fn family(lf: *const f64, lg: *const f64, n: usize) -> Result<Vec<LieDerivatives>, RssaStatus> {
    if lf.is_null() || lg.is_null() {
        return Err(fail(RssaStatus::NullPointer, "lf or lg is null"));
    }
    if n == 0 {
        return Err(fail(RssaStatus::InvalidArgument, "family is empty"));
    }
    let (lf, lg) = (std::slice::from_raw_parts(lf, n), std::slice::from_raw_parts(lg, 2 * n));
    let rows: Vec<_> = (0..n).map(|i| LieDerivatives { lf: lf[i], lg: Vector2::new(lg[2 * i], lg[2 * i + 1]) }).collect();
    if rows.iter().any(|r| !r.lf.is_finite() || !r.lg.iter().all(|x| x.is_finite())) {
        return Err(fail(RssaStatus::InvalidArgument, "family has non-finite entries"));
    }
    Ok(rows)
}

/// Alignment certificate of a family: `alpha` is the smallest pairwise
/// cosine, `beta` the smallest norm.
///
/// # Safety
/// `lg` holds `2 * n` values, row-major; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn rssa_certificate(lg: *const f64, n: usize, alpha: *mut f64, beta: *mut f64) -> RssaStatus {
    guard(|| {
        if alpha.is_null() || beta.is_null() {
            return fail(RssaStatus::NullPointer, "alpha or beta is null");
        }
        let zeros = vec![0.0; n];
        let rows = match family(zeros.as_ptr(), lg, n) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let c = feasibility(&rows);
        *alpha = c.alpha;
        *beta = c.beta;
        RssaStatus::Ok
    })
}

/// Robust filter for one tick. `lf` holds `n` drift terms and `lg` the
/// `n` control rows (row-major, `2 * n` values). When `activation > 0`
/// and `u_r` is not robustly safe, the minimum-norm robust control is
/// returned; an infeasible family falls back to projecting against the
/// worst sample with identity metric.
///
/// # Safety
/// Array lengths must match `n`; `u_r` and `u_out` hold 2 values.
#[no_mangle]
pub unsafe extern "C" fn rssa_safe_control(
    lf: *const f64,
    lg: *const f64,
    n: usize,
    activation: f64,
    eta: f64,
    u_r: *const f64,
    u_out: *mut f64,
    mode_out: *mut i32,
) -> RssaStatus {
    guard(|| {
        if u_r.is_null() || u_out.is_null() {
            return fail(RssaStatus::NullPointer, "u_r or u_out is null");
        }
        if !activation.is_finite() || !eta.is_finite() {
            return fail(RssaStatus::InvalidArgument, "activation and eta must be finite");
        }
        let rows = match family(lf, lg, n) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let ur = Vector2::new(*u_r, *u_r.add(1));
        match rssa_step(activation, Margin::Active(eta), &rows, &ur, &Matrix2::identity()) {
            Ok(d) => {
                *u_out = d.u.x;
                *u_out.add(1) = d.u.y;
                if let Some(m) = mode_out.as_mut() {
                    *m = RssaMode::from(d.mode) as i32;
                }
                RssaStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}
