use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use rssa_ffi::*;

fn scenario(steps: usize, live: bool) -> CString {
    let mut s = rssa::sim::bundled().unwrap().remove(0);
    s.max_steps = steps;
    if live {
        s.human_track = rssa::sim::HumanTrack::Live { spawn_m: [0.6, 0.6] };
    }
    CString::new(s.to_json().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(rssa_last_error()) }.to_str().unwrap().to_string()
}

fn new_trial(json: &CString, method: &str) -> (RssaStatus, *mut RssaTrial) {
    let m = CString::new(method).unwrap();
    let mut t = ptr::null_mut();
    let status = unsafe { rssa_trial_new(json.as_ptr(), m.as_ptr(), &mut t) };
    (status, t)
}

#[test]
fn trial_handle_matches_the_library() {
    let json = scenario(120, false);
    let (status, t) = new_trial(&json, "M4");
    assert_eq!(status, RssaStatus::Ok);
    let mut ticks = Vec::new();
    let mut tick = RssaTick::default();
    while unsafe { rssa_trial_step(t, &mut tick) } == RssaStatus::Ok {
        ticks.push(tick);
    }
    assert_eq!(unsafe { rssa_trial_step(t, &mut tick) }, RssaStatus::Finished);
    let mut m = RssaMetrics::default();
    assert_eq!(unsafe { rssa_trial_metrics(t, &mut m) }, RssaStatus::Ok);
    unsafe { rssa_trial_free(t) };

    let s = rssa::sim::Scenario::from_json(json.to_str().unwrap()).unwrap();
    let rec = rssa::sim::run_trial(&s, rssa::sim::Method::M4).unwrap();
    assert_eq!(ticks.len(), rec.ticks.len());
    for (a, b) in ticks.iter().zip(&rec.ticks) {
        assert_eq!(a.d, b.d.unwrap());
        assert_eq!(a.u, [b.u.x, b.u.y]);
        assert_eq!(a.mode, RssaMode::from(b.mode) as i32);
    }
    assert_eq!(m.ticks, 120);
    assert_eq!(m.violations as usize, rec.metrics.violations);
    assert_eq!(m.avg_distance, rec.metrics.avg_distance.unwrap());
    assert!(!m.aborted);
}

#[test]
fn no_obstacle_reports_nan_distances() {
    let (status, t) = new_trial(&scenario(5, false), "no_obstacle");
    assert_eq!(status, RssaStatus::Ok);
    let mut tick = RssaTick::default();
    assert_eq!(unsafe { rssa_trial_step(t, &mut tick) }, RssaStatus::Ok);
    assert!(tick.d.is_nan() && tick.phi.is_nan());
    let mut m = RssaMetrics::default();
    unsafe { rssa_trial_metrics(t, &mut m) };
    assert!(m.min_distance.is_nan());
    unsafe { rssa_trial_free(t) };
}

#[test]
fn live_cursor_round_trip() {
    let (_, t) = new_trial(&scenario(10, true), "M1");
    let mut tick = RssaTick::default();
    unsafe { rssa_trial_step(t, &mut tick) };
    assert_eq!(unsafe { rssa_trial_set_cursor(t, 0.3, 0.4) }, RssaStatus::Ok);
    unsafe { rssa_trial_step(t, &mut tick) };
    assert_eq!(tick.cursor, [0.3, 0.4]);
    assert_eq!(unsafe { rssa_trial_set_cursor(t, f64::NAN, 0.4) }, RssaStatus::InvalidArgument);
    unsafe { rssa_trial_free(t) };

    let (_, scripted) = new_trial(&scenario(10, false), "M1");
    assert_eq!(unsafe { rssa_trial_set_cursor(scripted, 0.3, 0.4) }, RssaStatus::InvalidArgument);
    assert!(last_error().contains("live"));
    unsafe { rssa_trial_free(scripted) };
}

#[test]
fn errors_are_reported_with_codes() {
    let (status, t) = new_trial(&CString::new("{").unwrap(), "M1");
    assert_eq!(status, RssaStatus::Scenario);
    assert!(t.is_null());
    assert!(!last_error().is_empty());

    let (status, _) = new_trial(&scenario(5, false), "M7");
    assert_eq!(status, RssaStatus::InvalidArgument);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { rssa_trial_new(ptr::null(), ptr::null(), &mut out) }, RssaStatus::NullPointer);
    assert_eq!(unsafe { rssa_trial_step(ptr::null_mut(), ptr::null_mut()) }, RssaStatus::NullPointer);
    assert_eq!(unsafe { rssa_trial_metrics(ptr::null(), ptr::null_mut()) }, RssaStatus::NullPointer);
    unsafe { rssa_trial_free(ptr::null_mut()) };

    let bad = [0xffu8, 0xfe, 0];
    let m = CString::new("M1").unwrap();
    let status = unsafe { rssa_trial_new(bad.as_ptr().cast(), m.as_ptr(), &mut out) };
    assert_eq!(status, RssaStatus::InvalidUtf8);
}

#[test]
fn aborted_trial_reports_numerical() {
    let mut s = rssa::sim::bundled().unwrap().remove(0);
    s.clip_torque = false;
    s.initial_state.theta_dot_rad_s = [1e155, -1e155];
    let (status, t) = new_trial(&CString::new(s.to_json().unwrap()).unwrap(), "M1");
    assert_eq!(status, RssaStatus::Ok);
    let mut tick = RssaTick::default();
    let mut last = RssaStatus::Ok;
    for _ in 0..10 {
        last = unsafe { rssa_trial_step(t, &mut tick) };
        if last != RssaStatus::Ok {
            break;
        }
    }
    assert_eq!(last, RssaStatus::Numerical);
    assert!(last_error().starts_with("tick "));
    let mut m = RssaMetrics::default();
    unsafe { rssa_trial_metrics(t, &mut m) };
    assert!(m.aborted);
    unsafe { rssa_trial_free(t) };
}

#[test]
fn safe_control_over_raw_arrays() {
    let (lf, lg, ur) = ([0.0, 0.0], [1.0, 0.0, 2.0, 0.0], [0.0, 0.0]);
    let mut u = [f64::NAN; 2];
    let mut mode = -1;
    let call = |act: f64, u: &mut [f64; 2], mode: &mut i32| unsafe {
        rssa_safe_control(lf.as_ptr(), lg.as_ptr(), 2, act, 1.0, ur.as_ptr(), u.as_mut_ptr(), mode)
    };
    assert_eq!(call(1.0, &mut u, &mut mode), RssaStatus::Ok);
    assert_eq!((u, mode), ([-1.0, 0.0], RssaMode::RssaOverride as i32));
    assert_eq!(call(-1.0, &mut u, &mut mode), RssaStatus::Ok);
    assert_eq!((u, mode), ([0.0, 0.0], RssaMode::ReferencePassed as i32));

    let opposed = [1.0, 0.0, -1.0, 0.0];
    let status = unsafe { rssa_safe_control(lf.as_ptr(), opposed.as_ptr(), 2, 1.0, 1.0, ur.as_ptr(), u.as_mut_ptr(), &mut mode) };
    assert_eq!(status, RssaStatus::Ok);
    assert_eq!(mode, RssaMode::InfeasibleFallback as i32);

    let (mut alpha, mut beta) = (0.0, 0.0);
    assert_eq!(unsafe { rssa_certificate(opposed.as_ptr(), 2, &mut alpha, &mut beta) }, RssaStatus::Ok);
    assert_eq!((alpha, beta), (-1.0, 1.0));
    assert_eq!(unsafe { rssa_certificate(opposed.as_ptr(), 0, &mut alpha, &mut beta) }, RssaStatus::InvalidArgument);
    let nan = [f64::NAN, 0.0];
    assert_eq!(unsafe { rssa_certificate(nan.as_ptr(), 1, &mut alpha, &mut beta) }, RssaStatus::InvalidArgument);
}

#[test]
fn header_declares_the_abi() {
    let h = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rssa.h")).unwrap();
    for name in [
        "rssa_trial_new",
        "rssa_trial_step",
        "rssa_trial_set_cursor",
        "rssa_trial_metrics",
        "rssa_trial_free",
        "rssa_safe_control",
        "rssa_certificate",
        "rssa_last_error",
        "typedef struct RssaTrial RssaTrial",
        "RSSA_STATUS_FINISHED = 7",
    ] {
        assert!(h.contains(name), "{name}");
    }
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = target_dir().join("librssa_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let out = Command::new("cc")
        .arg(root.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok 0.1.0"));
}
