use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix2x3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rssa::adaptive::{make_trajectory, reference_control, update_estimate, AdaptGains, EstimatorState};
use rssa::arm::{step, xi_interval, ArmState, PhysicalParams, XiVector};
use rssa::proximity::{proximity_report, ObstacleObservation, ProximityReport};
use rssa::safe_control::{build_family, feasibility, feasibility_witness, robust_residual, rssa_control};
use rssa::safety::{lie_derivatives, phi, LieDerivatives, Margin, SafetyConfig};
use rssa::sim::{batch_to_csv, bundled, run_trial, Method, Overrides, Scenario, TrialRecord};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Setup {
    cfg: SafetyConfig,
    phys: PhysicalParams,
    family: Vec<XiVector>,
}

impl Setup {
    fn new() -> Self {
        let phys = PhysicalParams::default();
        let family = build_family(&xi_interval(&phys).unwrap(), 3).unwrap().samples;
        Self { cfg: SafetyConfig::default(), phys, family }
    }

    fn random_scene(&self, rng: &mut ChaCha8Rng) -> (ArmState, Vector2<f64>, Vector2<f64>, ProximityReport) {
        loop {
            let s = ArmState {
                theta: Vector2::new(rng.gen_range(-PI..PI), rng.gen_range(-2.8..2.8)),
                theta_dot: Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                t: 0.0,
            };
            let o = Vector2::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
            let v = Vector2::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8));
            let prox = proximity_report(&self.phys, &s, &ObstacleObservation::exact(o, v), &Vector2::x());
            if prox.d >= 0.03 {
                return (s, o, v, prox);
            }
        }
    }

    /// A feasible instance drawn from the arm: 27 samples at a random scene.
    fn instance(&self, rng: &mut ChaCha8Rng) -> (Vec<LieDerivatives>, Margin) {
        loop {
            let (s, _, _, prox) = self.random_scene(rng);
            let lie: Vec<_> = self
                .family
                .iter()
                .map(|xi| lie_derivatives(&self.cfg, &self.phys, &s, &prox, xi).unwrap())
                .collect();
            if feasibility(&lie).feasible {
                return (lie, Margin::Active(rng.gen_range(-0.5..2.0)));
            }
        }
    }
}

fn soundness(setup: &Setup) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let (lie, m) = setup.instance(&mut rng);
        let u = rssa_control(&lie, m).unwrap().u;
        worst = worst.max(robust_residual(&u, &lie, m));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-9 && secs < 10.0, format!("10000 instances, worst residual {worst:.3e}, {secs:.2} s"))
}

/// Smallest norm over a 400 x 400 grid spanning twice the given radius.
fn brute_force_min(lie: &[LieDerivatives], m: Margin, radius: f64) -> Option<f64> {
    let n = 400;
    let at = |i: usize| -2.0 * radius + 4.0 * radius * i as f64 / (n - 1) as f64;
    (0..n)
        .into_par_iter()
        .filter_map(|i| {
            (0..n)
                .filter_map(|j| {
                    let u = Vector2::new(at(i), at(j));
                    (robust_residual(&u, lie, m) <= 0.0).then(|| u.norm())
                })
                .reduce(f64::min)
        })
        .reduce_with(f64::min)
}

fn minimal_instances(setup: &Setup) -> Vec<(Vec<LieDerivatives>, Margin)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut out = Vec::new();
    while out.len() < 500 {
        let (lie, _) = setup.instance(&mut rng);
        let lf_max = lie.iter().map(|l| l.lf).fold(f64::NEG_INFINITY, f64::max);
        let m = Margin::Active(rng.gen_range(0.05..1.0));
        if lf_max + m.value() > 0.0 {
            out.push((lie, m));
        }
    }
    out
}

fn minimality(instances: &[(Vec<LieDerivatives>, Margin)]) -> Outcome {
    let start = Instant::now();
    let (mut worst, mut no_grid_point) = (0.0f64, 0);
    for (lie, m) in instances {
        let u = rssa_control(lie, *m).unwrap().u.norm();
        match brute_force_min(lie, *m, u) {
            Some(b) => worst = worst.max(u / b),
            None => no_grid_point += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1.05 && secs < 60.0,
        format!("500 arm instances, worst norm ratio {worst:.4}, {no_grid_point} without a feasible grid point, {secs:.1} s"),
    )
}

fn witness(instances: &[(Vec<LieDerivatives>, Margin)]) -> Outcome {
    let (mut sound, mut never_better, mut worst_residual) = (true, true, f64::NEG_INFINITY);
    for (lie, m) in instances {
        let sol = rssa_control(lie, *m).unwrap();
        let g = sol.g_star.map(|g| g.index).unwrap_or(0);
        let c = feasibility_witness(lie, *m, g).unwrap();
        let r = robust_residual(&c, lie, *m);
        worst_residual = worst_residual.max(r);
        sound &= r <= 1e-9;
        never_better &= sol.u.norm() <= c.norm() * (1.0 + 1e-12);
    }
    outcome(
        sound && never_better,
        format!("500 instances, witness feasible: {sound}, never below the RSSA norm: {never_better}, worst residual {worst_residual:.3e}"),
    )
}

fn lie_fd(setup: &Setup) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut states, mut checks, mut worst) = (0, 0, 0.0f64);
    let h = 1e-6;
    while states < 100 {
        let (s, o, v, prox) = setup.random_scene(&mut rng);
        let tau = Vector2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let mut rows = Vec::new();
        let mut switched = false;
        for xi in &setup.family {
            let next = step(xi, &s, &tau, h).unwrap();
            let r = proximity_report(&setup.phys, &next, &ObstacleObservation::exact(o + h * v, v), &Vector2::x());
            if r.closest_link != prox.closest_link || r.interior != prox.interior {
                switched = true;
                break;
            }
            let l = lie_derivatives(&setup.cfg, &setup.phys, &s, &prox, xi).unwrap();
            let an = l.lf + l.lg.dot(&tau);
            let fd = (phi(&setup.cfg, &r) - phi(&setup.cfg, &prox)) / h;
            let scale = an.abs().max(l.lf.abs()).max(l.lg.dot(&tau).abs()).max(1e-3);
            rows.push((an - fd).abs() / scale);
        }
        if switched {
            continue;
        }
        states += 1;
        checks += rows.len();
        worst = rows.into_iter().fold(worst, f64::max);
    }
    outcome(worst < 1e-3, format!("{states} states x {} samples = {checks} checks, worst relative error {worst:.2e}", setup.family.len()))
}

fn with_clip(s: &Scenario, clip: bool) -> Scenario {
    Scenario { clip_torque: clip, ..s.clone() }
}

fn forward_invariance(trials: &[Scenario]) -> Outcome {
    let mut lines = Vec::new();
    let (mut pass, mut slowest) = (true, 0.0f64);
    for s in trials {
        for clip in [false, true] {
            for m in [Method::M3, Method::M4] {
                let start = Instant::now();
                let rec = run_trial(&with_clip(s, clip), m).unwrap();
                slowest = slowest.max(start.elapsed().as_secs_f64());
                let v = rec.metrics.violations;
                pass &= v == 0 && rec.aborted.is_none();
                lines.push(format!("{}/{}/{}={v}", s.name, m.as_str(), if clip { "clip" } else { "free" }));
            }
        }
    }
    pass &= slowest < 30.0;
    outcome(pass, format!("VIOL {}, slowest trial {:.1} ms", lines.join(" "), slowest * 1e3))
}

fn avg(rec: &TrialRecord) -> f64 {
    rec.metrics.avg_distance.unwrap_or(f64::NAN)
}

fn h2_direction(trials: &[Scenario]) -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for s in trials {
        let r = |m| run_trial(s, m).unwrap();
        let (m1, m2, m3, m4) = (avg(&r(Method::M1)), avg(&r(Method::M2)), avg(&r(Method::M3)), avg(&r(Method::M4)));
        pass &= m2 >= m1 && m4 >= m3;
        lines.push(format!("{}: M1 {m1:.4} M2 {m2:.4} M3 {m3:.4} M4 {m4:.4}", s.name));
    }
    outcome(pass, lines.join("; "))
}

fn h1_witness(trials: &[Scenario]) -> Outcome {
    let mut found = Vec::new();
    let mut lines = Vec::new();
    for s in trials {
        let v: Vec<usize> = [Method::M0, Method::M1, Method::M3, Method::M4]
            .iter()
            .map(|&m| run_trial(s, m).unwrap().metrics.violations)
            .collect();
        if v[0] >= 1 && v[1..].iter().all(|&x| x == 0) {
            found.push(s.name.clone());
        }
        lines.push(format!("{} M0/M1/M3/M4 = {}/{}/{}/{}", s.name, v[0], v[1], v[2], v[3]));
    }
    outcome(!found.is_empty(), format!("witness in [{}]; {}", found.join(", "), lines.join("; ")))
}

fn adaptive_loop() -> Outcome {
    let phys = PhysicalParams::default();
    let iv = xi_interval(&phys).unwrap();
    let xi_true = phys.xi_true().unwrap();
    let gains = AdaptGains::default();
    let mut s = ArmState::at_rest(0.2, 0.8);
    let tr = make_trajectory(&phys, &s, &Vector2::new(-0.2, 0.35), 2.0);
    let mut est = EstimatorState::new(iv.lo, iv);
    let dt = 0.01;
    for _ in 0..1000 {
        let d = tr.sample(s.t);
        let r = reference_control(&gains, &d, &s, &est.xi_hat);
        est = update_estimate(&gains, &est, &r.y, &r.s, dt);
        s = step(&xi_true, &s, &r.u_r, dt).unwrap();
    }
    let err = (s.theta - tr.sample(s.t).theta).norm();

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut est = EstimatorState::at_midpoint(iv);
    let mut escapes = 0;
    for _ in 0..100_000 {
        let y = Matrix2x3::from_fn(|_, _| rng.gen_range(-50.0..50.0));
        let sv = Vector2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        est = update_estimate(&gains, &est, &y, &sv, rng.gen_range(1e-4..0.05));
        if !iv.contains(&est.xi_hat) {
            escapes += 1;
        }
    }
    outcome(
        err < 0.02 && escapes == 0,
        format!("tracking error after {:.1} s: {err:.2e} rad; estimate left the box {escapes} times in 100000 updates", s.t),
    )
}

fn determinism() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    batch_to_csv(&dir, &a, &Overrides::default()).unwrap();
    batch_to_csv(&dir, &b, &Overrides::default()).unwrap();
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let rows = x.iter().filter(|&&c| c == b'\n').count();
    outcome(x == y, format!("{} bytes, {rows} lines, identical: {}", x.len(), x == y))
}

fn main() -> ExitCode {
    let setup = Setup::new();
    let trials = bundled().unwrap();
    let minimal = minimal_instances(&setup);
    let checks: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("robust soundness", Box::new(|| soundness(&setup))),
        ("minimal norm", Box::new(|| minimality(&minimal))),
        ("feasibility witness", Box::new(|| witness(&minimal))),
        ("lie derivatives", Box::new(|| lie_fd(&setup))),
        ("forward invariance", Box::new(|| forward_invariance(&trials))),
        ("penalty keeps distance", Box::new(|| h2_direction(&trials))),
        ("frozen estimate violates", Box::new(|| h1_witness(&trials))),
        ("adaptive loop", Box::new(adaptive_loop)),
        ("batch determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {} {name}: {} | {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
