//! One trial of one method: the per-tick closed loop and its log.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adaptive::{make_trajectory, reference_control, tip, update_estimate, AdaptGains, DesiredTrajectory, EstimatorState};
use crate::arm::{clip_torque, step, ArmState, PhysicalParams, Torque, XiInterval, XiVector};
use crate::error::{Error, Result};
use crate::proximity::{closest_point, proximity_report, ObstacleEstimator, ObstacleObservation};
use crate::safe_control::{baseline_step, build_family, rssa_step, SafeDecision, SafeMode};
use crate::safety::{activation, evaluate, PenaltyInput, SafetyConfig};

use super::metrics::TrialMetrics;
use super::scenario::{GModel, IndexKind, Method, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickLog {
    pub k: usize,
    pub t: f64,
    pub theta: Vector2<f64>,
    pub theta_dot: Vector2<f64>,
    pub u_r: Vector2<f64>,
    /// Applied torque, after clipping.
    pub u: Vector2<f64>,
    pub mode: SafeMode,
    /// True arm-to-cursor distance; `None` without an obstacle.
    pub d: Option<f64>,
    /// Safety index seen by the controller, from the noisy observation.
    pub phi: Option<f64>,
    pub phi_alpha: f64,
    /// Constraint margin `eta(t)` when the filter was engaged.
    pub eta: Option<f64>,
    pub xi_hat: XiVector,
    pub cursor: Vector2<f64>,
    pub cursor_observed: Vector2<f64>,
    pub goal_index: usize,
    pub goal_reached: bool,
    pub goal_clipped: bool,
    pub clipped: bool,
    pub infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: String,
    pub method: Method,
    pub d_min: f64,
    pub ticks: Vec<TickLog>,
    pub metrics: TrialMetrics,
    /// Diagnostic when the trial stopped early.
    pub aborted: Option<String>,
}

impl TrialRecord {
    pub fn distances(&self) -> Vec<f64> {
        self.ticks.iter().filter_map(|t| t.d).collect()
    }

    /// Metrics rebuilt from the per-tick log.
    pub fn recompute_metrics(&self) -> TrialMetrics {
        TrialMetrics::from_distances(
            &self.distances(),
            self.d_min,
            self.ticks.iter().filter(|t| t.goal_reached).count(),
            self.ticks.iter().filter(|t| t.clipped).count(),
            self.ticks.iter().filter(|t| t.infeasible).count(),
        )
    }

    /// True cursor positions, one per tick.
    pub fn cursor_track(&self) -> Vec<Vector2<f64>> {
        self.ticks.iter().map(|t| t.cursor).collect()
    }
}

enum Cursor {
    Track(Vec<Vector2<f64>>),
    Live(Vector2<f64>),
}

/// A steppable trial. [`run_trial`] drives it to the end; the session
/// server steps it against the wall clock and feeds the cursor.
pub struct Trial {
    name: String,
    method: Method,
    dt: f64,
    max_steps: usize,
    tau_max: f64,
    clip: bool,
    goal_radius: f64,
    segment: f64,
    phys: PhysicalParams,
    xi_true: XiVector,
    safety: SafetyConfig,
    gains: AdaptGains,
    q: Matrix2<f64>,
    weight: Matrix3<f64>,
    family: Vec<XiVector>,
    goals: Vec<Vector2<f64>>,
    state: ArmState,
    est: EstimatorState,
    frozen: Option<XiVector>,
    observer: ObstacleEstimator,
    cursor: Cursor,
    traj: DesiredTrajectory,
    goal_index: usize,
    last_delta: Vector2<f64>,
    k: usize,
    log: Vec<TickLog>,
    aborted: Option<String>,
}

/// Frozen estimate for M0: uniform on the parameter box, on its own stream
/// so the cursor noise matches the other methods.
pub fn frozen_estimate(interval: &XiInterval, seed: u64) -> XiVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (lo, hi) = (interval.lo.to_vector(), interval.hi.to_vector());
    let v = Vector3::from_fn(|i, _| if lo[i] < hi[i] { rng.gen_range(lo[i]..=hi[i]) } else { lo[i] });
    XiVector::from_vector(&v)
}

impl Trial {
    pub fn new(scenario: &Scenario, method: Method) -> Result<Self> {
        scenario.validate()?;
        let phys = scenario.physical()?;
        let interval = scenario.interval()?;
        let family = match method.g_model() {
            GModel::FamilyGrid => build_family(&interval, scenario.grid_resolution)?.samples,
            _ => Vec::new(),
        };
        let start = scenario.initial_estimate_xi.map(|x| XiVector::from_vector(&Vector3::from(x))).unwrap_or(interval.midpoint());
        let frozen = (method.g_model() == GModel::FrozenRandomEstimate).then(|| frozen_estimate(&interval, scenario.seed));
        let est = EstimatorState::new(frozen.unwrap_or(start), interval);
        let cursor = match scenario.human_track.positions(scenario.max_steps, scenario.dt_s) {
            Some(track) => Cursor::Track(track),
            None => Cursor::Live(scenario.human_track.spawn()),
        };
        let state = scenario.initial_state.state();
        let goals = scenario.goals();
        let traj = match goals.first() {
            Some(g) => make_trajectory(&phys, &state, g, scenario.segment_duration_s),
            None => DesiredTrajectory::hold(state.theta, state.t),
        };
        Ok(Self {
            name: scenario.name.clone(),
            method,
            dt: scenario.dt_s,
            max_steps: scenario.max_steps,
            tau_max: scenario.tau_max_nm,
            clip: scenario.clip_torque,
            goal_radius: scenario.goal_radius_m,
            segment: scenario.segment_duration_s,
            xi_true: phys.xi_true()?,
            phys,
            safety: scenario.safety.clone(),
            gains: scenario.gains.gains()?,
            q: scenario.q(),
            weight: scenario.safety.weight(&interval)?,
            family,
            goals,
            state,
            est,
            frozen,
            observer: ObstacleEstimator::new(scenario.noise_bound_m, scenario.seed, scenario.dt_s),
            cursor,
            traj,
            goal_index: 0,
            last_delta: Vector2::x(),
            k: 0,
            log: Vec::with_capacity(scenario.max_steps),
            aborted: None,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn state(&self) -> &ArmState {
        &self.state
    }

    pub fn tick(&self) -> usize {
        self.k
    }

    pub fn goals(&self) -> &[Vector2<f64>] {
        &self.goals
    }

    pub fn goal_index(&self) -> usize {
        self.goal_index
    }

    pub fn log(&self) -> &[TickLog] {
        &self.log
    }

    pub fn is_finished(&self) -> bool {
        self.aborted.is_some() || self.k >= self.max_steps
    }

    pub fn aborted(&self) -> Option<&str> {
        self.aborted.as_deref()
    }

    /// Move a live cursor. Takes effect on the next tick. Ignored for
    /// scripted and recorded tracks.
    pub fn set_cursor(&mut self, pos: Vector2<f64>) -> bool {
        match &mut self.cursor {
            Cursor::Live(p) if pos.iter().all(|x| x.is_finite()) => {
                *p = pos;
                true
            }
            _ => false,
        }
    }

    pub fn cursor(&self) -> Vector2<f64> {
        match &self.cursor {
            Cursor::Live(p) => *p,
            Cursor::Track(t) => t[self.k.min(t.len() - 1)],
        }
    }

    /// Advance one tick. Returns `None` once the trial is over.
    pub fn step(&mut self) -> Option<&TickLog> {
        if self.is_finished() {
            return None;
        }
        match self.advance() {
            Ok(entry) => {
                self.log.push(entry);
                self.k += 1;
                self.log.last()
            }
            Err(e) => {
                self.aborted = Some(format!("tick {}: {e}", self.k));
                None
            }
        }
    }

    fn advance(&mut self) -> Result<TickLog> {
        let cursor = self.cursor();
        let obs = self.observer.observe(cursor);

        let mut goal_reached = false;
        if let Some(goal) = self.goals.get(self.goal_index) {
            if (tip(&self.phys, &self.state) - goal).norm() < self.goal_radius {
                goal_reached = true;
                self.goal_index += 1;
                self.traj = match self.goals.get(self.goal_index) {
                    Some(next) => make_trajectory(&self.phys, &self.state, next, self.segment),
                    None => DesiredTrajectory::hold(self.state.theta, self.state.t),
                };
            }
        }

        let desired = self.traj.sample(self.state.t);
        let xi_hat = self.est.xi_hat;
        let rc = reference_control(&self.gains, &desired, &self.state, &xi_hat);
        let next_est = match self.frozen {
            Some(_) => self.est,
            None => update_estimate(&self.gains, &self.est, &rc.y, &rc.s, self.dt),
        };

        let (decision, d, phi, phi_alpha, eta) = if self.method.has_obstacle() {
            let d_true = closest_point(&self.phys, &self.state.theta, &cursor).d;
            let f = self.filter(&obs, &rc.u_r, &xi_hat, &next_est.xi_hat_dot)?;
            (f.decision, Some(d_true), Some(f.phi), f.phi_alpha, f.eta)
        } else {
            (passed(&rc.u_r), None, None, 0.0, None)
        };

        let (u, clipped) = if self.clip { clip_torque(&decision.u, self.tau_max) } else { (decision.u, false) };
        let entry = TickLog {
            k: self.k,
            t: self.state.t,
            theta: self.state.theta,
            theta_dot: self.state.theta_dot,
            u_r: rc.u_r,
            u,
            mode: decision.mode,
            d,
            phi,
            phi_alpha,
            eta,
            xi_hat,
            cursor,
            cursor_observed: obs.pos,
            goal_index: self.goal_index,
            goal_reached,
            goal_clipped: self.traj.goal_clipped,
            clipped,
            infeasible: decision.mode == SafeMode::InfeasibleFallback,
        };
        let next = step(&self.xi_true, &self.state, &u, self.dt)?;
        if !next.is_finite() {
            return Err(Error::Integration(next.t));
        }
        self.state = next;
        self.est = next_est;
        Ok(entry)
    }

    fn filter(
        &mut self,
        obs: &ObstacleObservation,
        u_r: &Torque,
        xi_hat: &XiVector,
        xi_hat_dot: &Vector3<f64>,
    ) -> Result<Filtered> {
        let prox = proximity_report(&self.phys, &self.state, obs, &self.last_delta);
        self.last_delta = prox.delta;
        let penalty = (self.method.index() == IndexKind::PhiR).then_some(PenaltyInput {
            weight: &self.weight,
            xi_hat,
            xi_hat_dot,
            interval: &self.est.interval,
        });
        let single = [self.frozen.unwrap_or(*xi_hat)];
        let samples: &[XiVector] = if self.family.is_empty() { &single } else { &self.family };
        let eval = match evaluate(&self.safety, &self.phys, &self.state, &prox, penalty, samples) {
            Ok(e) => e,
            Err(Error::Collision) => {
                let mut dec = passed(u_r);
                dec.mode = SafeMode::InfeasibleFallback;
                return Ok(Filtered { decision: dec, phi: crate::safety::phi(&self.safety, &prox), phi_alpha: 0.0, eta: None });
            }
            Err(e) => return Err(e),
        };
        let (composite, margin) = activation(&self.safety, &eval, u_r);
        let decision = if self.family.is_empty() {
            baseline_step(composite, margin, &eval.lie[0], u_r, &self.q)?
        } else {
            rssa_step(composite, margin, &eval.lie, u_r, &self.q)?
        };
        let eta = (composite > 0.0).then_some(margin.value());
        Ok(Filtered { decision, phi: eval.phi, phi_alpha: eval.phi_alpha, eta })
    }

    pub fn record(&self) -> TrialRecord {
        let mut r = TrialRecord {
            trial: self.name.clone(),
            method: self.method,
            d_min: self.safety.d_min,
            ticks: self.log.clone(),
            metrics: TrialMetrics::from_distances(&[], self.safety.d_min, 0, 0, 0),
            aborted: self.aborted.clone(),
        };
        r.metrics = r.recompute_metrics();
        r
    }
}

struct Filtered {
    decision: SafeDecision,
    phi: f64,
    phi_alpha: f64,
    eta: Option<f64>,
}

fn passed(u_r: &Torque) -> SafeDecision {
    SafeDecision { u: *u_r, mode: SafeMode::ReferencePassed, g_star_index: None, alpha_star: None, cert: None }
}

pub fn run_trial(scenario: &Scenario, method: Method) -> Result<TrialRecord> {
    let mut trial = Trial::new(scenario, method)?;
    while trial.step().is_some() {}
    Ok(trial.record())
}
