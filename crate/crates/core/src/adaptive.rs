//! Slotine-Li adaptive reference controller with interval projection of the
//! parameter estimate, and quintic joint-space goal trajectories.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::arm::{forward_kinematics, ArmState, PhysicalParams, Torque, XiInterval, XiVector};
use crate::error::{Error, Result};

/// Sign convention of the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptationLaw {
    /// `xi_hat_dot = -Gamma^-1 Y' s`
    #[default]
    Canonical,
    /// `xi_hat_dot = +Gamma^-1 Y' s`
    PositiveSign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptGains {
    pub k_d: Matrix2<f64>,
    pub lambda: Matrix2<f64>,
    pub gamma: Matrix3<f64>,
    pub law: AdaptationLaw,
    gamma_inv: Matrix3<f64>,
}

fn is_spd2(m: &Matrix2<f64>) -> bool {
    *m == m.transpose() && m.cholesky().is_some()
}

impl AdaptGains {
    pub fn new(k_d: Matrix2<f64>, lambda: Matrix2<f64>, gamma: Matrix3<f64>, law: AdaptationLaw) -> Result<Self> {
        if !is_spd2(&k_d) || !is_spd2(&lambda) {
            return Err(Error::Config("K_D and Lambda must be symmetric positive definite".into()));
        }
        let gamma_inv = gamma
            .try_inverse()
            .ok_or_else(|| Error::Config("Gamma must be invertible".into()))?;
        Ok(Self { k_d, lambda, gamma, law, gamma_inv })
    }

    pub fn gamma_inv(&self) -> &Matrix3<f64> {
        &self.gamma_inv
    }
}

impl Default for AdaptGains {
    fn default() -> Self {
        // The gain list (60, 100, 20) read as a diagonal.
        Self::new(
            Matrix2::identity() * 5.0,
            Matrix2::identity(),
            Matrix3::from_diagonal(&Vector3::new(60.0, 100.0, 20.0)),
            AdaptationLaw::Canonical,
        )
        .expect("default gains are valid")
    }
}

/// Reference `(theta_d, theta_d_dot, theta_d_ddot)` at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub theta: Vector2<f64>,
    pub theta_dot: Vector2<f64>,
    pub theta_ddot: Vector2<f64>,
}

/// Quintic rest-to-rest joint trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredTrajectory {
    pub start: Vector2<f64>,
    pub goal: Vector2<f64>,
    pub t0: f64,
    pub duration: f64,
    /// The requested end-effector goal was outside the reachable annulus.
    pub goal_clipped: bool,
}

impl DesiredTrajectory {
    pub fn hold(theta: Vector2<f64>, t0: f64) -> Self {
        Self { start: theta, goal: theta, t0, duration: 1.0, goal_clipped: false }
    }

    pub fn sample(&self, t: f64) -> TrajectorySample {
        let tau = ((t - self.t0) / self.duration).clamp(0.0, 1.0);
        let (t2, t3) = (tau * tau, tau * tau * tau);
        let s = t3 * (10.0 - 15.0 * tau + 6.0 * t2);
        let (ds, dds) = if tau > 0.0 && tau < 1.0 {
            (
                30.0 * t2 * (1.0 - tau) * (1.0 - tau) / self.duration,
                60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau) / (self.duration * self.duration),
            )
        } else {
            (0.0, 0.0)
        };
        let delta = self.goal - self.start;
        TrajectorySample { theta: self.start + s * delta, theta_dot: ds * delta, theta_ddot: dds * delta }
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.duration
    }
}

fn unwrap_near(angle: f64, reference: f64) -> f64 {
    angle + 2.0 * PI * ((reference - angle) / (2.0 * PI)).round()
}

/// Elbow-down inverse kinematics, with the goal radius clipped to the
/// reachable annulus. Returns the joint angles and whether clipping happened.
pub fn inverse_kinematics(phys: &PhysicalParams, goal: &Vector2<f64>) -> (Vector2<f64>, bool) {
    let (l1, l2) = (phys.l1, phys.l2);
    let (r_min, r_max) = ((l1 - l2).abs(), l1 + l2);
    let r = goal.norm();
    let clipped = r < r_min || r > r_max;
    let r = r.clamp(r_min, r_max);
    let dir = if goal.norm() > 0.0 { goal / goal.norm() } else { Vector2::x() };
    let c2 = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let q2 = c2.acos();
    let q1 = dir.y.atan2(dir.x) - (l2 * q2.sin()).atan2(l1 + l2 * c2);
    (Vector2::new(q1, q2), clipped)
}

pub fn make_trajectory(phys: &PhysicalParams, state: &ArmState, goal: &Vector2<f64>, duration: f64) -> DesiredTrajectory {
    let (q, goal_clipped) = inverse_kinematics(phys, goal);
    let target = Vector2::new(unwrap_near(q[0], state.theta[0]), unwrap_near(q[1], state.theta[1]));
    DesiredTrajectory { start: state.theta, goal: target, t0: state.t, duration, goal_clipped }
}

/// Regressor with `Y xi = M(xi) theta_r_ddot + C(xi, theta, theta_dot) theta_r_dot`.
pub fn regressor(state: &ArmState, theta_r_dot: &Vector2<f64>, theta_r_ddot: &Vector2<f64>) -> Matrix2x3<f64> {
    let (s2, c2) = state.theta[1].sin_cos();
    let (w1, w2) = (state.theta_dot[0], state.theta_dot[1]);
    let (v1, v2) = (theta_r_dot[0], theta_r_dot[1]);
    let (a1, a2) = (theta_r_ddot[0], theta_r_ddot[1]);
    Matrix2x3::new(
        a1,
        a2,
        2.0 * c2 * a1 + c2 * a2 - s2 * w2 * v1 - s2 * (w1 + w2) * v2,
        0.0,
        a1 + a2,
        c2 * a1 + s2 * w1 * v1,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceControl {
    pub u_r: Torque,
    pub s: Vector2<f64>,
    pub y: Matrix2x3<f64>,
}

pub fn reference_control(gains: &AdaptGains, desired: &TrajectorySample, state: &ArmState, xi_hat: &XiVector) -> ReferenceControl {
    let err = state.theta - desired.theta;
    let err_dot = state.theta_dot - desired.theta_dot;
    let theta_r_dot = desired.theta_dot - gains.lambda * err;
    let theta_r_ddot = desired.theta_ddot - gains.lambda * err_dot;
    let s = state.theta_dot - theta_r_dot;
    let y = regressor(state, &theta_r_dot, &theta_r_ddot);
    ReferenceControl { u_r: y * xi_hat.to_vector() - gains.k_d * s, s, y }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorState {
    pub xi_hat: XiVector,
    /// Rate applied by the last update, zero on clamped components.
    pub xi_hat_dot: Vector3<f64>,
    pub interval: XiInterval,
}

impl EstimatorState {
    pub fn new(xi_hat: XiVector, interval: XiInterval) -> Self {
        Self { xi_hat: interval.clamp(&xi_hat), xi_hat_dot: Vector3::zeros(), interval }
    }

    pub fn at_midpoint(interval: XiInterval) -> Self {
        Self::new(interval.midpoint(), interval)
    }
}

pub fn update_estimate(gains: &AdaptGains, est: &EstimatorState, y: &Matrix2x3<f64>, s: &Vector2<f64>, dt: f64) -> EstimatorState {
    let raw = gains.gamma_inv() * (y.transpose() * s);
    let rate = match gains.law {
        AdaptationLaw::Canonical => -raw,
        AdaptationLaw::PositiveSign => raw,
    };
    let proposed = est.xi_hat.to_vector() + dt * rate;
    let (lo, hi) = (est.interval.lo.to_vector(), est.interval.hi.to_vector());
    let mut next = proposed;
    let mut applied = rate;
    for i in 0..3 {
        if proposed[i] < lo[i] || proposed[i] > hi[i] {
            next[i] = proposed[i].clamp(lo[i], hi[i]);
            applied[i] = 0.0;
        }
    }
    EstimatorState { xi_hat: XiVector::from_vector(&next), xi_hat_dot: applied, interval: est.interval }
}

/// End-effector position, for goal checks.
pub fn tip(phys: &PhysicalParams, state: &ArmState) -> Vector2<f64> {
    forward_kinematics(phys, &state.theta).1
}
