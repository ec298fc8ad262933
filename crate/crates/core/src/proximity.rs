//! Closest-point geometry between the two arm links and a point obstacle.

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arm::{forward_kinematics, ArmState, PhysicalParams};

/// Which link carries the closest point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    One,
    Two,
}

impl Link {
    pub fn id(self) -> u8 {
        match self {
            Link::One => 1,
            Link::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleObservation {
    /// Noisy position estimate.
    pub pos: Vector2<f64>,
    /// Smoothed velocity estimate.
    pub vel: Vector2<f64>,
    pub pos_true: Vector2<f64>,
}

impl ObstacleObservation {
    /// Observation with no noise and a known velocity.
    pub fn exact(pos: Vector2<f64>, vel: Vector2<f64>) -> Self {
        Self { pos, vel, pos_true: pos }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Vector2<f64>,
    pub link: Link,
    pub arclength: f64,
    pub d: f64,
    /// True when the foot of the perpendicular lies strictly inside the link.
    /// False for the base, the elbow and the tip.
    pub interior: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProximityReport {
    pub d: f64,
    pub d_dot: f64,
    /// Unit vector from the arm point toward the obstacle.
    pub delta: Vector2<f64>,
    pub closest_link: Link,
    pub arclength: f64,
    pub interior: bool,
    pub point: Vector2<f64>,
    /// Translational Jacobian of the closest (material) arm point.
    pub jac: Matrix2<f64>,
    pub obstacle_vel: Vector2<f64>,
    pub collision: bool,
}

fn segment_closest(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> (f64, Vector2<f64>, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = a + t * ab;
    (t, q, (p - q).norm())
}

pub fn closest_point(phys: &PhysicalParams, theta: &Vector2<f64>, obstacle: &Vector2<f64>) -> ClosestPoint {
    let (elbow, tip) = forward_kinematics(phys, theta);
    let origin = Vector2::zeros();
    let (t1, q1, d1) = segment_closest(&origin, &elbow, obstacle);
    let (t2, q2, d2) = segment_closest(&elbow, &tip, obstacle);
    // ties go to link 2
    if d2 <= d1 {
        ClosestPoint { point: q2, link: Link::Two, arclength: t2 * phys.l2, d: d2, interior: t2 > 0.0 && t2 < 1.0 }
    } else {
        ClosestPoint { point: q1, link: Link::One, arclength: t1 * phys.l1, d: d1, interior: t1 > 0.0 && t1 < 1.0 }
    }
}

/// Jacobian of the material point at `arclength` along `link` with respect to
/// the joint angles.
pub fn point_jacobian(phys: &PhysicalParams, theta: &Vector2<f64>, link: Link, arclength: f64) -> Matrix2<f64> {
    let (s1, c1) = theta[0].sin_cos();
    match link {
        Link::One => Matrix2::new(-arclength * s1, 0.0, arclength * c1, 0.0),
        Link::Two => {
            let (s12, c12) = (theta[0] + theta[1]).sin_cos();
            Matrix2::new(
                -phys.l1 * s1 - arclength * s12,
                -arclength * s12,
                phys.l1 * c1 + arclength * c12,
                arclength * c12,
            )
        }
    }
}

/// `Jdot * theta_dot` for the material point at `arclength` along `link`.
pub fn point_bias_acceleration(
    phys: &PhysicalParams,
    state: &ArmState,
    link: Link,
    arclength: f64,
) -> Vector2<f64> {
    let (q, w) = (&state.theta, &state.theta_dot);
    let u1 = Vector2::new(q[0].cos(), q[0].sin());
    match link {
        Link::One => -arclength * w[0] * w[0] * u1,
        Link::Two => {
            let w12 = w[0] + w[1];
            let u12 = Vector2::new((q[0] + q[1]).cos(), (q[0] + q[1]).sin());
            -phys.l1 * w[0] * w[0] * u1 - arclength * w12 * w12 * u12
        }
    }
}

/// Distance, distance rate and Jacobian at the closest arm point.
///
/// `d_dot` is positive when the arm and obstacle separate. When the obstacle
/// touches the arm, `delta` falls back to `last_delta`.
pub fn proximity_report(
    phys: &PhysicalParams,
    state: &ArmState,
    obstacle: &ObstacleObservation,
    last_delta: &Vector2<f64>,
) -> ProximityReport {
    let cp = closest_point(phys, &state.theta, &obstacle.pos);
    let jac = point_jacobian(phys, &state.theta, cp.link, cp.arclength);
    let collision = !(cp.d > 0.0);
    let delta = if collision { *last_delta } else { (obstacle.pos - cp.point) / cp.d };
    let d_dot = delta.dot(&(obstacle.vel - jac * state.theta_dot));
    ProximityReport {
        d: cp.d,
        d_dot,
        delta,
        closest_link: cp.link,
        arclength: cp.arclength,
        interior: cp.interior,
        point: cp.point,
        jac,
        obstacle_vel: obstacle.vel,
        collision,
    }
}

/// Streaming cursor estimator: bounded uniform noise on the position and an
/// exponentially smoothed finite difference for the velocity.
#[derive(Debug, Clone)]
pub struct ObstacleEstimator {
    rng: ChaCha8Rng,
    noise_bound: f64,
    dt: f64,
    smoothing: f64,
    last_pos: Option<Vector2<f64>>,
    vel: Option<Vector2<f64>>,
}

pub const DEFAULT_VELOCITY_SMOOTHING: f64 = 0.5;

impl ObstacleEstimator {
    pub fn new(noise_bound: f64, seed: u64, dt: f64) -> Self {
        Self::with_smoothing(noise_bound, seed, dt, DEFAULT_VELOCITY_SMOOTHING)
    }

    pub fn with_smoothing(noise_bound: f64, seed: u64, dt: f64, smoothing: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise_bound: noise_bound.abs(),
            dt,
            smoothing,
            last_pos: None,
            vel: None,
        }
    }

    pub fn observe(&mut self, pos_true: Vector2<f64>) -> ObstacleObservation {
        let b = self.noise_bound;
        let noise = if b > 0.0 {
            Vector2::new(self.rng.gen_range(-b..=b), self.rng.gen_range(-b..=b))
        } else {
            Vector2::zeros()
        };
        let pos = pos_true + noise;
        let vel = match self.last_pos {
            None => Vector2::zeros(),
            Some(prev) => {
                let fd = (pos - prev) / self.dt;
                let v = match self.vel {
                    None => fd,
                    Some(v) => self.smoothing * fd + (1.0 - self.smoothing) * v,
                };
                self.vel = Some(v);
                v
            }
        };
        self.last_pos = Some(pos);
        ObstacleObservation { pos, vel, pos_true }
    }
}

/// Batch form of [`ObstacleEstimator`] over a recorded cursor track.
pub fn estimate_obstacle(track: &[Vector2<f64>], noise_bound: f64, seed: u64, dt: f64) -> Vec<ObstacleObservation> {
    let mut est = ObstacleEstimator::new(noise_bound, seed, dt);
    track.iter().map(|p| est.observe(*p)).collect()
}
