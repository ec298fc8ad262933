//! Two-link planar manipulator with dynamics linear in the lumped inertial
//! parameters `(xi1, xi2, xi3)`.
//!
//! The model is gravity-free and frictionless:
//!
//! ```text
//! M(xi, q2) qdd + h(xi, q, qd) = tau
//! M = [[xi1 + 2 xi3 c2, xi2 + xi3 c2],
//!      [xi2 + xi3 c2,   xi2        ]]
//! h = xi3 s2 [-2 qd1 qd2 - qd2^2, qd1^2]
//! ```
//!
//! with `xi1 = I1 + m1 lc1^2 + I2 + m2 lc2^2 + m2 l1^2`, `xi2 = I2 + m2 lc2^2`
//! and `xi3 = m2 l1 lc2`. Links are uniform rods, so `lc = l/2` and
//! `I = m l^2 / 12` about the centroid.

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed mass interval `[lo, hi]` in kilograms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassInterval {
    pub lo: f64,
    pub hi: f64,
}

impl MassInterval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn point(m: f64) -> Self {
        Self { lo: m, hi: m }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, m: f64) -> bool {
        m >= self.lo && m <= self.hi
    }
}

/// Known link lengths, uncertain link masses and the ground truth used by
/// the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub l1: f64,
    pub l2: f64,
    pub m1: MassInterval,
    pub m2: MassInterval,
    pub m1_true: f64,
    pub m2_true: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            l1: 0.25,
            l2: 0.27,
            m1: MassInterval::new(26.75, 28.75),
            m2: MassInterval::new(13.30, 14.30),
            m1_true: 27.75,
            m2_true: 13.80,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l1 > 0.0 && self.l2 > 0.0) {
            return Err(Error::Domain(format!(
                "link lengths must be positive (l1 = {}, l2 = {})",
                self.l1, self.l2
            )));
        }
        for (name, iv, truth) in [("m1", self.m1, self.m1_true), ("m2", self.m2, self.m2_true)] {
            if !(iv.lo.is_finite() && iv.hi.is_finite()) || iv.lo > iv.hi {
                return Err(Error::Domain(format!("{name} interval [{}, {}] is not ordered", iv.lo, iv.hi)));
            }
            if iv.lo <= 0.0 {
                return Err(Error::Domain(format!("{name} interval must be positive")));
            }
            if !iv.contains(truth) {
                return Err(Error::Domain(format!(
                    "true {name} = {truth} lies outside [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        Ok(())
    }

    pub fn reach(&self) -> f64 {
        self.l1 + self.l2
    }

    pub fn xi_true(&self) -> Result<XiVector> {
        xi_from_masses(self, self.m1_true, self.m2_true)
    }
}

/// Lumped inertial parameters `[kg m^2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiVector {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
}

impl XiVector {
    pub const fn new(xi1: f64, xi2: f64, xi3: f64) -> Self {
        Self { xi1, xi2, xi3 }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.xi1, self.xi2, self.xi3)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.xi1.is_finite() && self.xi2.is_finite() && self.xi3.is_finite()
    }

    /// `xi1 > 2 xi2`, the design condition on the first leading minor.
    pub fn satisfies_design_condition(&self) -> bool {
        self.xi1 > 2.0 * self.xi2
    }
}

/// Axis-aligned box of lumped parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiInterval {
    pub lo: XiVector,
    pub hi: XiVector,
}

impl XiInterval {
    pub fn new(lo: XiVector, hi: XiVector) -> Result<Self> {
        let (l, h) = (lo.to_vector(), hi.to_vector());
        if l.iter().chain(h.iter()).any(|x| !x.is_finite()) || (0..3).any(|i| l[i] > h[i]) {
            return Err(Error::Domain("xi interval bounds are not ordered".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(xi: XiVector) -> Self {
        Self { lo: xi, hi: xi }
    }

    pub fn midpoint(&self) -> XiVector {
        XiVector::from_vector(&(0.5 * (self.lo.to_vector() + self.hi.to_vector())))
    }

    pub fn contains(&self, xi: &XiVector) -> bool {
        let (l, h, x) = (self.lo.to_vector(), self.hi.to_vector(), xi.to_vector());
        (0..3).all(|i| x[i] >= l[i] && x[i] <= h[i])
    }

    pub fn clamp(&self, xi: &XiVector) -> XiVector {
        let (l, h, x) = (self.lo.to_vector(), self.hi.to_vector(), xi.to_vector());
        XiVector::from_vector(&Vector3::from_fn(|i, _| x[i].clamp(l[i], h[i])))
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }
}

/// Joint angles and rates of the arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub theta: Vector2<f64>,
    pub theta_dot: Vector2<f64>,
    pub t: f64,
}

impl ArmState {
    pub fn new(theta: Vector2<f64>, theta_dot: Vector2<f64>) -> Self {
        Self { theta, theta_dot, t: 0.0 }
    }

    pub fn at_rest(theta1: f64, theta2: f64) -> Self {
        Self::new(Vector2::new(theta1, theta2), Vector2::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(self.theta_dot.iter()).all(|x| x.is_finite()) && self.t.is_finite()
    }
}

/// Joint torques `[N m]`.
pub type Torque = Vector2<f64>;

/// Clip each torque component to `[-tau_max, tau_max]`. Returns the clipped
/// torque and whether any component was changed.
pub fn clip_torque(tau: &Torque, tau_max: f64) -> (Torque, bool) {
    let clipped = tau.map(|x| x.clamp(-tau_max, tau_max));
    (clipped, clipped != *tau)
}

pub fn xi_from_masses(phys: &PhysicalParams, m1: f64, m2: f64) -> Result<XiVector> {
    if !(phys.l1 > 0.0 && phys.l2 > 0.0) {
        return Err(Error::Domain("link lengths must be positive".into()));
    }
    if !(m1 >= 0.0 && m2 >= 0.0) {
        return Err(Error::Domain(format!("masses must be non-negative (m1 = {m1}, m2 = {m2})")));
    }
    let (l1, l2) = (phys.l1, phys.l2);
    let (lc1, lc2) = (0.5 * l1, 0.5 * l2);
    let i1 = m1 * l1 * l1 / 12.0;
    let i2 = m2 * l2 * l2 / 12.0;
    let xi2 = i2 + m2 * lc2 * lc2;
    Ok(XiVector {
        xi1: i1 + m1 * lc1 * lc1 + xi2 + m2 * l1 * l1,
        xi2,
        xi3: m2 * l1 * lc2,
    })
}

/// Interval image of the mass box. Every component of xi is non-decreasing
/// in both masses, so the lower and upper corners bound it.
pub fn xi_interval(phys: &PhysicalParams) -> Result<XiInterval> {
    phys.validate()?;
    let lo = xi_from_masses(phys, phys.m1.lo, phys.m2.lo)?;
    let hi = xi_from_masses(phys, phys.m1.hi, phys.m2.hi)?;
    XiInterval::new(lo, hi)
}

pub fn mass_matrix(xi: &XiVector, theta2: f64) -> Matrix2<f64> {
    let c2 = theta2.cos();
    let off = xi.xi2 + xi.xi3 * c2;
    Matrix2::new(xi.xi1 + 2.0 * xi.xi3 * c2, off, off, xi.xi2)
}

/// Velocity-product term `h = C(q, qd) qd`.
pub fn coriolis_vector(xi: &XiVector, theta2: f64, theta_dot: &Vector2<f64>) -> Vector2<f64> {
    let s2 = theta2.sin();
    let (w1, w2) = (theta_dot[0], theta_dot[1]);
    Vector2::new(xi.xi3 * s2 * (-2.0 * w1 * w2 - w2 * w2), xi.xi3 * s2 * w1 * w1)
}

/// Coriolis matrix with `Mdot - 2C` skew-symmetric.
pub fn coriolis_matrix(xi: &XiVector, theta2: f64, theta_dot: &Vector2<f64>) -> Matrix2<f64> {
    let hs = xi.xi3 * theta2.sin();
    let (w1, w2) = (theta_dot[0], theta_dot[1]);
    Matrix2::new(-hs * w2, -hs * (w1 + w2), hs * w1, 0.0)
}

pub fn inverse_mass_matrix(xi: &XiVector, theta2: f64) -> Result<Matrix2<f64>> {
    let m = mass_matrix(xi, theta2);
    let det = m.determinant();
    if !(det.abs() > f64::EPSILON * m.norm_squared()) {
        return Err(Error::SingularMassMatrix(det));
    }
    Ok(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

/// Joint accelerations `M^-1 (tau - h)`.
pub fn forward_dynamics(xi: &XiVector, s: &ArmState, tau: &Torque) -> Result<Vector2<f64>> {
    let minv = inverse_mass_matrix(xi, s.theta[1])?;
    Ok(minv * (tau - coriolis_vector(xi, s.theta[1], &s.theta_dot)))
}

/// Semi-implicit Euler step of the true dynamics.
pub fn step(xi_true: &XiVector, s: &ArmState, tau: &Torque, dt: f64) -> Result<ArmState> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let acc = forward_dynamics(xi_true, s, tau)?;
    let theta_dot = s.theta_dot + dt * acc;
    let next = ArmState { theta: s.theta + dt * theta_dot, theta_dot, t: s.t + dt };
    if !next.is_finite() {
        return Err(Error::Integration(next.t));
    }
    Ok(next)
}

pub fn kinetic_energy(xi: &XiVector, s: &ArmState) -> f64 {
    0.5 * s.theta_dot.dot(&(mass_matrix(xi, s.theta[1]) * s.theta_dot))
}

/// Positions of the elbow and the end effector.
pub fn forward_kinematics(phys: &PhysicalParams, theta: &Vector2<f64>) -> (Vector2<f64>, Vector2<f64>) {
    let q12 = theta[0] + theta[1];
    let elbow = phys.l1 * Vector2::new(theta[0].cos(), theta[0].sin());
    let tip = elbow + phys.l2 * Vector2::new(q12.cos(), q12.sin());
    (elbow, tip)
}
