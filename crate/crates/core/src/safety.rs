//! Safety index `phi = d_min^2 - d^2 - k1 d_dot`, the uncertainty penalty
//! `phi_alpha = k_xi dxi' W dxi` and the Lie derivatives of `phi` along the
//! arm dynamics for a given parameter sample.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::arm::{coriolis_vector, inverse_mass_matrix, ArmState, PhysicalParams, XiInterval, XiVector};
use crate::error::{Error, Result};
use crate::proximity::{point_bias_acceleration, point_jacobian, Link, ProximityReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyConfig {
    #[serde(rename = "d_min_m")]
    pub d_min: f64,
    #[serde(rename = "k1_s")]
    pub k1: f64,
    pub k_xi: f64,
    /// Penalty weight. `None` normalizes each parameter by its interval
    /// midpoint: `diag(1 / xi_mid^2)`.
    pub xi_weight: Option<[[f64; 3]; 3]>,
    pub eta0: f64,
    /// Engage the filter when the composite index would turn positive
    /// within this horizon under the reference control. Zero keeps the
    /// plain `phi + phi_alpha > 0` test.
    pub guard_horizon_s: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self { d_min: 0.15, k1: 0.01, k_xi: 20.0, xi_weight: None, eta0: 0.1, guard_horizon_s: 0.0 }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_min > 0.0) {
            return Err(Error::Config(format!("d_min must be positive, got {}", self.d_min)));
        }
        if !(self.k1 > 0.0) {
            return Err(Error::Config(format!("k1 must be positive, got {}", self.k1)));
        }
        if !(self.k_xi >= 0.0) {
            return Err(Error::Config(format!("k_xi must be non-negative, got {}", self.k_xi)));
        }
        if !self.eta0.is_finite() {
            return Err(Error::Config("eta0 must be finite".into()));
        }
        if !(self.guard_horizon_s >= 0.0 && self.guard_horizon_s.is_finite()) {
            return Err(Error::Config("guard_horizon_s must be non-negative".into()));
        }
        Ok(())
    }

    /// Resolve the penalty weight for `interval`, checking that it is
    /// symmetric positive definite.
    pub fn weight(&self, interval: &XiInterval) -> Result<Matrix3<f64>> {
        let w = match self.xi_weight {
            Some(rows) => Matrix3::from_fn(|i, j| rows[i][j]),
            None => {
                let mid = interval.midpoint().to_vector();
                if mid.iter().any(|m| *m == 0.0) {
                    return Err(Error::Config("cannot normalize by a zero parameter midpoint".into()));
                }
                Matrix3::from_diagonal(&mid.map(|m| 1.0 / (m * m)))
            }
        };
        if w != w.transpose() || w.cholesky().is_none() {
            return Err(Error::Config("xi_weight must be symmetric positive definite".into()));
        }
        Ok(w)
    }
}

/// Effective constraint margin. `Inactive` stands for `eta(t) = -inf`: the
/// composite index is negative and no control constraint applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Margin {
    Active(f64),
    Inactive,
}

impl Margin {
    pub fn value(self) -> f64 {
        match self {
            Margin::Active(v) => v,
            Margin::Inactive => f64::NEG_INFINITY,
        }
    }

    pub fn is_active(self) -> bool {
        matches!(self, Margin::Active(_))
    }
}

/// `phi_dot = lf + lg . u` for one parameter sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LieDerivatives {
    pub lf: f64,
    pub lg: Vector2<f64>,
}

pub fn phi0(cfg: &SafetyConfig, prox: &ProximityReport) -> f64 {
    cfg.d_min * cfg.d_min - prox.d * prox.d
}

pub fn phi(cfg: &SafetyConfig, prox: &ProximityReport) -> f64 {
    phi0(cfg, prox) - cfg.k1 * prox.d_dot
}

pub fn phi_alpha(cfg: &SafetyConfig, weight: &Matrix3<f64>, xi_hat: &XiVector, interval: &XiInterval) -> f64 {
    let dxi = interval.midpoint().to_vector() - xi_hat.to_vector();
    // A PSD form can come out at -1 ulp; the penalty is non-negative by definition.
    (cfg.k_xi * dxi.dot(&(weight * dxi))).max(0.0)
}

pub fn phi_alpha_dot(
    cfg: &SafetyConfig,
    weight: &Matrix3<f64>,
    xi_hat: &XiVector,
    xi_hat_dot: &Vector3<f64>,
    interval: &XiInterval,
) -> f64 {
    let dxi = interval.midpoint().to_vector() - xi_hat.to_vector();
    -2.0 * cfg.k_xi * dxi.dot(&(weight * xi_hat_dot))
}

pub fn eta_t(cfg: &SafetyConfig, phi_plus_alpha: f64, phi_alpha_dot: f64) -> Margin {
    if phi_plus_alpha >= 0.0 {
        Margin::Active(cfg.eta0 + phi_alpha_dot)
    } else {
        Margin::Inactive
    }
}

/// Lie derivatives of `phi` for the dynamics with parameters `xi`.
///
/// `phi_dot = -2 d d_dot - k1 d_ddot` and `d_ddot = c . qdd + e` with
/// `c = -delta' J`. The drift part `e` depends on where the closest point
/// sits: at a link end it is a fixed material point, inside a link it is the
/// foot of the perpendicular and slides along the link. The obstacle is
/// taken as unaccelerated.
pub fn lie_derivatives(
    cfg: &SafetyConfig,
    phys: &PhysicalParams,
    state: &ArmState,
    prox: &ProximityReport,
    xi: &XiVector,
) -> Result<LieDerivatives> {
    if prox.collision || !(prox.d > 0.0) {
        return Err(Error::Collision);
    }
    let (d, d_dot, n) = (prox.d, prox.d_dot, prox.delta);
    let w = &state.theta_dot;
    let e = if prox.interior {
        let (psi, psi_dot, anchor_vel, anchor_bias) = match prox.closest_link {
            Link::One => (state.theta[0], w[0], Vector2::zeros(), Vector2::zeros()),
            Link::Two => {
                let j_elbow = point_jacobian(phys, &state.theta, Link::One, phys.l1);
                (
                    state.theta[0] + state.theta[1],
                    w[0] + w[1],
                    j_elbow * w,
                    point_bias_acceleration(phys, state, Link::One, phys.l1),
                )
            }
        };
        let u = Vector2::new(psi.cos(), psi.sin());
        let sigma = n.dot(&Vector2::new(-psi.sin(), psi.cos()));
        -psi_dot * psi_dot * d - 2.0 * sigma * psi_dot * u.dot(&(prox.obstacle_vel - anchor_vel)) - n.dot(&anchor_bias)
    } else {
        let v_rel = prox.obstacle_vel - prox.jac * w;
        let bias = point_bias_acceleration(phys, state, prox.closest_link, prox.arclength);
        (v_rel.norm_squared() - d_dot * d_dot) / d - n.dot(&bias)
    };
    let minv = inverse_mass_matrix(xi, state.theta[1])?;
    let h = coriolis_vector(xi, state.theta[1], w);
    // row vector delta' J M^-1, stored as a column
    let a = minv.transpose() * (prox.jac.transpose() * n);
    Ok(LieDerivatives { lf: -2.0 * d * d_dot - cfg.k1 * e - cfg.k1 * a.dot(&h), lg: cfg.k1 * a })
}

/// Per-tick safety picture for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyEval {
    pub phi0: f64,
    pub phi: f64,
    pub phi_alpha: f64,
    pub phi_alpha_dot: f64,
    pub eta_t: Margin,
    /// One entry per parameter sample, in the order given.
    pub lie: Vec<LieDerivatives>,
}

impl SafetyEval {
    pub fn phi_r(&self) -> f64 {
        self.phi + self.phi_alpha
    }
}

/// Filter activation value and margin for the reference `u_r`.
///
/// Returns `phi + phi_alpha` and `eta(t)` unchanged when the horizon is
/// zero. Otherwise the activation is the larger of the composite index and
/// its one-horizon prediction under `u_r` with the worst sample, and the
/// margin is active whenever the activation is positive.
pub fn activation(cfg: &SafetyConfig, eval: &SafetyEval, u_r: &Vector2<f64>) -> (f64, Margin) {
    let composite = eval.phi_r();
    if cfg.guard_horizon_s == 0.0 {
        return (composite, eval.eta_t);
    }
    let worst = eval.lie.iter().map(|l| l.lf + l.lg.dot(u_r)).fold(f64::NEG_INFINITY, f64::max);
    let predicted = composite + cfg.guard_horizon_s * (worst + eval.phi_alpha_dot);
    let value = composite.max(predicted);
    let margin = if value > 0.0 { Margin::Active(cfg.eta0 + eval.phi_alpha_dot) } else { eval.eta_t };
    (value, margin)
}

/// Inputs of the uncertainty penalty. `None` drops the penalty entirely.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyInput<'a> {
    pub weight: &'a Matrix3<f64>,
    pub xi_hat: &'a XiVector,
    pub xi_hat_dot: &'a Vector3<f64>,
    pub interval: &'a XiInterval,
}

pub fn evaluate(
    cfg: &SafetyConfig,
    phys: &PhysicalParams,
    state: &ArmState,
    prox: &ProximityReport,
    penalty: Option<PenaltyInput<'_>>,
    samples: &[XiVector],
) -> Result<SafetyEval> {
    let phi_v = phi(cfg, prox);
    let (pa, pad) = match penalty {
        Some(p) => (
            phi_alpha(cfg, p.weight, p.xi_hat, p.interval),
            phi_alpha_dot(cfg, p.weight, p.xi_hat, p.xi_hat_dot, p.interval),
        ),
        None => (0.0, 0.0),
    };
    let lie = samples
        .iter()
        .map(|xi| lie_derivatives(cfg, phys, state, prox, xi))
        .collect::<Result<Vec<_>>>()?;
    Ok(SafetyEval {
        phi0: phi0(cfg, prox),
        phi: phi_v,
        phi_alpha: pa,
        phi_alpha_dot: pad,
        eta_t: eta_t(cfg, phi_v + pa, pad),
        lie,
    })
}
