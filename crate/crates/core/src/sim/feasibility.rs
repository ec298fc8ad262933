//! Workspace sweep of the alignment certificate.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::arm::ArmState;
use crate::error::Result;
use crate::proximity::{point_jacobian, Link, ProximityReport};
use crate::safe_control::{build_family, feasibility};
use crate::safety::lie_derivatives;

use super::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub theta_rad: [f64; 2],
    pub link: u8,
    pub arclength_m: f64,
    pub direction_rad: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub samples: usize,
    pub feasible: usize,
    pub family_size: usize,
    pub alpha_min: f64,
    /// Smallest `beta` over configurations where it is nonzero.
    pub beta_min_nonzero: f64,
    pub zero_beta: usize,
    pub worst: Option<SweepPoint>,
}

pub struct SweepGrid {
    pub joint_steps: usize,
    pub points_per_link: usize,
    pub directions: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self { joint_steps: 24, points_per_link: 4, directions: 12 }
    }
}

/// Certificate over joint angles, closest points along both links and
/// obstacle directions, at rest. The certificate only depends on
/// `lg = k1 M^-1 J' delta`, which does not involve velocities.
pub fn sweep_feasibility(scenario: &Scenario, grid: &SweepGrid) -> Result<FeasibilityReport> {
    let phys = scenario.physical()?;
    let family = build_family(&scenario.interval()?, scenario.grid_resolution)?;
    let mut rep = FeasibilityReport {
        samples: 0,
        feasible: 0,
        family_size: family.len(),
        alpha_min: f64::INFINITY,
        beta_min_nonzero: f64::INFINITY,
        zero_beta: 0,
        worst: None,
    };
    let angle = |i: usize, n: usize| -PI + 2.0 * PI * i as f64 / n as f64;
    for i in 0..grid.joint_steps {
        for j in 0..grid.joint_steps {
            let state = ArmState::at_rest(angle(i, grid.joint_steps), angle(j, grid.joint_steps));
            for (link, len) in [(Link::One, phys.l1), (Link::Two, phys.l2)] {
                for p in 1..=grid.points_per_link {
                    let s = len * p as f64 / grid.points_per_link as f64;
                    let jac = point_jacobian(&phys, &state.theta, link, s);
                    for a in 0..grid.directions {
                        let dir = angle(a, grid.directions);
                        let delta = Vector2::new(dir.cos(), dir.sin());
                        let prox = ProximityReport {
                            d: scenario.safety.d_min,
                            d_dot: 0.0,
                            delta,
                            closest_link: link,
                            arclength: s,
                            interior: s < len,
                            point: Vector2::zeros(),
                            jac,
                            obstacle_vel: Vector2::zeros(),
                            collision: false,
                        };
                        let lie = family
                            .samples
                            .iter()
                            .map(|xi| lie_derivatives(&scenario.safety, &phys, &state, &prox, xi))
                            .collect::<Result<Vec<_>>>()?;
                        let cert = feasibility(&lie);
                        rep.samples += 1;
                        if cert.feasible {
                            rep.feasible += 1;
                        }
                        if cert.beta > 0.0 {
                            rep.beta_min_nonzero = rep.beta_min_nonzero.min(cert.beta);
                        } else {
                            rep.zero_beta += 1;
                        }
                        if cert.beta > 0.0 && cert.alpha < rep.alpha_min {
                            rep.alpha_min = cert.alpha;
                            rep.worst = Some(SweepPoint {
                                theta_rad: [state.theta[0], state.theta[1]],
                                link: link.id(),
                                arclength_m: s,
                                direction_rad: dir,
                                alpha: cert.alpha,
                                beta: cert.beta,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(rep)
}
