//! Scenario files. Every dimensional field carries its unit in the name.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaptGains, AdaptationLaw};
use crate::arm::{xi_interval, ArmState, MassInterval, PhysicalParams, XiInterval, XiVector};
use crate::error::{Error, Result};
use crate::safety::SafetyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "NO_OBSTACLE")]
    NoObstacle,
    M0,
    M1,
    M2,
    M3,
    M4,
}

impl Method {
    /// Batch order.
    pub const ALL: [Method; 6] = [Method::NoObstacle, Method::M0, Method::M1, Method::M2, Method::M3, Method::M4];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::NoObstacle => "NO_OBSTACLE",
            Method::M0 => "M0",
            Method::M1 => "M1",
            Method::M2 => "M2",
            Method::M3 => "M3",
            Method::M4 => "M4",
        }
    }

    pub fn g_model(self) -> GModel {
        match self {
            Method::NoObstacle => GModel::AdaptiveEstimate,
            Method::M0 => GModel::FrozenRandomEstimate,
            Method::M1 | Method::M2 => GModel::AdaptiveEstimate,
            Method::M3 | Method::M4 => GModel::FamilyGrid,
        }
    }

    pub fn index(self) -> IndexKind {
        match self {
            Method::M2 | Method::M4 => IndexKind::PhiR,
            _ => IndexKind::Phi,
        }
    }

    pub fn has_obstacle(self) -> bool {
        self != Method::NoObstacle
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GModel {
    FrozenRandomEstimate,
    AdaptiveEstimate,
    FamilyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Phi,
    PhiR,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HumanTrack {
    /// Cursor chases `goals_m` in turn with a critically damped pursuit.
    Scripted {
        start_m: [f64; 2],
        goals_m: Vec<[f64; 2]>,
        #[serde(default = "default_pursuit_rate")]
        pursuit_rate_rad_s: f64,
        #[serde(default = "default_switch_radius")]
        switch_radius_m: f64,
    },
    /// One true cursor position per tick.
    Recorded { positions_m: Vec<[f64; 2]> },
    /// Cursor fed at run time; held at `spawn_m` until the first input.
    Live { spawn_m: [f64; 2] },
}

fn default_pursuit_rate() -> f64 {
    4.0
}

fn default_switch_radius() -> f64 {
    0.02
}

impl HumanTrack {
    pub fn is_live(&self) -> bool {
        matches!(self, HumanTrack::Live { .. })
    }

    /// Cursor position at tick 0.
    pub fn spawn(&self) -> Vector2<f64> {
        let p = match self {
            HumanTrack::Scripted { start_m, .. } => *start_m,
            HumanTrack::Recorded { positions_m } => positions_m.first().copied().unwrap_or([0.0, 0.0]),
            HumanTrack::Live { spawn_m } => *spawn_m,
        };
        Vector2::new(p[0], p[1])
    }

    /// Precomputed positions for `steps` ticks, `None` for a live track.
    pub fn positions(&self, steps: usize, dt: f64) -> Option<Vec<Vector2<f64>>> {
        match self {
            HumanTrack::Live { .. } => None,
            HumanTrack::Recorded { positions_m } => {
                Some(positions_m.iter().take(steps).map(|p| Vector2::new(p[0], p[1])).collect())
            }
            HumanTrack::Scripted { start_m, goals_m, pursuit_rate_rad_s, switch_radius_m } => {
                let w = *pursuit_rate_rad_s;
                let mut p = Vector2::new(start_m[0], start_m[1]);
                let mut v = Vector2::zeros();
                let mut g = 0;
                let mut out = Vec::with_capacity(steps);
                for _ in 0..steps {
                    out.push(p);
                    if let Some(goal) = goals_m.get(g) {
                        let goal = Vector2::new(goal[0], goal[1]);
                        if (goal - p).norm() < *switch_radius_m && g + 1 < goals_m.len() {
                            g += 1;
                        }
                        let goal = Vector2::new(goals_m[g][0], goals_m[g][1]);
                        let a = w * w * (goal - p) - 2.0 * w * v;
                        v += dt * a;
                        p += dt * v;
                    }
                }
                Some(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub l1_m: f64,
    pub l2_m: f64,
    pub m1_kg: [f64; 2],
    pub m2_kg: [f64; 2],
    pub m1_true_kg: f64,
    pub m2_true_kg: f64,
}

impl Default for ArmSpec {
    fn default() -> Self {
        Self::from(&PhysicalParams::default())
    }
}

impl From<&PhysicalParams> for ArmSpec {
    fn from(p: &PhysicalParams) -> Self {
        Self {
            l1_m: p.l1,
            l2_m: p.l2,
            m1_kg: [p.m1.lo, p.m1.hi],
            m2_kg: [p.m2.lo, p.m2.hi],
            m1_true_kg: p.m1_true,
            m2_true_kg: p.m2_true,
        }
    }
}

impl ArmSpec {
    pub fn physical(&self) -> Result<PhysicalParams> {
        let p = PhysicalParams {
            l1: self.l1_m,
            l2: self.l2_m,
            m1: MassInterval::new(self.m1_kg[0], self.m1_kg[1]),
            m2: MassInterval::new(self.m2_kg[0], self.m2_kg[1]),
            m1_true: self.m1_true_kg,
            m2_true: self.m2_true_kg,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    pub k_d: [[f64; 2]; 2],
    pub lambda_per_s: [[f64; 2]; 2],
    pub gamma: [[f64; 3]; 3],
    #[serde(default)]
    pub law: AdaptationLaw,
}

impl Default for GainSpec {
    fn default() -> Self {
        let g = AdaptGains::default();
        Self {
            k_d: rows2(&g.k_d),
            lambda_per_s: rows2(&g.lambda),
            gamma: [[g.gamma[(0, 0)], g.gamma[(0, 1)], g.gamma[(0, 2)]], [g.gamma[(1, 0)], g.gamma[(1, 1)], g.gamma[(1, 2)]], [
                g.gamma[(2, 0)],
                g.gamma[(2, 1)],
                g.gamma[(2, 2)],
            ]],
            law: g.law,
        }
    }
}

fn rows2(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn mat2(r: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1])
}

impl GainSpec {
    pub fn gains(&self) -> Result<AdaptGains> {
        AdaptGains::new(mat2(&self.k_d), mat2(&self.lambda_per_s), Matrix3::from_fn(|i, j| self.gamma[i][j]), self.law)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub theta_rad: [f64; 2],
    #[serde(default)]
    pub theta_dot_rad_s: [f64; 2],
}

impl InitialState {
    pub fn state(&self) -> ArmState {
        ArmState::new(
            Vector2::new(self.theta_rad[0], self.theta_rad[1]),
            Vector2::new(self.theta_dot_rad_s[0], self.theta_dot_rad_s[1]),
        )
    }
}

fn default_max_steps() -> usize {
    1000
}
fn default_noise() -> f64 {
    0.01
}
fn default_tau_max() -> f64 {
    20.0
}
fn default_true() -> bool {
    true
}
fn default_goal_radius() -> f64 {
    0.05
}
fn default_segment() -> f64 {
    1.0
}
fn default_resolution() -> usize {
    3
}
fn identity2() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub dt_s: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    pub robot_goals_m: Vec<[f64; 2]>,
    pub human_track: HumanTrack,
    #[serde(default = "default_noise")]
    pub noise_bound_m: f64,
    #[serde(default)]
    pub initial_state: InitialState,
    #[serde(default)]
    pub arm: ArmSpec,
    #[serde(default)]
    pub safety: SafetyConfig,
    #[serde(default)]
    pub gains: GainSpec,
    #[serde(default = "default_tau_max")]
    pub tau_max_nm: f64,
    #[serde(default = "default_true")]
    pub clip_torque: bool,
    #[serde(default = "default_goal_radius")]
    pub goal_radius_m: f64,
    /// Duration of each quintic goal segment.
    #[serde(default = "default_segment")]
    pub segment_duration_s: f64,
    /// Samples per parameter axis for the robust family.
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    /// Metric of the projection baseline.
    #[serde(default = "identity2")]
    pub baseline_q: [[f64; 2]; 2],
    /// Starting estimate; the interval midpoint when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_estimate_xi: Option<[f64; 3]>,
}

/// Command-line overrides.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt_s: Option<f64>,
    pub max_steps: Option<usize>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::from_json(&std::fs::read_to_string(path)?)?;
        if s.name.is_empty() {
            s.name = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(dt) = o.dt_s {
            self.dt_s = dt;
        }
        if let Some(n) = o.max_steps {
            self.max_steps = n;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(Error::Scenario(format!("dt_s must be positive, got {}", self.dt_s)));
        }
        if self.max_steps < 1 {
            return Err(Error::Scenario("max_steps must be at least 1".into()));
        }
        if let HumanTrack::Recorded { positions_m } = &self.human_track {
            if positions_m.len() < self.max_steps {
                return Err(Error::Scenario(format!(
                    "recorded track has {} samples, fewer than max_steps = {}",
                    positions_m.len(),
                    self.max_steps
                )));
            }
        }
        if let HumanTrack::Scripted { goals_m, pursuit_rate_rad_s, .. } = &self.human_track {
            if goals_m.is_empty() || !(*pursuit_rate_rad_s > 0.0) {
                return Err(Error::Scenario("scripted track needs goals and a positive pursuit rate".into()));
            }
        }
        let finite = |p: &[f64; 2]| p.iter().all(|x| x.is_finite());
        if !self.robot_goals_m.iter().all(finite) {
            return Err(Error::Scenario("robot goals must be finite".into()));
        }
        if !(self.noise_bound_m >= 0.0) {
            return Err(Error::Scenario("noise_bound_m must be non-negative".into()));
        }
        if !(self.tau_max_nm > 0.0) {
            return Err(Error::Scenario("tau_max_nm must be positive".into()));
        }
        if !(self.goal_radius_m > 0.0 && self.segment_duration_s > 0.0) {
            return Err(Error::Scenario("goal_radius_m and segment_duration_s must be positive".into()));
        }
        let q = self.q();
        if q != q.transpose() || q.cholesky().is_none() {
            return Err(Error::Scenario("baseline_q must be symmetric positive definite".into()));
        }
        self.safety.validate()?;
        self.gains.gains()?;
        let iv = self.interval()?;
        self.safety.weight(&iv)?;
        if self.grid_resolution < 2 {
            return Err(Error::Scenario("grid_resolution must be at least 2".into()));
        }
        if !(self.initial_state.theta_rad.iter().chain(&self.initial_state.theta_dot_rad_s).all(|x| x.is_finite())) {
            return Err(Error::Scenario("initial state must be finite".into()));
        }
        if let Some(xi) = self.initial_estimate_xi {
            if !iv.contains(&XiVector::from_vector(&Vector3::from(xi))) {
                return Err(Error::Scenario("initial_estimate_xi lies outside the parameter interval".into()));
            }
        }
        Ok(())
    }

    pub fn physical(&self) -> Result<PhysicalParams> {
        self.arm.physical()
    }

    pub fn interval(&self) -> Result<XiInterval> {
        xi_interval(&self.physical()?)
    }

    pub fn q(&self) -> Matrix2<f64> {
        mat2(&self.baseline_q)
    }

    pub fn goals(&self) -> Vec<Vector2<f64>> {
        self.robot_goals_m.iter().map(|g| Vector2::new(g[0], g[1])).collect()
    }

    /// Same scenario driven by a recorded cursor stream.
    pub fn with_recorded_track(&self, positions: &[Vector2<f64>]) -> Self {
        let mut s = self.clone();
        s.human_track = HumanTrack::Recorded { positions_m: positions.iter().map(|p| [p.x, p.y]).collect() };
        s.max_steps = positions.len().max(1);
        s
    }
}
