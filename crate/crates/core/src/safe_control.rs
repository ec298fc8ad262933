//! Robust safe control over a sampled parameter family.
//!
//! The robust safe set is `{u : lf_i + lg_i . u <= -eta(t) for every sample i}`.
//! When `lf_max + eta(t) > 0` the controller picks the sample direction
//! `lg*` that maximizes `min_i lg* . lg_i / |lg*|` and returns
//! `u = -((lf_max + eta(t)) / alpha*) lg*` with `alpha* = min_i lg* . lg_i`.
//! Drift uncertainty is handled by taking the worst `lf` over the same
//! samples, independently of the choice of `lg*`.

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::arm::{Torque, XiInterval, XiVector};
use crate::error::{Error, Result};
use crate::safety::{LieDerivatives, Margin};

/// Tensor grid over the parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyGrid {
    pub samples: Vec<XiVector>,
}

impl FamilyGrid {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Grid with `resolution` points per axis, including both ends. Degenerate
/// axes contribute one value, so a point interval yields one sample.
pub fn build_family(interval: &XiInterval, resolution: usize) -> Result<FamilyGrid> {
    if resolution < 2 {
        return Err(Error::Config(format!("grid resolution must be at least 2, got {resolution}")));
    }
    let (lo, hi) = (interval.lo.to_vector(), interval.hi.to_vector());
    let axis = |k: usize| -> Vec<f64> {
        if lo[k] == hi[k] {
            vec![lo[k]]
        } else {
            (0..resolution)
                .map(|i| {
                    if i + 1 == resolution {
                        hi[k]
                    } else {
                        lo[k] + (hi[k] - lo[k]) * i as f64 / (resolution - 1) as f64
                    }
                })
                .collect()
        }
    };
    let (a, b, c) = (axis(0), axis(1), axis(2));
    let mut samples = Vec::with_capacity(a.len() * b.len() * c.len());
    for &x in &a {
        for &y in &b {
            for &z in &c {
                samples.push(XiVector::from_vector(&Vector3::new(x, y, z)));
            }
        }
    }
    Ok(FamilyGrid { samples })
}

/// Alignment certificate of the sampled control directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCert {
    /// Smallest pairwise cosine between nonzero `lg` rows.
    pub alpha: f64,
    /// Smallest `|lg|`.
    pub beta: f64,
    pub feasible: bool,
}

pub fn feasibility(lie: &[LieDerivatives]) -> FeasibilityCert {
    let norms: Vec<f64> = lie.iter().map(|l| l.lg.norm()).collect();
    let beta = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let beta = if beta.is_finite() { beta } else { 0.0 };
    let mut alpha = f64::INFINITY;
    for (i, a) in lie.iter().enumerate() {
        for (j, b) in lie.iter().enumerate().skip(i) {
            if norms[i] > 0.0 && norms[j] > 0.0 {
                alpha = alpha.min((a.lg.dot(&b.lg) / (norms[i] * norms[j])).clamp(-1.0, 1.0));
            }
        }
    }
    if !alpha.is_finite() {
        alpha = 0.0;
    }
    FeasibilityCert { alpha, beta, feasible: alpha > 0.0 && beta > 0.0 }
}

/// `max_i (lf_i + lg_i . u) + eta(t)`; non-positive inside the robust set.
pub fn robust_residual(u: &Torque, lie: &[LieDerivatives], margin: Margin) -> f64 {
    let worst = lie.iter().map(|l| l.lf + l.lg.dot(u)).fold(f64::NEG_INFINITY, f64::max);
    worst + margin.value()
}

pub fn robust_set_contains(u: &Torque, lie: &[LieDerivatives], margin: Margin) -> bool {
    match margin {
        Margin::Inactive => true,
        Margin::Active(eta) => lie.iter().all(|l| l.lf + l.lg.dot(u) <= -eta),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GStar {
    pub index: usize,
    pub alpha_star: f64,
}

/// Exhaustive maximin over the samples. Zero rows are never candidates.
pub fn solve_g_star(lie: &[LieDerivatives]) -> Result<GStar> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (j, cand) in lie.iter().enumerate() {
        let norm = cand.lg.norm();
        if !(norm > 0.0) {
            continue;
        }
        let alpha = lie.iter().map(|l| cand.lg.dot(&l.lg)).fold(f64::INFINITY, f64::min);
        let score = alpha / norm;
        if best.is_none_or(|(_, s, _)| score > s) {
            best = Some((j, score, alpha));
        }
    }
    best.map(|(index, _, alpha_star)| GStar { index, alpha_star })
        .ok_or_else(|| Error::Infeasible("every sampled control direction is zero".into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RssaSolution {
    pub u: Torque,
    pub g_star: Option<GStar>,
}

pub fn rssa_control(lie: &[LieDerivatives], margin: Margin) -> Result<RssaSolution> {
    let Margin::Active(eta) = margin else {
        return Ok(RssaSolution { u: Vector2::zeros(), g_star: None });
    };
    let lf_max = lie.iter().map(|l| l.lf).fold(f64::NEG_INFINITY, f64::max);
    let need = lf_max + eta;
    if need <= 0.0 {
        return Ok(RssaSolution { u: Vector2::zeros(), g_star: None });
    }
    let gs = solve_g_star(lie)?;
    if !(gs.alpha_star > 0.0) {
        return Err(Error::Infeasible(format!("alpha* = {} is not positive", gs.alpha_star)));
    }
    Ok(RssaSolution { u: -(need / gs.alpha_star) * lie[gs.index].lg, g_star: Some(gs) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineStatus {
    /// The reference already satisfies the constraint.
    Passed,
    Projected,
    /// The constraint is violated and `lg` is zero: nothing to project onto.
    NoDirection,
}

/// `argmin (u - u_r)' Q (u - u_r)` subject to `lg . u <= -eta(t) - lf`, in
/// closed form.
pub fn baseline_safe_control(u_r: &Torque, lie: &LieDerivatives, margin: Margin, q: &Matrix2<f64>) -> Result<(Torque, BaselineStatus)> {
    let Margin::Active(eta) = margin else {
        return Ok((*u_r, BaselineStatus::Passed));
    };
    let bound = -eta - lie.lf;
    let excess = lie.lg.dot(u_r) - bound;
    if excess <= 0.0 {
        return Ok((*u_r, BaselineStatus::Passed));
    }
    if lie.lg.norm_squared() == 0.0 {
        return Ok((*u_r, BaselineStatus::NoDirection));
    }
    let q_inv = q.try_inverse().ok_or_else(|| Error::Config("Q must be invertible".into()))?;
    let dir = q_inv * lie.lg;
    Ok((u_r - (excess / lie.lg.dot(&dir)) * dir, BaselineStatus::Projected))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SafeMode {
    ReferencePassed,
    RssaOverride,
    BaselineOverride,
    InfeasibleFallback,
}

impl SafeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SafeMode::ReferencePassed => "reference-passed",
            SafeMode::RssaOverride => "rssa-override",
            SafeMode::BaselineOverride => "baseline-override",
            SafeMode::InfeasibleFallback => "infeasible-fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeDecision {
    pub u: Torque,
    pub mode: SafeMode,
    pub g_star_index: Option<usize>,
    pub alpha_star: Option<f64>,
    pub cert: Option<FeasibilityCert>,
}

impl SafeDecision {
    fn passed(u_r: &Torque) -> Self {
        Self { u: *u_r, mode: SafeMode::ReferencePassed, g_star_index: None, alpha_star: None, cert: None }
    }
}

/// One pass of the robust safe set algorithm.
///
/// `composite` is `phi + phi_alpha`. The reference passes through unless the
/// composite index is positive and the reference leaves the robust set. An
/// infeasible certificate falls back to projecting the reference against the
/// most violated sample.
pub fn rssa_step(composite: f64, margin: Margin, lie: &[LieDerivatives], u_r: &Torque, q: &Matrix2<f64>) -> Result<SafeDecision> {
    if !(composite > 0.0) || robust_set_contains(u_r, lie, margin) {
        return Ok(SafeDecision::passed(u_r));
    }
    let cert = feasibility(lie);
    if cert.feasible {
        if let Ok(sol) = rssa_control(lie, margin) {
            return Ok(SafeDecision {
                u: sol.u,
                mode: SafeMode::RssaOverride,
                g_star_index: sol.g_star.map(|g| g.index),
                alpha_star: sol.g_star.map(|g| g.alpha_star),
                cert: Some(cert),
            });
        }
    }
    let worst = lie
        .iter()
        .enumerate()
        .map(|(i, l)| (i, l.lf + l.lg.dot(u_r)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
        .0;
    let (u, _) = baseline_safe_control(u_r, &lie[worst], margin, q)?;
    Ok(SafeDecision { u, mode: SafeMode::InfeasibleFallback, g_star_index: None, alpha_star: None, cert: Some(cert) })
}

/// Projection baseline with a single parameter estimate.
pub fn baseline_step(composite: f64, margin: Margin, lie_hat: &LieDerivatives, u_r: &Torque, q: &Matrix2<f64>) -> Result<SafeDecision> {
    if !(composite > 0.0) {
        return Ok(SafeDecision::passed(u_r));
    }
    let (u, status) = baseline_safe_control(u_r, lie_hat, margin, q)?;
    let mode = match status {
        BaselineStatus::Passed => SafeMode::ReferencePassed,
        BaselineStatus::Projected => SafeMode::BaselineOverride,
        BaselineStatus::NoDirection => SafeMode::InfeasibleFallback,
    };
    Ok(SafeDecision { u, mode, g_star_index: None, alpha_star: None, cert: None })
}

/// Control from the feasibility argument: `u = -c lg*` with
/// `c = (lf_max + eta) / (alpha beta |lg*|)`. Always robust-feasible when the
/// certificate holds, and never shorter than the maximin solution.
pub fn feasibility_witness(lie: &[LieDerivatives], margin: Margin, g_star: usize) -> Result<Torque> {
    let cert = feasibility(lie);
    if !cert.feasible {
        return Err(Error::Infeasible(format!("alpha = {}, beta = {}", cert.alpha, cert.beta)));
    }
    let lf_max = lie.iter().map(|l| l.lf).fold(f64::NEG_INFINITY, f64::max);
    let need = lf_max + margin.value();
    if need <= 0.0 {
        return Ok(Vector2::zeros());
    }
    let lg = lie[g_star].lg;
    Ok(-(need / (cert.alpha * cert.beta * lg.norm())) * lg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::{xi_interval, PhysicalParams};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn l(lf: f64, g1: f64, g2: f64) -> LieDerivatives {
        LieDerivatives { lf, lg: Vector2::new(g1, g2) }
    }

    #[test]
    fn family_sizes() {
        let iv = xi_interval(&PhysicalParams::default()).unwrap();
        assert_eq!(build_family(&XiInterval::point(iv.lo), 3).unwrap().len(), 1);
        let g2 = build_family(&iv, 2).unwrap();
        assert_eq!(g2.len(), 8);
        let g3 = build_family(&iv, 3).unwrap();
        assert_eq!(g3.len(), 27);
        assert!(g3.samples.contains(&iv.midpoint()));
        for corner in &g2.samples {
            assert!(g3.samples.contains(corner));
        }
        assert!(g3.samples.iter().all(|s| iv.contains(s)));
        assert!(build_family(&iv, 1).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let one = feasibility(&[l(0.0, 3.0, 4.0)]);
        assert_eq!(one.alpha, 1.0);
        assert_eq!(one.beta, 5.0);
        assert!(one.feasible);
        let opposed = feasibility(&[l(0.0, 1.0, 2.0), l(0.0, -1.0, -2.0)]);
        assert_relative_eq!(opposed.alpha, -1.0, epsilon = 1e-12);
        assert!(!opposed.feasible);
        let sixty = feasibility(&[l(0.0, 1.0, 0.0), l(0.0, 0.5, 3f64.sqrt() / 2.0)]);
        assert_relative_eq!(sixty.alpha, 0.5, epsilon = 1e-12);
        assert_relative_eq!(sixty.beta, 1.0, epsilon = 1e-12);
        let zero = feasibility(&[l(0.0, 1.0, 0.0), l(0.0, 0.0, 0.0)]);
        assert_eq!(zero.beta, 0.0);
        assert!(!zero.feasible);
    }

    #[test]
    fn membership_examples() {
        let fam = [l(0.0, 1.0, 0.0)];
        assert!(robust_set_contains(&Vector2::new(100.0, 0.0), &fam, Margin::Inactive));
        assert!(robust_set_contains(&Vector2::new(-2.0, 0.0), &fam, Margin::Active(1.0)));
        assert!(!robust_set_contains(&Vector2::zeros(), &fam, Margin::Active(1.0)));
    }

    #[test]
    fn g_star_examples() {
        let one = solve_g_star(&[l(0.0, 3.0, 4.0)]).unwrap();
        assert_eq!(one.index, 0);
        assert_relative_eq!(one.alpha_star, 25.0);
        let pair = solve_g_star(&[l(0.0, 1.0, 0.0), l(0.0, 2.0, 0.0)]).unwrap();
        assert_eq!(pair.index, 0);
        assert_eq!(pair.alpha_star, 1.0);
        assert!(solve_g_star(&[l(0.0, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn g_star_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let fam: Vec<_> = (0..27).map(|_| l(0.0, rng.gen_range(0.5..1.5), rng.gen_range(-0.3..0.3))).collect();
            let gs = solve_g_star(&fam).unwrap();
            let mut best = (0, f64::NEG_INFINITY);
            for j in 0..fam.len() {
                let mut m = f64::INFINITY;
                for i in 0..fam.len() {
                    m = m.min(fam[j].lg.dot(&fam[i].lg) / fam[j].lg.norm());
                }
                if m > best.1 {
                    best = (j, m);
                }
            }
            assert_eq!(gs.index, best.0);
        }
    }

    #[test]
    fn rssa_examples() {
        let fam = [l(-2.0, 1.0, 0.0), l(-1.5, 2.0, 0.0)];
        assert_eq!(rssa_control(&fam, Margin::Active(1.0)).unwrap().u, Vector2::zeros());

        let fam = [l(0.0, 1.0, 0.0), l(0.0, 2.0, 0.0)];
        let sol = rssa_control(&fam, Margin::Active(1.0)).unwrap();
        assert_relative_eq!(sol.u, Vector2::new(-1.0, 0.0));
        assert!(robust_set_contains(&sol.u, &fam, Margin::Active(1.0)));
        // brute-force minimal norm over a fine grid
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            for j in 0..=400 {
                let u = Vector2::new(-2.0 + 4.0 * i as f64 / 400.0, -2.0 + 4.0 * j as f64 / 400.0);
                if robust_set_contains(&u, &fam, Margin::Active(1.0)) {
                    best = best.min(u.norm());
                }
            }
        }
        assert_relative_eq!(best, 1.0, epsilon = 1e-12);
        assert!(rssa_control(&[l(1.0, 1.0, 0.0), l(1.0, -1.0, 0.0)], Margin::Active(1.0)).is_err());
    }

    fn random_feasible_family(rng: &mut ChaCha8Rng, n: usize) -> Vec<LieDerivatives> {
        loop {
            let ang: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let spread = rng.gen_range(0.0..1.2);
            let fam: Vec<_> = (0..n)
                .map(|_| {
                    let a = ang + rng.gen_range(-spread..=spread) * 0.5;
                    let r = rng.gen_range(0.05..3.0);
                    l(rng.gen_range(-2.0..2.0), r * a.cos(), r * a.sin())
                })
                .collect();
            if feasibility(&fam).feasible {
                return fam;
            }
        }
    }

    #[test]
    fn rssa_is_sound_and_beats_witness() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..2000 {
            let fam = random_feasible_family(&mut rng, 27);
            let m = Margin::Active(rng.gen_range(-0.5..2.0));
            let sol = rssa_control(&fam, m).unwrap();
            assert!(robust_residual(&sol.u, &fam, m) <= 1e-9);
            let gs = sol.g_star.map(|g| g.index).unwrap_or(0);
            let w = feasibility_witness(&fam, m, gs).unwrap();
            assert!(robust_residual(&w, &fam, m) <= 1e-9);
            assert!(sol.u.norm() <= w.norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rssa_scales_with_requirement() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let fam = random_feasible_family(&mut rng, 8);
            let eta = 1.0;
            let base = rssa_control(&fam, Margin::Active(eta)).unwrap().u;
            let lam = rng.gen_range(0.1..10.0);
            let scaled: Vec<_> = fam.iter().map(|x| LieDerivatives { lf: lam * x.lf, lg: x.lg }).collect();
            let u = rssa_control(&scaled, Margin::Active(lam * eta)).unwrap().u;
            assert_relative_eq!(u, lam * base, max_relative = 1e-12);
        }
    }

    #[test]
    fn maximin_direction_is_not_minimal_for_wide_families() {
        // The optimum of min |u| points along the min-norm element of the
        // convex hull of the rows, here (1, 0), which is not a sample.
        let fam = [l(0.0, 1.0, 0.5), l(0.0, 1.0, -0.5)];
        let sol = rssa_control(&fam, Margin::Active(1.0)).unwrap();
        assert!(robust_set_contains(&Vector2::new(-1.0, 0.0), &fam, Margin::Active(1.0)));
        assert_relative_eq!(sol.u.norm(), 1.25f64.sqrt() / 0.75, epsilon = 1e-12);
    }

    #[test]
    fn baseline_examples() {
        let q = Matrix2::identity();
        let lie = l(0.0, 1.0, 0.0);
        let safe = Vector2::new(-3.0, 1.0);
        assert_eq!(baseline_safe_control(&safe, &lie, Margin::Active(1.0), &q).unwrap(), (safe, BaselineStatus::Passed));
        let (u, st) = baseline_safe_control(&Vector2::zeros(), &lie, Margin::Active(1.0), &q).unwrap();
        assert_eq!(st, BaselineStatus::Projected);
        assert_relative_eq!(u, Vector2::new(-1.0, 0.0));
        let q4 = Matrix2::new(4.0, 0.0, 0.0, 1.0);
        let (u, _) = baseline_safe_control(&Vector2::zeros(), &l(0.0, 1.0, 1.0), Margin::Active(1.0), &q4).unwrap();
        assert_relative_eq!(u, Vector2::new(-0.2, -0.8), epsilon = 1e-14);
        let (u, st) = baseline_safe_control(&Vector2::zeros(), &l(1.0, 0.0, 0.0), Margin::Active(1.0), &q).unwrap();
        assert_eq!(st, BaselineStatus::NoDirection);
        assert_eq!(u, Vector2::zeros());
    }

    #[test]
    fn baseline_matches_dense_sampling() {
        // oracle: best Q-distance among dense samples of the half-space
        let q = Matrix2::new(4.0, 0.0, 0.0, 1.0);
        let lie = l(0.0, 1.0, 1.0);
        let (u, _) = baseline_safe_control(&Vector2::zeros(), &lie, Margin::Active(1.0), &q).unwrap();
        let cost = |v: &Vector2<f64>| v.dot(&(q * v));
        let mut best = f64::INFINITY;
        for i in 0..=600 {
            for j in 0..=600 {
                let v = Vector2::new(-1.5 + 3.0 * i as f64 / 600.0, -1.5 + 3.0 * j as f64 / 600.0);
                if lie.lg.dot(&v) <= -1.0 {
                    best = best.min(cost(&v));
                }
            }
        }
        assert!(cost(&u) <= best + 1e-12);
        assert!(best - cost(&u) < 1e-2);
    }

    #[test]
    fn baseline_residual_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let lie = l(rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let q = Matrix2::new(rng.gen_range(0.5..4.0), 0.0, 0.0, rng.gen_range(0.5..4.0));
            let u_r = Vector2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
            let eta = rng.gen_range(0.0..1.0);
            let (u, st) = baseline_safe_control(&u_r, &lie, Margin::Active(eta), &q).unwrap();
            assert!(lie.lf + lie.lg.dot(&u) + eta <= 1e-9);
            if st == BaselineStatus::Projected {
                assert!((lie.lf + lie.lg.dot(&u) + eta).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn algorithm_branches() {
        let q = Matrix2::identity();
        let fam = [l(0.0, 1.0, 0.0), l(0.0, 2.0, 0.0)];
        let u_r = Vector2::new(0.5, 0.3);
        let d = rssa_step(-0.01, Margin::Inactive, &fam, &u_r, &q).unwrap();
        assert_eq!(d.mode, SafeMode::ReferencePassed);
        assert_eq!(d.u, u_r);
        let safe_ref = Vector2::new(-2.0, 0.3);
        let d = rssa_step(0.02, Margin::Active(1.0), &fam, &safe_ref, &q).unwrap();
        assert_eq!(d.mode, SafeMode::ReferencePassed);
        assert_eq!(d.u, safe_ref);
        let d = rssa_step(0.02, Margin::Active(1.0), &fam, &u_r, &q).unwrap();
        assert_eq!(d.mode, SafeMode::RssaOverride);
        assert_relative_eq!(d.u, Vector2::new(-1.0, 0.0));
        assert_eq!(d.g_star_index, Some(0));

        let bad = [l(0.0, 1.0, 0.0), l(0.0, -1.0, 0.1)];
        let d = rssa_step(0.02, Margin::Active(1.0), &bad, &u_r, &q).unwrap();
        assert_eq!(d.mode, SafeMode::InfeasibleFallback);
        assert!(!d.cert.unwrap().feasible);
    }

    #[test]
    fn baseline_branches() {
        let q = Matrix2::identity();
        let lie = l(0.0, 1.0, 0.0);
        let u_r = Vector2::new(0.5, 0.3);
        assert_eq!(baseline_step(-1.0, Margin::Inactive, &lie, &u_r, &q).unwrap().mode, SafeMode::ReferencePassed);
        let d = baseline_step(0.1, Margin::Active(1.0), &lie, &u_r, &q).unwrap();
        assert_eq!(d.mode, SafeMode::BaselineOverride);
        assert_relative_eq!(d.u, Vector2::new(-1.0, 0.3));
    }
}
