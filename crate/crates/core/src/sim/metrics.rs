//! Trial metrics and the fixed-format results table.

use serde::{Deserialize, Serialize};

/// Number of down-crossings of `d_min`. A series that starts below counts
/// once for the initial breach.
pub fn violation_count(d: &[f64], d_min: f64) -> usize {
    let mut prev_safe = true;
    let mut n = 0;
    for &x in d {
        let safe = x >= d_min;
        if prev_safe && !safe {
            n += 1;
        }
        prev_safe = safe;
    }
    n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub goals_reached: usize,
    pub violations: usize,
    /// `None` when the scene has no obstacle.
    pub min_distance: Option<f64>,
    pub avg_distance: Option<f64>,
    pub clipped_ticks: usize,
    pub infeasible_ticks: usize,
}

impl TrialMetrics {
    pub fn from_distances(d: &[f64], d_min: f64, goals_reached: usize, clipped_ticks: usize, infeasible_ticks: usize) -> Self {
        let (min_distance, avg_distance) = if d.is_empty() {
            (None, None)
        } else {
            (
                Some(d.iter().copied().fold(f64::INFINITY, f64::min)),
                Some(d.iter().sum::<f64>() / d.len() as f64),
            )
        };
        Self { goals_reached, violations: violation_count(d, d_min), min_distance, avg_distance, clipped_ticks, infeasible_ticks }
    }
}

pub const CSV_HEADER: &str = "trial,method,GOAL,VIOL,DIST,AVG_DIST,clipped_ticks,infeasible_ticks";

/// Nine significant digits in positional notation.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (8 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One results row; `metrics` is `None` for a trial that could not run.
pub fn csv_row(trial: &str, method: &str, metrics: Option<&TrialMetrics>) -> String {
    let opt = |x: Option<f64>| x.map(sig9).unwrap_or_default();
    match metrics {
        Some(m) => format!(
            "{},{},{},{},{},{},{},{}",
            csv_field(trial),
            csv_field(method),
            m.goals_reached,
            m.violations,
            opt(m.min_distance),
            opt(m.avg_distance),
            m.clipped_ticks,
            m.infeasible_ticks
        ),
        None => format!("{},{},,,,,,", csv_field(trial), csv_field(method)),
    }
}
