//! Scenarios, trials, metrics, batch runs and the live session server.

pub mod batch;
pub mod feasibility;
pub mod metrics;
pub mod scenario;
pub mod serve;
pub mod trial;

pub use batch::{batch_to_csv, render_csv, run_batch, BatchRow};
pub use feasibility::{sweep_feasibility, FeasibilityReport, SweepGrid};
pub use metrics::{violation_count, TrialMetrics, CSV_HEADER};
pub use scenario::{HumanTrack, Method, Overrides, Scenario};
pub use trial::{run_trial, TickLog, Trial, TrialRecord};

/// Scenarios shipped with the crate, as `(name, json)`.
pub const BUNDLED: [(&str, &str); 3] = [
    ("trial1", include_str!("../../scenarios/trial1.json")),
    ("trial2", include_str!("../../scenarios/trial2.json")),
    ("trial3", include_str!("../../scenarios/trial3.json")),
];

pub fn bundled() -> crate::Result<Vec<Scenario>> {
    BUNDLED
        .iter()
        .map(|(name, text)| {
            let mut s = Scenario::from_json(text)?;
            if s.name.is_empty() {
                s.name = name.to_string();
            }
            Ok(s)
        })
        .collect()
}
