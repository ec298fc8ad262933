//! Scenario directories crossed with methods, run in parallel.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::Result;

use super::metrics::{csv_row, CSV_HEADER};
use super::scenario::{Method, Overrides, Scenario};
use super::trial::{run_trial, TrialRecord};

/// Sorted `*.json` files in `dir`.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

pub struct BatchRow {
    pub trial: String,
    pub method: Method,
    pub outcome: Result<TrialRecord>,
}

/// Every scenario under every method in `methods`. Rows come back in input
/// order regardless of scheduling; a failing row does not stop the rest.
pub fn run_batch(scenarios: &[(String, Result<Scenario>)], methods: &[Method]) -> Vec<BatchRow> {
    let jobs: Vec<(usize, Method)> =
        (0..scenarios.len()).flat_map(|i| methods.iter().map(move |m| (i, *m))).collect();
    jobs.into_par_iter()
        .map(|(i, method)| {
            let (name, sc) = &scenarios[i];
            let outcome = match sc {
                Ok(s) => run_trial(s, method),
                Err(e) => Err(crate::Error::Scenario(e.to_string())),
            };
            if let Err(e) = &outcome {
                log::warn!("{name}/{method}: {e}");
            }
            BatchRow { trial: name.clone(), method, outcome }
        })
        .collect()
}

pub fn load_dir(dir: &Path, overrides: &Overrides) -> Result<Vec<(String, Result<Scenario>)>> {
    Ok(scenario_files(dir)?
        .into_iter()
        .map(|path| {
            let name = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let sc = Scenario::load(&path).and_then(|mut s| {
                s.apply(overrides)?;
                Ok(s)
            });
            (name, sc)
        })
        .collect())
}

pub fn render_csv(rows: &[BatchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&csv_row(&r.trial, r.method.as_str(), r.outcome.as_ref().ok().map(|t| &t.metrics)));
        out.push('\n');
    }
    out
}

/// Run a directory of scenarios under all methods and write the table.
pub fn batch_to_csv(dir: &Path, out: &Path, overrides: &Overrides) -> Result<Vec<BatchRow>> {
    let scenarios = load_dir(dir, overrides)?;
    let rows = run_batch(&scenarios, &Method::ALL);
    std::fs::write(out, render_csv(&rows))?;
    Ok(rows)
}
