//! Parameter sweeps: one isolated run per `(value, seed)`, executed in
//! parallel, plus an aggregate table.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::accounting::{round_sig, usd_cents};
use crate::error::RunError;
use crate::output::{sweep_dir, write_atomic, write_outputs};
use crate::run::{simulate, RunOptions};
use crate::scenario::{set_path, Scenario};

pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub waste_fraction: f64,
    pub pflops_hours: f64,
    pub cost_usd: f64,
    pub completed_jobs: u64,
    pub mean_attempts: f64,
    pub preempted_attempts: u64,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Dotted path into the scenario document, see [`crate::scenario::resolve_path`].
    pub path: String,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub scale: f64,
}

/// Builds every scenario variant up front so that a bad path or an invalid
/// value fails before anything runs.
pub fn variants(doc: &Value, spec: &SweepSpec) -> Result<Vec<(f64, Scenario)>, RunError> {
    spec.values
        .iter()
        .map(|&v| {
            let mut d = doc.clone();
            set_path(&mut d, &spec.path, v)?;
            Ok((v, Scenario::from_value(d)?.validated()?))
        })
        .collect()
}

/// Runs the sweep, writing one directory per point under `root` and the
/// aggregate `sweep.csv`. Rows are ordered by value, then seed.
pub fn sweep(doc: &Value, spec: &SweepSpec, root: &Path) -> Result<Vec<SweepRow>, RunError> {
    let variants = variants(doc, spec)?;
    fs::create_dir_all(root).map_err(|e| RunError::io(root, e))?;
    let points: Vec<(f64, &Scenario, u64)> = variants
        .iter()
        .flat_map(|(v, sc)| spec.seeds.iter().map(move |&seed| (*v, sc, seed)))
        .collect();
    let rows = points
        .par_iter()
        .map(|&(value, sc, seed)| {
            let opts = RunOptions {
                seed: Some(seed),
                scale: spec.scale,
                event_log: false,
            };
            let out = simulate(sc, &opts)?;
            write_outputs(&out, &sweep_dir(root, value, seed))?;
            let s = &out.summary;
            Ok(SweepRow {
                value,
                seed,
                waste_fraction: s.total.waste_fraction,
                pflops_hours: round_sig(s.total.pflops_hours, 3),
                cost_usd: usd_cents(s.total_cost_micros),
                completed_jobs: s.total.completed_jobs,
                mean_attempts: s.jobs.mean_attempts_per_completed,
                preempted_attempts: s.jobs.preempted_attempts,
            })
        })
        .collect::<Result<Vec<_>, RunError>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| RunError::io(SWEEP_CSV, e.into_error()))?;
    write_atomic(&root.join(SWEEP_CSV), &bytes)?;
    Ok(rows)
}
