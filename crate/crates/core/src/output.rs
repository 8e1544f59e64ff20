//! Run output files. Every file is written to a temporary sibling and
//! renamed into place, so readers never see a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::accounting::{round_sig, usd_cents, MetricsSeries};
use crate::error::RunError;
use crate::run::{simulate, RunOptions, RunOutput, RunSummary};
use crate::scenario::Scenario;

pub const TIMESERIES_CSV: &str = "timeseries.csv";
pub const JOBS_CSV: &str = "jobs.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const EVENT_LOG: &str = "events.log";

pub const TIMESERIES_HEADER: [&str; 9] = [
    "t_sec",
    "gpu_model",
    "provider",
    "geo_group",
    "n_instances",
    "pflops32",
    "active_fetches",
    "queue_depth",
    "cost_usd",
];

/// Exact decimal rendering of a micro-dollar amount.
pub fn format_micros(m: i64) -> String {
    let sign = if m < 0 { "-" } else { "" };
    let a = m.unsigned_abs();
    format!("{sign}{}.{:06}", a / 1_000_000, a % 1_000_000)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let tmp = {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".tmp");
        path.with_file_name(name)
    };
    let mut f = fs::File::create(&tmp).map_err(|e| RunError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| RunError::io(&tmp, e))?;
    f.sync_all().map_err(|e| RunError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| RunError::io(path, e))
}

pub fn timeseries_csv(series: &MetricsSeries) -> Result<Vec<u8>, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TIMESERIES_HEADER)?;
    for s in &series.samples {
        for (g, key) in series.groups.iter().enumerate() {
            w.write_record([
                s.t.to_string(),
                key.gpu_model.clone(),
                key.provider.to_string(),
                key.geo_group.to_string(),
                s.n_instances[g].to_string(),
                s.pflops(&series.groups, g).to_string(),
                s.active_fetches[g].to_string(),
                s.queue_depth.to_string(),
                format_micros(s.cost_micros[g]),
            ])?;
        }
    }
    w.into_inner()
        .map_err(|e| RunError::io("timeseries.csv", e.into_error()))
}

pub fn jobs_csv(out: &RunOutput) -> Result<Vec<u8>, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for j in &out.jobs {
        w.serialize(j)?;
    }
    w.into_inner()
        .map_err(|e| RunError::io("jobs.csv", e.into_error()))
}

/// Summary with PF·h at three significant figures and money in cents.
pub fn rounded(summary: &RunSummary) -> RunSummary {
    let mut s = summary.clone();
    let pf = |x: f64| round_sig(x, 3);
    s.total.pflops_hours = pf(s.total.pflops_hours);
    s.total.cost_usd = usd_cents(summary.total_cost_micros);
    s.total.plateau_pflops = pf(s.total.plateau_pflops);
    s.total.peak_pflops = pf(s.total.peak_pflops);
    s.total.usd_per_pflops_hour = s
        .total
        .usd_per_pflops_hour
        .map(|x| (x * 100.0).round() / 100.0);
    for (m, micros) in s.models.iter_mut().zip(&summary.model_cost_micros) {
        m.pflops_hours = pf(m.pflops_hours);
        m.cost_usd = usd_cents(*micros);
        m.plateau_pflops = pf(m.plateau_pflops);
        m.usd_per_pflops_hour = m.usd_per_pflops_hour.map(|x| (x * 100.0).round() / 100.0);
    }
    s
}

pub fn summary_json(summary: &RunSummary) -> Result<Vec<u8>, RunError> {
    let mut bytes = serde_json::to_vec_pretty(&rounded(summary))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes all output files of a finished run into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    write_atomic(&dir.join(TIMESERIES_CSV), &timeseries_csv(&out.series)?)?;
    write_atomic(&dir.join(JOBS_CSV), &jobs_csv(out)?)?;
    write_atomic(&dir.join(SUMMARY_JSON), &summary_json(&out.summary)?)?;
    if let Some(log) = &out.event_log {
        let mut text = log.join("\n");
        text.push('\n');
        write_atomic(&dir.join(EVENT_LOG), text.as_bytes())?;
    }
    Ok(())
}

/// Simulates and writes outputs; returns the full-precision output.
pub fn run_scenario(
    scenario: &Scenario,
    opts: &RunOptions,
    dir: &Path,
) -> Result<RunOutput, RunError> {
    let out = simulate(scenario, opts)?;
    write_outputs(&out, dir)?;
    Ok(out)
}

/// One-paragraph text report of a summary.
pub fn render_summary(s: &RunSummary) -> String {
    let r = rounded(s);
    let mut text = format!(
        "{} seed={} scale={}\n  compute  {} PF32·h, plateau {} PF32s for {:.1} h\n  cost     ${:.2} ({} jobs completed, waste {:.1}%)\n",
        r.scenario,
        r.seed,
        r.scale,
        r.total.pflops_hours,
        r.total.plateau_pflops,
        r.total.plateau_hours,
        r.total.cost_usd,
        r.total.completed_jobs,
        100.0 * r.total.waste_fraction,
    );
    for m in &r.models {
        let eff = m
            .effectiveness
            .map_or("-".to_string(), |e| format!("{e:.2}"));
        text.push_str(&format!(
            "  {:<11} {:>9} PF32·h  ${:>10.2}  {:>7} jobs  effectiveness {}\n",
            m.gpu_model, m.pflops_hours, m.cost_usd, m.completed_jobs, eff
        ));
    }
    for w in &r.warnings {
        text.push_str(&format!("  warning: {w}\n"));
    }
    text
}

/// Output directory of one sweep point.
pub fn sweep_dir(root: &Path, value: f64, seed: u64) -> PathBuf {
    root.join(format!("value-{value}_seed-{seed}"))
}
