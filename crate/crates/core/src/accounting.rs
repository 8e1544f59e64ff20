//! Billing ledger, sampled metrics, and the derived compute/cost/waste
//! figures.
//!
//! Money is kept in integer micro-dollars so that per-model subtotals sum to
//! the grand total exactly. Billing is per second: an instance alive for
//! `d` seconds is charged for `ceil(d)` seconds at its hourly price.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::AccountingError;
use crate::market::{GeoGroup, Provider};

pub const MICROS_PER_USD: i64 = 1_000_000;

/// Cost of `billed_s` seconds at `price_per_hour`, in micro-dollars.
pub fn cost_micros(price_per_hour: f64, billed_s: u64) -> i64 {
    (price_per_hour * MICROS_PER_USD as f64 * billed_s as f64 / 3600.0).round() as i64
}

/// Seconds billed for an uptime of `d` seconds.
pub fn billed_seconds(d: f64) -> u64 {
    // guard against 7200.000000001 style float noise
    let r = d.round();
    if (d - r).abs() < 1e-6 {
        r.max(0.0) as u64
    } else {
        d.ceil().max(0.0) as u64
    }
}

pub fn micros_to_usd(m: i64) -> f64 {
    m as f64 / MICROS_PER_USD as f64
}

/// Rounds a micro-dollar amount to whole cents, returned in dollars.
pub fn usd_cents(m: i64) -> f64 {
    let cents = (m as f64 / 10_000.0).round();
    cents / 100.0
}

/// Rounds to `digits` significant figures.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - mag);
    (x * scale).round() / scale
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BillingRecord {
    pub instance: u64,
    pub t_start: f64,
    pub t_end: f64,
    pub price_per_hour: f64,
    pub billed_s: u64,
    pub cost_micros: i64,
}

impl BillingRecord {
    pub fn cost_usd(&self) -> f64 {
        micros_to_usd(self.cost_micros)
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenRecord {
    t_start: f64,
    price_per_hour: f64,
}

/// Open and closed billing records keyed by instance id.
#[derive(Debug, Default)]
pub struct BillingLedger {
    open: BTreeMap<u64, OpenRecord>,
    closed: BTreeMap<u64, BillingRecord>,
}

impl BillingLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open(&mut self, instance: u64, t_start: f64, price_per_hour: f64) {
        self.open.insert(
            instance,
            OpenRecord {
                t_start,
                price_per_hour,
            },
        );
    }

    /// Closes the record at `t_end`, billing the actual uptime.
    pub fn close_billing(
        &mut self,
        instance: u64,
        t_end: f64,
    ) -> Result<BillingRecord, AccountingError> {
        if self.closed.contains_key(&instance) {
            return Err(AccountingError::DoubleClose(instance));
        }
        let rec = self
            .open
            .remove(&instance)
            .ok_or(AccountingError::NotOpen(instance))?;
        let billed_s = billed_seconds(t_end - rec.t_start);
        let closed = BillingRecord {
            instance,
            t_start: rec.t_start,
            t_end,
            price_per_hour: rec.price_per_hour,
            billed_s,
            cost_micros: cost_micros(rec.price_per_hour, billed_s),
        };
        self.closed.insert(instance, closed.clone());
        Ok(closed)
    }

    /// Cost accrued by an instance up to `t`, whether open or closed.
    pub fn accrued_micros(&self, instance: u64, t: f64) -> i64 {
        if let Some(c) = self.closed.get(&instance) {
            return c.cost_micros;
        }
        self.open.get(&instance).map_or(0, |o| {
            cost_micros(o.price_per_hour, billed_seconds((t - o.t_start).max(0.0)))
        })
    }

    pub fn open_instances(&self) -> impl Iterator<Item = u64> + '_ {
        self.open.keys().copied()
    }

    pub fn records(&self) -> impl Iterator<Item = &BillingRecord> {
        self.closed.values()
    }

    pub fn total_micros(&self) -> i64 {
        self.closed.values().map(|r| r.cost_micros).sum()
    }
}

/// Series key: one row per sample per `(gpu_model, provider, geo_group)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupKey {
    pub gpu_model: String,
    pub provider: Provider,
    pub geo_group: GeoGroup,
    /// Peak TFLOPS32 of one instance (all of its GPUs).
    pub tflops_per_instance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub n_instances: Vec<u64>,
    pub active_fetches: Vec<u64>,
    /// Cumulative billed cost per group up to `t`.
    pub cost_micros: Vec<i64>,
    pub queue_depth: u64,
    pub throughput_gbps: f64,
}

impl Sample {
    pub fn pflops(&self, groups: &[GroupKey], g: usize) -> f64 {
        self.n_instances[g] as f64 * groups[g].tflops_per_instance / 1000.0
    }
}

/// Fixed-period samples of the pool.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsSeries {
    pub period_s: f64,
    pub groups: Vec<GroupKey>,
    pub samples: Vec<Sample>,
}

impl MetricsSeries {
    /// `(t, PFLOP32s)` summed over the groups selected by `keep`.
    pub fn pflops_series(&self, keep: impl Fn(&GroupKey) -> bool) -> Vec<(f64, f64)> {
        let idx: Vec<usize> = (0..self.groups.len())
            .filter(|&g| keep(&self.groups[g]))
            .collect();
        self.samples
            .iter()
            .map(|s| (s.t, idx.iter().map(|&g| s.pflops(&self.groups, g)).sum()))
            .collect()
    }

    /// `(t, instance count)` summed over the selected groups.
    pub fn count_series(&self, keep: impl Fn(&GroupKey) -> bool) -> Vec<(f64, f64)> {
        let idx: Vec<usize> = (0..self.groups.len())
            .filter(|&g| keep(&self.groups[g]))
            .collect();
        self.samples
            .iter()
            .map(|s| (s.t, idx.iter().map(|&g| s.n_instances[g] as f64).sum()))
            .collect()
    }
}

/// Trapezoidal integral of `(seconds, value)` samples, in value-hours.
pub fn trapezoid_hours(points: &[(f64, f64)]) -> f64 {
    // + 0.0 turns the empty sum's -0.0 into 0.0
    (points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum::<f64>()
        + 0.0)
        / 3600.0
}

/// Time-sampled instantaneous PFLOP32s integrated to PFLOP32-hours.
pub fn integrated_pflops(series: &[(f64, f64)]) -> f64 {
    trapezoid_hours(series)
}

/// `(wasted + idle) / billed` GPU-seconds. The flag is set when the
/// denominator is zero and the fraction is undefined (reported as 0).
pub fn waste_fraction(wasted_s: f64, idle_s: f64, billed_s: f64) -> (f64, bool) {
    if billed_s <= 0.0 {
        return (0.0, true);
    }
    (((wasted_s + idle_s) / billed_s).clamp(0.0, 1.0), false)
}

/// Sustained level of a compute series: the longest contiguous run of
/// samples at or above 90% of the peak. Returns `(mean level, run hours)`.
pub fn plateau(series: &[(f64, f64)]) -> (f64, f64) {
    let peak = series.iter().map(|p| p.1).fold(0.0, f64::max);
    if peak <= 0.0 {
        return (0.0, 0.0);
    }
    let floor = 0.9 * peak;
    let mut best: Option<(usize, usize)> = None;
    let mut start: Option<usize> = None;
    for (i, p) in series.iter().enumerate() {
        if p.1 >= floor {
            let s = *start.get_or_insert(i);
            let longer =
                best.is_none_or(|(bs, be)| series[i].0 - series[s].0 > series[be].0 - series[bs].0);
            if longer {
                best = Some((s, i));
            }
        } else {
            start = None;
        }
    }
    let (s, e) = best.expect("peak sample qualifies");
    let run = &series[s..=e];
    let mean = run.iter().map(|p| p.1).sum::<f64>() / run.len() as f64;
    (mean, (series[e].0 - series[s].0) / 3600.0)
}

/// Inputs to the pool-relative effectiveness report, one per GPU model.
#[derive(Debug, Clone)]
pub struct ModelTotals {
    pub gpu_model: String,
    pub pflops_hours: f64,
    pub cost_micros: i64,
    /// Whether any instance type with this model carries a price.
    pub billed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Effectiveness {
    pub gpu_model: String,
    pub compute_share: f64,
    pub cost_share: f64,
    /// `compute_share / cost_share`; absent when the cost share is zero.
    pub effectiveness: Option<f64>,
    pub usd_per_pflops_hour: Option<f64>,
    /// A billed model that accrued no cost.
    pub flagged: bool,
}

pub fn cost_effectiveness(models: &[ModelTotals]) -> Vec<Effectiveness> {
    let total_compute: f64 = models.iter().map(|m| m.pflops_hours).sum();
    let total_cost: i64 = models.iter().map(|m| m.cost_micros).sum();
    models
        .iter()
        .map(|m| {
            let compute_share = if total_compute > 0.0 {
                m.pflops_hours / total_compute
            } else {
                0.0
            };
            let cost_share = if total_cost > 0 {
                m.cost_micros as f64 / total_cost as f64
            } else {
                0.0
            };
            let effectiveness = (cost_share > 0.0).then(|| compute_share / cost_share);
            let usd_per_pflops_hour = (m.pflops_hours > 0.0 && m.cost_micros > 0)
                .then(|| micros_to_usd(m.cost_micros) / m.pflops_hours);
            Effectiveness {
                gpu_model: m.gpu_model.clone(),
                compute_share,
                cost_share,
                effectiveness,
                usd_per_pflops_hour,
                flagged: m.billed && cost_share == 0.0,
            }
        })
        .collect()
}
