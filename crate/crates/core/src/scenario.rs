//! Scenario files: catalog, provisioning plan, workload and run settings in
//! one JSON document.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ConfigError;
use crate::market::{GpuModel, InstanceType, Provider, RegionMarket};
use crate::provisioner::{Plan, Trigger};
use crate::workload::{FetchModel, RuntimeModel};

/// The calibrated eight-hour multi-cloud burst shipped with the crate.
pub const PAPER_FEB_RUN: &str = include_str!("../scenarios/paper-feb-run.json");

/// Names accepted by [`bundled`].
pub const BUNDLED: &[&str] = &["paper-feb-run"];

pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "paper-feb-run" => Some(PAPER_FEB_RUN),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub gpu_models: Vec<GpuModel>,
    pub instance_types: Vec<InstanceType>,
    pub regions: Vec<RegionMarket>,
}

/// Fixed on-prem capacity present for the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnPremSite {
    pub region: String,
    pub instance_type: String,
    pub count: u64,
}

fn default_epilogue() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    /// Jobs queued at t = 0.
    pub jobs: u64,
    pub runtime: RuntimeModel,
    #[serde(default)]
    pub fetch: FetchModel,
    /// Fixed output-upload delay after the compute phase.
    #[serde(default = "default_epilogue")]
    pub epilogue_s: f64,
}

fn default_period() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub horizon_s: f64,
    #[serde(default = "default_period")]
    pub metric_period_s: f64,
    pub catalog: Catalog,
    #[serde(default)]
    pub onprem: Vec<OnPremSite>,
    pub plan: Plan,
    pub workload: Workload,
}

fn parse_error(e: serde_json::Error) -> ConfigError {
    ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(parse_error)
    }

    pub fn from_value(v: Value) -> Result<Self, ConfigError> {
        serde_json::from_value(v).map_err(parse_error)
    }

    pub fn gpu_model(&self, name: &str) -> Option<&GpuModel> {
        self.catalog.gpu_models.iter().find(|m| m.name == name)
    }

    pub fn instance_type(&self, id: &str) -> Option<&InstanceType> {
        self.catalog.instance_types.iter().find(|t| t.id == id)
    }

    pub fn region(&self, id: &str) -> Option<&RegionMarket> {
        self.catalog.regions.iter().find(|r| r.id == id)
    }

    /// Multiplies capacity caps, fleet targets, on-prem counts and the job
    /// count by `k`, rounding to whole instances.
    pub fn scaled(&self, k: f64) -> Scenario {
        let mut s = self.clone();
        if k == 1.0 {
            return s;
        }
        let scale = |n: u64| (n as f64 * k).round() as u64;
        for r in &mut s.catalog.regions {
            for cap in r.capacity.values_mut() {
                *cap = scale(*cap);
            }
        }
        for stage in &mut s.plan.stages {
            for f in &mut stage.fleets {
                f.target_size = scale(f.target_size);
            }
        }
        for site in &mut s.onprem {
            site.count = scale(site.count);
        }
        s.workload.jobs = (s.workload.jobs as f64 * k).ceil() as u64;
        s
    }

    /// Every referential-integrity and range violation found.
    pub fn validate(&self) -> Vec<String> {
        let mut d = Vec::new();
        if !(self.horizon_s >= 0.0 && self.horizon_s.is_finite()) {
            d.push(format!(
                "horizon_s must be finite and >= 0, got {}",
                self.horizon_s
            ));
        }
        if !(self.metric_period_s > 0.0) {
            d.push(format!(
                "metric_period_s must be > 0, got {}",
                self.metric_period_s
            ));
        }

        let mut models = BTreeSet::new();
        for m in &self.catalog.gpu_models {
            if !models.insert(m.name.as_str()) {
                d.push(format!("duplicate GPU model `{}`", m.name));
            }
            if !(m.peak_tflops32 > 0.0) {
                d.push(format!("GPU model `{}`: peak_tflops32 must be > 0", m.name));
            }
            if m.cores == 0 {
                d.push(format!("GPU model `{}`: cores must be > 0", m.name));
            }
        }

        let mut types: BTreeMap<&str, &InstanceType> = BTreeMap::new();
        for it in &self.catalog.instance_types {
            if types.insert(it.id.as_str(), it).is_some() {
                d.push(format!("duplicate instance type `{}`", it.id));
            }
            if !models.contains(it.gpu_model.as_str()) {
                d.push(format!(
                    "instance type `{}` references undefined GPU model `{}`",
                    it.id, it.gpu_model
                ));
            }
            if !(it.spot_fraction > 0.0 && it.spot_fraction <= 1.0) {
                d.push(format!(
                    "instance type `{}`: spot_fraction {} out of range (0, 1]",
                    it.id, it.spot_fraction
                ));
            }
            if !(it.ondemand_price >= 0.0) {
                d.push(format!(
                    "instance type `{}`: ondemand_price must be >= 0",
                    it.id
                ));
            }
            if it.provider == Provider::OnPrem && it.ondemand_price != 0.0 {
                d.push(format!(
                    "instance type `{}`: on-prem instances must have price 0",
                    it.id
                ));
            }
            if it.gpus_per_instance == 0 {
                d.push(format!(
                    "instance type `{}`: gpus_per_instance must be >= 1",
                    it.id
                ));
            }
        }

        let mut regions = BTreeSet::new();
        for r in &self.catalog.regions {
            if !regions.insert(r.id.as_str()) {
                d.push(format!("duplicate region `{}`", r.id));
            }
            for it in r.capacity.keys() {
                match types.get(it.as_str()) {
                    None => d.push(format!(
                        "region `{}` caps undefined instance type `{}`",
                        r.id, it
                    )),
                    Some(t) if t.provider != r.provider => d.push(format!(
                        "region `{}` ({}) caps instance type `{}` of provider {}",
                        r.id, r.provider, it, t.provider
                    )),
                    _ => {}
                }
            }
            if let Err(e) = r.preemption_rate.validate() {
                d.push(format!("region `{}`: {e}", r.id));
            }
            if !(r.provision_delay.median_s >= 0.0 && r.provision_delay.sigma_log >= 0.0) {
                d.push(format!(
                    "region `{}`: provision delay median and sigma must be >= 0",
                    r.id
                ));
            }
        }

        let region_type = |ctx: &str, region: &str, it: &str, d: &mut Vec<String>| {
            if !regions.contains(region) {
                d.push(format!("{ctx} references undefined region `{region}`"));
            }
            if !types.contains_key(it) {
                d.push(format!("{ctx} references undefined instance type `{it}`"));
            }
            if let (Some(r), Some(t)) = (self.region(region), types.get(it)) {
                if r.provider != t.provider {
                    d.push(format!(
                        "{ctx}: instance type `{it}` ({}) cannot run in region `{region}` ({})",
                        t.provider, r.provider
                    ));
                }
            }
        };

        for site in &self.onprem {
            region_type(
                &format!("on-prem site `{}`", site.region),
                &site.region,
                &site.instance_type,
                &mut d,
            );
        }

        let plan = &self.plan;
        let mut last_at: f64 = 0.0;
        for (si, stage) in plan.stages.iter().enumerate() {
            match &stage.trigger {
                Trigger::At(t) => {
                    if !(*t >= 0.0) {
                        d.push(format!("stage {si}: trigger time must be >= 0"));
                    }
                    last_at = last_at.max(*t);
                }
                Trigger::Plateau(m) => {
                    if !models.contains(m.as_str()) {
                        d.push(format!(
                            "stage {si}: plateau trigger references undefined GPU model `{m}`"
                        ));
                    }
                }
            }
            for (fi, f) in stage.fleets.iter().enumerate() {
                let ctx = format!("stage {si} fleet {fi}");
                if f.regions.is_empty() {
                    d.push(format!("{ctx}: no regions"));
                }
                for rw in &f.regions {
                    region_type(&ctx, &rw.region, &f.instance_type, &mut d);
                    if !(rw.weight >= 0.0) {
                        d.push(format!("{ctx}: negative weight for region `{}`", rw.region));
                    }
                }
                let sum: f64 = f.regions.iter().map(|r| r.weight).sum();
                if !f.regions.is_empty() && (sum - 1.0).abs() > 1e-6 {
                    d.push(format!("{ctx}: region weights sum to {sum}, expected 1"));
                }
            }
        }
        if plan
            .stages
            .iter()
            .any(|s| matches!(s.trigger, Trigger::At(_)))
            && plan.rampdown_at <= last_at
        {
            d.push(format!(
                "rampdown_at {} must be later than every timed stage (latest {})",
                plan.rampdown_at, last_at
            ));
        }
        if self.horizon_s < last_at {
            d.push(format!(
                "horizon {} ends before timed stage at {}",
                self.horizon_s, last_at
            ));
        }
        if !(plan.plateau.window_s > 0.0 && plan.plateau.rel_epsilon > 0.0) {
            d.push("plateau window_s and rel_epsilon must be > 0".to_string());
        }
        if !(plan.retry_interval_s > 0.0) {
            d.push("retry_interval_s must be > 0".to_string());
        }

        let w = &self.workload;
        let used_models: BTreeSet<&str> = self
            .catalog
            .instance_types
            .iter()
            .map(|t| t.gpu_model.as_str())
            .collect();
        for m in used_models {
            let covered = match &w.runtime.photon_work {
                Some(pw) => pw.ratings.contains_key(m),
                None => w.runtime.per_model.contains_key(m),
            };
            if !covered {
                d.push(format!("workload has no runtime model for GPU model `{m}`"));
            }
        }
        for (m, spec) in &w.runtime.per_model {
            if !(spec.median_s > 0.0) {
                d.push(format!("runtime `{m}`: median_s must be > 0"));
            }
            if !(spec.cap_s >= spec.median_s) {
                d.push(format!("runtime `{m}`: cap_s must be >= median_s"));
            }
            if !(spec.sigma_log >= 0.0) {
                d.push(format!("runtime `{m}`: sigma_log must be >= 0"));
            }
        }
        if let Some(pw) = &w.runtime.photon_work {
            if !(pw.photons_per_job > 0.0) || pw.ratings.values().any(|r| !(*r > 0.0)) {
                d.push("photon_work: photons_per_job and ratings must be > 0".to_string());
            }
        }
        let f = &w.fetch;
        if !(f.file_mb > 0.0
            && f.server_gbps_cap > 0.0
            && f.per_client_mbps_cap > 0.0
            && f.overhead_s > 0.0)
        {
            d.push("fetch model parameters must all be > 0".to_string());
        }
        if !(w.epilogue_s >= 0.0) {
            d.push("epilogue_s must be >= 0".to_string());
        }
        d
    }

    pub fn validated(self) -> Result<Self, ConfigError> {
        let d = self.validate();
        if d.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError::Invalid(d))
        }
    }
}

/// Parses and validates scenario text; parse failures are reported before
/// semantic checks.
pub fn validate_text(text: &str) -> Result<Vec<String>, ConfigError> {
    Ok(Scenario::from_json(text)?.validate())
}

fn matches_in<'v>(v: &'v mut Value, parts: &[&str], out: &mut Vec<&'v mut Value>) {
    let Some((head, rest)) = parts.split_first() else {
        out.push(v);
        return;
    };
    match v {
        Value::Object(map) => {
            if *head == "*" {
                for child in map.values_mut() {
                    matches_in(child, rest, out);
                }
            } else if let Some(child) = map.get_mut(*head) {
                matches_in(child, rest, out);
            }
        }
        Value::Array(items) => {
            if *head == "*" {
                for child in items.iter_mut() {
                    matches_in(child, rest, out);
                }
            } else if let Ok(i) = head.parse::<usize>() {
                if let Some(child) = items.get_mut(i) {
                    matches_in(child, rest, out);
                }
            } else {
                // select array elements whose `id`/`name` equals the segment
                for child in items.iter_mut() {
                    let hit = ["id", "name"]
                        .iter()
                        .any(|k| child.get(k).and_then(Value::as_str) == Some(*head));
                    if hit {
                        matches_in(child, rest, out);
                    }
                }
            }
        }
        _ => {}
    }
}

/// Numeric leaves selected by a dotted path. Segments may be object keys,
/// array indices, `*`, or the `id`/`name` of an array element, for example
/// `catalog.regions.*.preemption_rate` or `catalog.regions.aws-us-east-1.preemption_rate`.
pub fn resolve_path<'v>(doc: &'v mut Value, path: &str) -> Result<Vec<&'v mut Value>, ConfigError> {
    let parts: Vec<&str> = path.trim_start_matches('/').split(['.', '/']).collect();
    let mut out = Vec::new();
    matches_in(doc, &parts, &mut out);
    if out.is_empty() || out.iter().any(|v| !v.is_number()) {
        return Err(ConfigError::UnresolvedPath(path.to_string()));
    }
    Ok(out)
}

pub fn set_path(doc: &mut Value, path: &str, value: f64) -> Result<usize, ConfigError> {
    let leaves = resolve_path(doc, path)?;
    let n = leaves.len();
    let num = serde_json::Number::from_f64(value)
        .ok_or_else(|| ConfigError::UnresolvedPath(path.to_string()))?;
    for leaf in leaves {
        *leaf = Value::Number(num.clone());
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feb_run() -> Scenario {
        Scenario::from_json(PAPER_FEB_RUN).unwrap()
    }

    #[test]
    fn bundled_scenario_is_valid() {
        assert_eq!(feb_run().validate(), Vec::<String>::new());
    }

    #[test]
    fn undefined_region_is_named() {
        let mut s = feb_run();
        s.plan.stages[0].fleets[0].regions[0].region = "mars-north-1".into();
        let d = s.validate();
        assert_eq!(d.len(), 1, "{d:?}");
        assert!(d[0].contains("mars-north-1"));
    }

    #[test]
    fn spot_fraction_out_of_range() {
        let mut s = feb_run();
        s.catalog.instance_types[0].spot_fraction = 1.5;
        let d = s.validate();
        assert_eq!(d.len(), 1);
        assert!(d[0].contains("spot_fraction"));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let mut s = feb_run();
        s.plan.stages[0].fleets[0].regions[0].weight += 0.5;
        assert!(s.validate().iter().any(|m| m.contains("weights sum")));
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = Scenario::from_json("{\n  \"name\": \"x\",\n  oops\n}").unwrap_err();
        match err {
            ConfigError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scaling_multiplies_counts() {
        let s = feb_run();
        let k = s.scaled(0.1);
        let cap = |sc: &Scenario| -> u64 {
            sc.catalog
                .regions
                .iter()
                .flat_map(|r| r.capacity.values())
                .sum()
        };
        let ratio = cap(&k) as f64 / cap(&s) as f64;
        assert!((ratio - 0.1).abs() < 0.01, "{ratio}");
        assert!(k.workload.jobs * 10 >= s.workload.jobs);
    }

    #[test]
    fn path_resolution() {
        let mut v: Value = serde_json::from_str(PAPER_FEB_RUN).unwrap();
        let n = set_path(&mut v, "catalog.regions.*.preemption_rate", 0.07).unwrap();
        assert_eq!(n, feb_run().catalog.regions.len());
        let s = Scenario::from_value(v.clone()).unwrap();
        assert!(s
            .catalog
            .regions
            .iter()
            .all(|r| r.preemption_rate == crate::market::PreemptionRate::Constant(0.07)));
        assert!(set_path(&mut v, "catalog.regions.*.nope", 1.0).is_err());
        assert!(set_path(&mut v, "catalog.regions", 1.0).is_err());
        assert_eq!(set_path(&mut v, "/horizon_s", 100.0).unwrap(), 1);
        let id = feb_run().catalog.regions[0].id.clone();
        assert_eq!(
            set_path(
                &mut v,
                &format!("catalog.regions.{id}.preemption_rate"),
                0.2
            )
            .unwrap(),
            1
        );
    }
}
