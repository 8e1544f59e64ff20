//! One simulation run: markets, provisioner, pool, workload and billing
//! driven by a single event queue, reduced to a [`RunOutput`].

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::accounting::{
    cost_effectiveness, integrated_pflops, plateau, waste_fraction, BillingLedger, GroupKey,
    MetricsSeries, ModelTotals, Sample,
};
use crate::error::{ConfigError, RunError};
use crate::market::{spot_price, Capacity, GeoGroup, Provider};
use crate::pool::{AttemptOutcome, JobState, NewJob, Pool};
use crate::provisioner::{rampdown, InstanceSlots, RampdownPolicy, StageTracker, Trigger};
use crate::rng::RngStream;
use crate::scenario::Scenario;
use crate::sim::{Event, EventQueue, SimTime};
use crate::workload::FetchTracker;

/// Fetches shorter than this count as "fast" in the summary.
pub const FAST_FETCH_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEvent {
    InstanceLaunched { instance: usize },
    InstancePreempted { instance: usize },
    InstanceDeprovisioned { instance: usize },
    JobFetchDone { job: usize, attempt: usize },
    JobCompleted { job: usize, attempt: usize },
    StageTrigger { stage: usize },
    MetricsSample,
    RampdownStart,
    FleetRetry,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Overrides the scenario's root seed.
    pub seed: Option<u64>,
    /// Instance-count and job-count multiplier.
    pub scale: f64,
    pub event_log: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: None,
            scale: 1.0,
            event_log: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InstState {
    Provisioning,
    Up,
    Down,
}

#[derive(Debug, Clone)]
struct Instance {
    itype: usize,
    region: usize,
    group: usize,
    fleet: usize,
    state: InstState,
    slots: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Fleet {
    itype: usize,
    regions: Vec<usize>,
    targets: Vec<u64>,
    /// Provisioning plus up, per region.
    alive: Vec<u64>,
    active: bool,
    /// On-prem baseline: untouched by rampdown.
    persistent: bool,
}

/// Per-job row of `jobs.csv`. Placement fields describe the last attempt.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobRecord {
    pub job_id: u64,
    pub gpu_model: String,
    pub provider: String,
    pub region: String,
    pub submit_s: f64,
    pub fetch_s: f64,
    pub runtime_s: f64,
    pub n_attempts: usize,
    pub wasted_s: f64,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub gpu_model: String,
    pub pflops_hours: f64,
    pub cost_usd: f64,
    pub completed_jobs: u64,
    pub billed_gpu_hours: f64,
    pub wasted_gpu_hours: f64,
    pub idle_gpu_hours: f64,
    pub waste_fraction: f64,
    pub usd_per_pflops_hour: Option<f64>,
    pub plateau_pflops: f64,
    pub plateau_hours: f64,
    pub compute_share: f64,
    pub cost_share: f64,
    pub effectiveness: Option<f64>,
    pub cost_share_flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TotalSummary {
    pub pflops_hours: f64,
    pub cost_usd: f64,
    pub completed_jobs: u64,
    pub billed_gpu_hours: f64,
    pub wasted_gpu_hours: f64,
    pub idle_gpu_hours: f64,
    pub waste_fraction: f64,
    pub usd_per_pflops_hour: Option<f64>,
    pub plateau_pflops: f64,
    pub plateau_hours: f64,
    pub peak_pflops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FetchSummary {
    pub fetches: u64,
    pub fast_fraction: f64,
    pub max_fetch_s: f64,
    pub peak_active: u64,
    pub peak_sampled_gbps: f64,
    pub mean_sampled_gbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobCounts {
    pub submitted: u64,
    pub completed: u64,
    pub attempts: u64,
    pub preempted_attempts: u64,
    pub killed_attempts: u64,
    pub mean_attempts_per_completed: f64,
}

/// Everything a run reports, at full precision. Rounding for display
/// happens when the summary file is written.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub scale: f64,
    pub horizon_s: f64,
    pub total: TotalSummary,
    pub models: Vec<ModelSummary>,
    pub jobs: JobCounts,
    pub fetch: FetchSummary,
    /// Fire time of each plan stage, `None` if it never fired.
    pub stage_fired_s: Vec<Option<f64>>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub total_cost_micros: i64,
    #[serde(skip)]
    pub model_cost_micros: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub series: MetricsSeries,
    pub jobs: Vec<JobRecord>,
    pub event_log: Option<Vec<String>>,
}

struct World<'s> {
    sc: &'s Scenario,
    horizon: f64,
    // catalog lookups
    itype_model: Vec<usize>,
    itype_price: Vec<f64>,
    itype_gpus: Vec<usize>,
    capacity: BTreeMap<(usize, usize), Capacity>,
    provision_rng: Vec<RngStream>,
    preempt_rng: Vec<RngStream>,
    runtime_rng: Vec<RngStream>,
    // state
    pool: Pool,
    instances: Vec<Instance>,
    fleets: Vec<Fleet>,
    stage_fleets: Vec<Vec<usize>>,
    tracker: StageTracker,
    ledger: BillingLedger,
    fetch: FetchTracker,
    fetching: BTreeMap<usize, usize>,
    fetch_times: Vec<f64>,
    up: BTreeSet<usize>,
    retry_pending: bool,
    rampdown_done: bool,
    // metrics
    groups: Vec<GroupKey>,
    group_index: BTreeMap<(usize, usize), usize>,
    group_up: Vec<u64>,
    group_fetching: Vec<u64>,
    group_closed_micros: Vec<i64>,
    model_counts: Vec<Vec<(f64, f64)>>,
    samples: Vec<Sample>,
    warnings: Vec<String>,
}

fn at(t: f64) -> Result<SimTime, String> {
    SimTime::new(t).map_err(|e| e.to_string())
}

impl<'s> World<'s> {
    fn new(sc: &'s Scenario, seed: u64) -> Result<Self, ConfigError> {
        let cat = &sc.catalog;
        let model_idx = |name: &str| {
            cat.gpu_models
                .iter()
                .position(|m| m.name == name)
                .ok_or_else(|| ConfigError::UnknownGpuModel(name.to_string()))
        };
        let itype_idx = |id: &str| {
            cat.instance_types
                .iter()
                .position(|t| t.id == id)
                .ok_or_else(|| ConfigError::Invalid(vec![format!("unknown instance type `{id}`")]))
        };
        let region_idx = |id: &str| {
            cat.regions
                .iter()
                .position(|r| r.id == id)
                .ok_or_else(|| ConfigError::Invalid(vec![format!("unknown region `{id}`")]))
        };

        let mut itype_model = Vec::new();
        for it in &cat.instance_types {
            itype_model.push(model_idx(&it.gpu_model)?);
        }
        let itype_price = cat.instance_types.iter().map(spot_price).collect();
        let itype_gpus = cat
            .instance_types
            .iter()
            .map(|it| it.gpus_per_instance.max(1) as usize)
            .collect();

        let mut capacity = BTreeMap::new();
        for (r, region) in cat.regions.iter().enumerate() {
            for (it_id, cap) in &region.capacity {
                capacity.insert((r, itype_idx(it_id)?), Capacity::new(*cap));
            }
        }

        // fleets: on-prem sites first, then stage fleets in plan order
        let mut fleets = Vec::new();
        for site in &sc.onprem {
            fleets.push(Fleet {
                itype: itype_idx(&site.instance_type)?,
                regions: vec![region_idx(&site.region)?],
                targets: vec![site.count],
                alive: vec![0],
                active: true,
                persistent: true,
            });
        }
        let mut stage_fleets = Vec::new();
        for stage in &sc.plan.stages {
            let mut ids = Vec::new();
            for spec in &stage.fleets {
                let regions = spec
                    .regions
                    .iter()
                    .map(|w| region_idx(&w.region))
                    .collect::<Result<Vec<_>, _>>()?;
                ids.push(fleets.len());
                fleets.push(Fleet {
                    itype: itype_idx(&spec.instance_type)?,
                    alive: vec![0; regions.len()],
                    regions,
                    targets: spec.regional_targets(),
                    active: false,
                    persistent: false,
                });
            }
            stage_fleets.push(ids);
        }
        if let Some(Trigger::Plateau(m)) = sc
            .plan
            .stages
            .iter()
            .map(|s| &s.trigger)
            .find(|t| matches!(t, Trigger::Plateau(m) if model_idx(m).is_err()))
        {
            return Err(ConfigError::UnknownGpuModel(m.clone()));
        }

        // one series group per (model, provider, geo) reachable by some fleet
        let mut keys = BTreeSet::new();
        for f in &fleets {
            for &r in &f.regions {
                let reg = &cat.regions[r];
                keys.insert((
                    cat.gpu_models[itype_model[f.itype]].name.clone(),
                    reg.provider,
                    reg.geo_group,
                ));
            }
        }
        let keys: Vec<(String, Provider, GeoGroup)> = keys.into_iter().collect();
        let mut groups = Vec::new();
        for (name, provider, geo) in &keys {
            groups.push(GroupKey {
                gpu_model: name.clone(),
                provider: *provider,
                geo_group: *geo,
                tflops_per_instance: 0.0,
            });
        }
        let mut group_index = BTreeMap::new();
        for f in &fleets {
            for &r in &f.regions {
                let reg = &cat.regions[r];
                let m = &cat.gpu_models[itype_model[f.itype]];
                let g = keys
                    .iter()
                    .position(|k| k.0 == m.name && k.1 == reg.provider && k.2 == reg.geo_group)
                    .expect("key inserted above");
                group_index.insert((f.itype, r), g);
                let per_instance =
                    m.peak_tflops32 * cat.instance_types[f.itype].gpus_per_instance.max(1) as f64;
                let existing = groups[g].tflops_per_instance;
                if existing != 0.0 && existing != per_instance {
                    return Err(ConfigError::Invalid(vec![format!(
                        "instance types of {} in {:?}/{:?} differ in GPUs per instance",
                        m.name, reg.provider, reg.geo_group
                    )]));
                }
                groups[g].tflops_per_instance = per_instance;
            }
        }

        let n_groups = groups.len();
        Ok(Self {
            sc,
            horizon: sc.horizon_s,
            itype_model,
            itype_price,
            itype_gpus,
            capacity,
            provision_rng: cat
                .regions
                .iter()
                .map(|r| RngStream::new(seed, format!("provision/{}", r.id)))
                .collect(),
            preempt_rng: cat
                .regions
                .iter()
                .map(|r| RngStream::new(seed, format!("preempt/{}", r.id)))
                .collect(),
            runtime_rng: cat
                .gpu_models
                .iter()
                .map(|m| RngStream::new(seed, format!("runtime/{}", m.name)))
                .collect(),
            pool: Pool::new(),
            instances: Vec::new(),
            fleets,
            stage_fleets,
            tracker: StageTracker::new(&sc.plan),
            ledger: BillingLedger::new(),
            fetch: FetchTracker::default(),
            fetching: BTreeMap::new(),
            fetch_times: Vec::new(),
            up: BTreeSet::new(),
            retry_pending: false,
            rampdown_done: false,
            groups,
            group_index,
            group_up: vec![0; n_groups],
            group_fetching: vec![0; n_groups],
            group_closed_micros: vec![0; n_groups],
            model_counts: vec![Vec::new(); cat.gpu_models.len()],
            samples: Vec::new(),
            warnings: Vec::new(),
        })
    }

    fn handle(&mut self, q: &mut EventQueue<SimEvent>, ev: Event<SimEvent>) -> Result<(), String> {
        let t = ev.fire_at.seconds();
        match ev.payload {
            SimEvent::InstanceLaunched { instance } => self.on_launched(q, instance, t)?,
            SimEvent::InstancePreempted { instance } => {
                if self.instances[instance].state == InstState::Up {
                    self.take_down(instance, t, AttemptOutcome::Preempted)?;
                    self.schedule_retry(q, t)?;
                }
            }
            SimEvent::InstanceDeprovisioned { instance } => {
                if self.instances[instance].state == InstState::Up {
                    self.take_down(instance, t, AttemptOutcome::KilledRampdown)?;
                }
            }
            SimEvent::JobFetchDone { job, attempt } => self.on_fetch_done(q, job, attempt, t)?,
            SimEvent::JobCompleted { job, attempt } => self.on_job_completed(q, job, attempt, t)?,
            SimEvent::StageTrigger { stage } => {
                if !self.rampdown_done && self.tracker.fire(stage, t) {
                    self.activate_stage(q, stage, t)?;
                }
            }
            SimEvent::MetricsSample => self.on_sample(q, t)?,
            SimEvent::RampdownStart => self.on_rampdown(t)?,
            SimEvent::FleetRetry => {
                self.retry_pending = false;
                let mut short = false;
                for f in 0..self.fleets.len() {
                    if self.fleets[f].active {
                        short |= self.top_up(q, f, t)?;
                    }
                }
                if short {
                    self.schedule_retry(q, t)?;
                }
            }
        }
        self.dispatch(q, t)
    }

    fn schedule_retry(&mut self, q: &mut EventQueue<SimEvent>, t: f64) -> Result<(), String> {
        let next = t + self.sc.plan.retry_interval_s;
        if !self.retry_pending && !self.rampdown_done && next <= self.horizon {
            self.retry_pending = true;
            q.schedule(at(next)?, SimEvent::FleetRetry)
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    fn activate_stage(
        &mut self,
        q: &mut EventQueue<SimEvent>,
        stage: usize,
        t: f64,
    ) -> Result<(), String> {
        log::debug!("stage {stage} fired at {t}");
        let mut short = false;
        for f in self.stage_fleets[stage].clone() {
            self.fleets[f].active = true;
            short |= self.top_up(q, f, t)?;
        }
        if short {
            self.schedule_retry(q, t)?;
        }
        Ok(())
    }

    /// Requests launches to bring a fleet to its regional targets. Returns
    /// true if some region is still short after capacity is granted.
    fn top_up(&mut self, q: &mut EventQueue<SimEvent>, f: usize, t: f64) -> Result<bool, String> {
        let mut short = false;
        for i in 0..self.fleets[f].regions.len() {
            let fleet = &self.fleets[f];
            let (region, itype) = (fleet.regions[i], fleet.itype);
            let want = fleet.targets[i].saturating_sub(fleet.alive[i]);
            if want == 0 {
                continue;
            }
            let granted = self
                .capacity
                .get_mut(&(region, itype))
                .map_or(0, |c| c.grant(want));
            short |= granted < want;
            self.fleets[f].alive[i] += granted;
            for _ in 0..granted {
                let delay = self.sc.catalog.regions[region]
                    .provision_delay
                    .sample(&mut self.provision_rng[region]);
                let id = self.instances.len();
                self.instances.push(Instance {
                    itype,
                    region,
                    group: self.group_index[&(itype, region)],
                    fleet: f,
                    state: InstState::Provisioning,
                    slots: Vec::new(),
                });
                let when = t + delay;
                if when <= self.horizon {
                    q.schedule(at(when)?, SimEvent::InstanceLaunched { instance: id })
                        .map_err(|e| e.to_string())?;
                }
            }
        }
        Ok(short)
    }

    fn on_launched(
        &mut self,
        q: &mut EventQueue<SimEvent>,
        id: usize,
        t: f64,
    ) -> Result<(), String> {
        if self.instances[id].state != InstState::Provisioning {
            return Ok(());
        }
        let (itype, region, group) = {
            let i = &self.instances[id];
            (i.itype, i.region, i.group)
        };
        let model = self.itype_model[itype];
        let slots: Vec<usize> = (0..self.itype_gpus[itype])
            .map(|_| self.pool.add_slot(id as u64, model, t))
            .collect();
        let inst = &mut self.instances[id];
        inst.state = InstState::Up;
        inst.slots = slots;
        self.up.insert(id);
        self.group_up[group] += 1;
        self.ledger.open(id as u64, t, self.itype_price[itype]);
        let rate = &self.sc.catalog.regions[region].preemption_rate;
        if let Some(tp) = rate.next_preemption(t, &mut self.preempt_rng[region]) {
            if tp <= self.horizon {
                q.schedule(at(tp)?, SimEvent::InstancePreempted { instance: id })
                    .map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }

    /// Ends every slot of an up instance, closes its billing and returns
    /// its capacity.
    fn take_down(&mut self, id: usize, t: f64, outcome: AttemptOutcome) -> Result<(), String> {
        for s in self.instances[id].slots.clone() {
            let closed = match outcome {
                AttemptOutcome::Preempted => self.pool.on_preempt(s, t),
                _ => self.pool.kill(s, t),
            }
            .map_err(|e| e.to_string())?;
            if let Some(c) = closed {
                self.forget_fetch(c.job);
            }
        }
        self.release(id, t)
    }

    fn release(&mut self, id: usize, t: f64) -> Result<(), String> {
        let inst = &mut self.instances[id];
        let was_up = inst.state == InstState::Up;
        inst.state = InstState::Down;
        let (itype, region, group, f) = (inst.itype, inst.region, inst.group, inst.fleet);
        if was_up {
            self.up.remove(&id);
            self.group_up[group] -= 1;
            let rec = self
                .ledger
                .close_billing(id as u64, t)
                .map_err(|e| e.to_string())?;
            self.group_closed_micros[group] += rec.cost_micros;
        }
        if let Some(c) = self.capacity.get_mut(&(region, itype)) {
            c.release(1);
        }
        let fleet = &mut self.fleets[f];
        let i = fleet
            .regions
            .iter()
            .position(|&r| r == region)
            .expect("fleet region");
        fleet.alive[i] -= 1;
        Ok(())
    }

    fn forget_fetch(&mut self, job: usize) {
        if let Some(g) = self.fetching.remove(&job) {
            self.fetch.finish();
            self.group_fetching[g] -= 1;
        }
    }

    fn dispatch(&mut self, q: &mut EventQueue<SimEvent>, t: f64) -> Result<(), String> {
        for a in self.pool.match_jobs(t) {
            let inst = self.pool.slot(a.slot).instance as usize;
            let g = self.instances[inst].group;
            let fetch_s = self.fetch.start(&self.sc.workload.fetch);
            self.fetch_times.push(fetch_s);
            self.pool.set_fetch_time(a.job, fetch_s);
            self.fetching.insert(a.job, g);
            self.group_fetching[g] += 1;
            let when = t + fetch_s;
            if when <= self.horizon {
                q.schedule(
                    at(when)?,
                    SimEvent::JobFetchDone {
                        job: a.job,
                        attempt: a.attempt,
                    },
                )
                .map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }

    fn on_fetch_done(
        &mut self,
        q: &mut EventQueue<SimEvent>,
        job: usize,
        attempt: usize,
        t: f64,
    ) -> Result<(), String> {
        if !self.pool.is_live(job, attempt) {
            return Ok(());
        }
        self.forget_fetch(job);
        let slot = self.pool.job(job).attempts[attempt].slot;
        let model = self.pool.slot(slot).gpu_model;
        let name = &self.sc.catalog.gpu_models[model].name;
        let runtime = self
            .sc
            .workload
            .runtime
            .sample_runtime(name, &mut self.runtime_rng[model])
            .map_err(|e| e.to_string())?;
        self.pool.start_running(job, runtime);
        let when = t + runtime + self.sc.workload.epilogue_s;
        if when <= self.horizon {
            q.schedule(at(when)?, SimEvent::JobCompleted { job, attempt })
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    fn on_job_completed(
        &mut self,
        q: &mut EventQueue<SimEvent>,
        job: usize,
        attempt: usize,
        t: f64,
    ) -> Result<(), String> {
        if !self.pool.is_live(job, attempt) {
            return Ok(());
        }
        let slot = self.pool.job(job).attempts[attempt].slot;
        let closed = self.pool.on_complete(slot, t).map_err(|e| e.to_string())?;
        if closed.slot_terminated {
            let inst = self.pool.slot(slot).instance as usize;
            let all_done = self.instances[inst]
                .slots
                .iter()
                .all(|&s| self.pool.slot(s).terminated.is_some());
            if all_done {
                q.schedule(at(t)?, SimEvent::InstanceDeprovisioned { instance: inst })
                    .map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }

    fn on_rampdown(&mut self, t: f64) -> Result<(), String> {
        self.rampdown_done = true;
        let mut targets = Vec::new();
        for id in 0..self.instances.len() {
            let inst = &self.instances[id];
            if self.fleets[inst.fleet].persistent {
                continue;
            }
            match inst.state {
                InstState::Provisioning => self.release(id, t)?,
                InstState::Up => targets.push(InstanceSlots {
                    instance: id as u64,
                    slots: inst.slots.clone(),
                }),
                InstState::Down => {}
            }
        }
        for f in &mut self.fleets {
            f.active &= f.persistent;
        }
        let policy = self.sc.plan.rampdown_policy;
        let out = rampdown(&mut self.pool, &targets, policy, t);
        log::debug!(
            "rampdown at {t}: {} terminated, {} draining, {:.0} GPU-s killed",
            out.terminate_now.len(),
            out.draining.len(),
            out.wasted_s
        );
        if policy == RampdownPolicy::ImmediateKill {
            // killed attempts may have been mid-fetch
            let stale: Vec<usize> = self
                .fetching
                .keys()
                .copied()
                .filter(|&j| self.pool.job(j).state != JobState::Fetching)
                .collect();
            for j in stale {
                self.forget_fetch(j);
            }
        }
        for id in out.terminate_now {
            self.release(id as usize, t)?;
        }
        Ok(())
    }

    fn on_sample(&mut self, q: &mut EventQueue<SimEvent>, t: f64) -> Result<(), String> {
        let mut cost = self.group_closed_micros.clone();
        for &id in &self.up {
            cost[self.instances[id].group] += self.ledger.accrued_micros(id as u64, t);
        }
        self.samples.push(Sample {
            t,
            n_instances: self.group_up.clone(),
            active_fetches: self.group_fetching.clone(),
            cost_micros: cost,
            queue_depth: self.pool.queue_depth() as u64,
            throughput_gbps: self.fetch.throughput_gbps(&self.sc.workload.fetch),
        });
        let models = &self.sc.catalog.gpu_models;
        for (m, series) in self.model_counts.iter_mut().enumerate() {
            let n: u64 = self
                .groups
                .iter()
                .zip(&self.group_up)
                .filter(|(g, _)| g.gpu_model == models[m].name)
                .map(|(_, n)| *n)
                .sum();
            series.push((t, n as f64));
        }

        if !self.rampdown_done {
            let counts = &self.model_counts;
            let fired = self.tracker.evaluate(&self.sc.plan, t, |name| {
                models
                    .iter()
                    .position(|m| m.name == name)
                    .map_or(&[][..], |i| counts[i].as_slice())
            });
            for stage in fired {
                self.activate_stage(q, stage, t)?;
            }
        }

        if t < self.horizon {
            let next = (t + self.sc.metric_period_s).min(self.horizon);
            q.schedule(at(next)?, SimEvent::MetricsSample)
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    /// Closes everything still open at the horizon.
    fn finalize(&mut self) -> Result<(), String> {
        let t = self.horizon;
        let open: Vec<usize> = self.up.iter().copied().collect();
        for id in open {
            self.take_down(id, t, AttemptOutcome::KilledRampdown)?;
        }
        for id in 0..self.instances.len() {
            if self.instances[id].state == InstState::Provisioning {
                self.release(id, t)?;
            }
        }
        Ok(())
    }

    fn reduce(self, seed: u64, scale: f64) -> (RunSummary, MetricsSeries, Vec<JobRecord>) {
        let sc = self.sc;
        let cat = &sc.catalog;
        let n_models = cat.gpu_models.len();
        let series = MetricsSeries {
            period_s: sc.metric_period_s,
            groups: self.groups,
            samples: self.samples,
        };

        let mut billed = vec![0.0; n_models];
        let mut wasted = vec![0.0; n_models];
        let mut idle = vec![0.0; n_models];
        for s in self.pool.slots() {
            let end = s.terminated.unwrap_or(self.horizon);
            billed[s.gpu_model] += end - s.created;
            wasted[s.gpu_model] += s.wasted_s;
            idle[s.gpu_model] += s.idle_s;
        }
        let mut cost = vec![0i64; n_models];
        for rec in self.ledger.records() {
            let itype = self.instances[rec.instance as usize].itype;
            cost[self.itype_model[itype]] += rec.cost_micros;
        }

        let mut completed = vec![0u64; n_models];
        let mut attempts = 0u64;
        let mut preempted = 0u64;
        let mut killed = 0u64;
        let mut jobs = Vec::with_capacity(self.pool.total_jobs());
        for j in self.pool.jobs() {
            attempts += j.attempts.len() as u64;
            for a in &j.attempts {
                match a.outcome {
                    Some(AttemptOutcome::Preempted) => preempted += 1,
                    Some(AttemptOutcome::KilledRampdown) => killed += 1,
                    _ => {}
                }
            }
            let last = j.attempts.last();
            let place = last.map(|a| {
                let inst = &self.instances[self.pool.slot(a.slot).instance as usize];
                let region = &cat.regions[inst.region];
                (
                    cat.gpu_models[self.itype_model[inst.itype]].name.clone(),
                    region.provider.to_string(),
                    region.id.clone(),
                    self.itype_model[inst.itype],
                )
            });
            let outcome = match j.state {
                JobState::Completed => "success",
                _ => match last.and_then(|a| a.outcome) {
                    Some(AttemptOutcome::Preempted) => "preempted",
                    Some(AttemptOutcome::KilledRampdown) => "killed_rampdown",
                    _ => "queued",
                },
            };
            if j.state == JobState::Completed {
                completed[place.as_ref().expect("completed job has an attempt").3] += 1;
            }
            let (gpu_model, provider, region) =
                place.map_or_else(Default::default, |p| (p.0, p.1, p.2));
            jobs.push(JobRecord {
                job_id: j.id,
                gpu_model,
                provider,
                region,
                submit_s: j.submit_time,
                fetch_s: last.map_or(0.0, |a| a.fetch_s),
                runtime_s: last.map_or(0.0, |a| a.runtime_s),
                n_attempts: j.attempts.len(),
                wasted_s: j.wasted_s(),
                outcome: outcome.to_string(),
            });
        }

        let model_series: Vec<Vec<(f64, f64)>> = cat
            .gpu_models
            .iter()
            .map(|m| series.pflops_series(|g| g.gpu_model == m.name))
            .collect();
        let pfh: Vec<f64> = model_series.iter().map(|s| integrated_pflops(s)).collect();
        let totals: Vec<ModelTotals> = cat
            .gpu_models
            .iter()
            .enumerate()
            .map(|(m, gm)| ModelTotals {
                gpu_model: gm.name.clone(),
                pflops_hours: pfh[m],
                cost_micros: cost[m],
                billed: cat
                    .instance_types
                    .iter()
                    .any(|it| it.gpu_model == gm.name && spot_price(it) > 0.0),
            })
            .collect();
        let eff = cost_effectiveness(&totals);

        let mut warnings = self.warnings;
        let models: Vec<ModelSummary> = (0..n_models)
            .map(|m| {
                let (wf, _) = waste_fraction(wasted[m], idle[m], billed[m]);
                let (pl, ph) = plateau(&model_series[m]);
                ModelSummary {
                    gpu_model: cat.gpu_models[m].name.clone(),
                    pflops_hours: pfh[m],
                    cost_usd: crate::accounting::micros_to_usd(cost[m]),
                    completed_jobs: completed[m],
                    billed_gpu_hours: billed[m] / 3600.0,
                    wasted_gpu_hours: wasted[m] / 3600.0,
                    idle_gpu_hours: idle[m] / 3600.0,
                    waste_fraction: wf,
                    usd_per_pflops_hour: eff[m].usd_per_pflops_hour,
                    plateau_pflops: pl,
                    plateau_hours: ph,
                    compute_share: eff[m].compute_share,
                    cost_share: eff[m].cost_share,
                    effectiveness: eff[m].effectiveness,
                    cost_share_flagged: eff[m].flagged,
                }
            })
            .collect();
        for m in models.iter().filter(|m| m.cost_share_flagged) {
            warnings.push(format!(
                "{} is billed but accrued no cost; effectiveness omitted",
                m.gpu_model
            ));
        }

        let total_series = series.pflops_series(|_| true);
        let total_pfh = integrated_pflops(&total_series);
        let total_cost: i64 = cost.iter().sum();
        let (b, w, i) = (
            billed.iter().sum::<f64>(),
            wasted.iter().sum::<f64>(),
            idle.iter().sum::<f64>(),
        );
        let (wf, undefined) = waste_fraction(w, i, b);
        if undefined {
            warnings.push("no GPU-seconds were billed; waste fraction reported as 0".to_string());
        }
        let (pl, ph) = plateau(&total_series);
        let total = TotalSummary {
            pflops_hours: total_pfh,
            cost_usd: crate::accounting::micros_to_usd(total_cost),
            completed_jobs: completed.iter().sum(),
            billed_gpu_hours: b / 3600.0,
            wasted_gpu_hours: w / 3600.0,
            idle_gpu_hours: i / 3600.0,
            waste_fraction: wf,
            usd_per_pflops_hour: (total_pfh > 0.0 && total_cost > 0)
                .then(|| crate::accounting::micros_to_usd(total_cost) / total_pfh),
            plateau_pflops: pl,
            plateau_hours: ph,
            peak_pflops: total_series.iter().map(|p| p.1).fold(0.0, f64::max),
        };

        let n_fetch = self.fetch_times.len() as u64;
        let fast = self
            .fetch_times
            .iter()
            .filter(|&&f| f < FAST_FETCH_S)
            .count();
        let gbps: Vec<f64> = series.samples.iter().map(|s| s.throughput_gbps).collect();
        let fetch = FetchSummary {
            fetches: n_fetch,
            fast_fraction: if n_fetch > 0 {
                fast as f64 / n_fetch as f64
            } else {
                1.0
            },
            max_fetch_s: self.fetch_times.iter().copied().fold(0.0, f64::max),
            peak_active: self.fetch.peak_active(),
            peak_sampled_gbps: gbps.iter().copied().fold(0.0, f64::max),
            mean_sampled_gbps: if gbps.is_empty() {
                0.0
            } else {
                gbps.iter().sum::<f64>() / gbps.len() as f64
            },
        };
        let n_completed: u64 = completed.iter().sum();
        let summary = RunSummary {
            scenario: sc.name.clone(),
            seed,
            scale,
            horizon_s: sc.horizon_s,
            total,
            models,
            jobs: JobCounts {
                submitted: self.pool.total_jobs() as u64,
                completed: n_completed,
                attempts,
                preempted_attempts: preempted,
                killed_attempts: killed,
                mean_attempts_per_completed: if n_completed > 0 {
                    self.pool
                        .jobs()
                        .iter()
                        .filter(|j| j.state == JobState::Completed)
                        .map(|j| j.attempts.len() as f64)
                        .sum::<f64>()
                        / n_completed as f64
                } else {
                    0.0
                },
            },
            fetch,
            stage_fired_s: (0..sc.plan.stages.len())
                .map(|s| self.tracker.fired_at(s))
                .collect(),
            warnings,
            total_cost_micros: total_cost,
            model_cost_micros: cost,
        };
        (summary, series, jobs)
    }
}

/// Runs a scenario to its horizon. The scenario is scaled and validated
/// first; the root seed comes from `opts.seed` if given.
pub fn simulate(scenario: &Scenario, opts: &RunOptions) -> Result<RunOutput, RunError> {
    let sc = scenario.scaled(opts.scale).validated()?;
    let seed = opts.seed.unwrap_or(sc.seed);
    let mut world = World::new(&sc, seed)?;
    let mut q = EventQueue::new();
    if opts.event_log {
        q = q.with_event_log();
    }

    let batch: Vec<NewJob> = (0..sc.workload.jobs)
        .map(|id| NewJob {
            id,
            submit_time: 0.0,
        })
        .collect();
    world
        .pool
        .submit(&batch)
        .map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;

    let horizon = SimTime::new(sc.horizon_s)?;
    let mut init: Vec<(f64, SimEvent)> = Vec::new();
    for (i, stage) in sc.plan.stages.iter().enumerate() {
        if let Trigger::At(t) = stage.trigger {
            init.push((t, SimEvent::StageTrigger { stage: i }));
        }
    }
    if sc.plan.rampdown_at <= sc.horizon_s {
        init.push((sc.plan.rampdown_at, SimEvent::RampdownStart));
    }
    for (t, ev) in init {
        if t <= sc.horizon_s {
            q.schedule(SimTime::new(t)?, ev)?;
        }
    }
    // on-prem baseline comes up before anything else is considered
    for f in 0..world.fleets.len() {
        if world.fleets[f].persistent {
            world
                .top_up(&mut q, f, 0.0)
                .map_err(|m| ConfigError::Invalid(vec![m]))?;
        }
    }
    if sc.horizon_s > 0.0 {
        q.schedule(SimTime::ZERO, SimEvent::MetricsSample)?;
    }

    q.run_until(horizon, |q, ev| world.handle(q, ev))?;
    world
        .finalize()
        .map_err(|message| crate::error::SimError::HandlerFailed {
            time: sc.horizon_s,
            seq: q.processed(),
            payload: "finalize".to_string(),
            message,
        })?;
    let event_log = q.take_event_log();
    let (summary, series, jobs) = world.reduce(seed, opts.scale);
    Ok(RunOutput {
        summary,
        series,
        jobs,
        event_log,
    })
}
