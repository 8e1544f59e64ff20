//! Staged provisioning plans: timed or plateau-triggered fleet targets,
//! weighted regional spread, and rampdown policies.

use serde::{Deserialize, Serialize};

use crate::pool::Pool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionWeight {
    pub region: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub instance_type: String,
    pub regions: Vec<RegionWeight>,
    pub target_size: u64,
}

impl FleetSpec {
    /// Per-region instance targets, in `regions` order.
    pub fn regional_targets(&self) -> Vec<u64> {
        let w: Vec<f64> = self.regions.iter().map(|r| r.weight).collect();
        largest_remainder(self.target_size, &w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Fire at an absolute time, seconds.
    At(f64),
    /// Fire once the named GPU model's instance count plateaus.
    Plateau(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub trigger: Trigger,
    pub fleets: Vec<FleetSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampdownPolicy {
    #[default]
    ImmediateKill,
    DrainAtJobBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauDetector {
    pub window_s: f64,
    pub rel_epsilon: f64,
}

impl Default for PlateauDetector {
    fn default() -> Self {
        Self {
            window_s: 1800.0,
            rel_epsilon: 0.02,
        }
    }
}

fn default_retry() -> f64 {
    300.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub stages: Vec<Stage>,
    pub rampdown_at: f64,
    #[serde(default)]
    pub rampdown_policy: RampdownPolicy,
    #[serde(default)]
    pub plateau: PlateauDetector,
    /// Unfulfilled fleet targets are re-requested at this interval.
    #[serde(default = "default_retry")]
    pub retry_interval_s: f64,
}

/// Integer split of `total` proportional to `weights`: floors first, then the
/// leftover units go to the largest fractional parts (ties to the lower index).
pub fn largest_remainder(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
        out[i] += 1;
    }
    out
}

/// Two-window plateau rule over `(t, value)` samples in time order: true iff
/// the history spans at least two windows and the relative change between
/// the last window's mean and the one before it is below `rel_epsilon`.
pub fn detect_plateau(series: &[(f64, f64)], window_s: f64, rel_epsilon: f64) -> bool {
    let (Some(first), Some(last)) = (series.first(), series.last()) else {
        return false;
    };
    let t_last = last.0;
    if t_last - first.0 < 2.0 * window_s {
        return false;
    }
    let mean_in = |lo: f64, hi: f64| {
        let (sum, n) = series
            .iter()
            .rev()
            .take_while(|(t, _)| *t > lo)
            .filter(|(t, _)| *t <= hi)
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    };
    let (Some(recent), Some(previous)) = (
        mean_in(t_last - window_s, t_last),
        mean_in(t_last - 2.0 * window_s, t_last - window_s),
    ) else {
        return false;
    };
    (recent - previous).abs() / previous.max(1.0) < rel_epsilon
}

/// Firing state for a plan's stages.
#[derive(Debug, Clone)]
pub struct StageTracker {
    fired_at: Vec<Option<f64>>,
}

impl StageTracker {
    pub fn new(plan: &Plan) -> Self {
        Self {
            fired_at: vec![None; plan.stages.len()],
        }
    }

    pub fn fired_at(&self, stage: usize) -> Option<f64> {
        self.fired_at[stage]
    }

    /// Marks a stage fired; returns false if it had already fired.
    pub fn fire(&mut self, stage: usize, t: f64) -> bool {
        if self.fired_at[stage].is_some() {
            return false;
        }
        self.fired_at[stage] = Some(t);
        true
    }

    /// Stages that fire at time `t`. Timed stages fire once their time has
    /// come; plateau stages fire on the first qualifying sample after every
    /// earlier stage has fired. `series` returns the instance-count history
    /// for a GPU model name.
    pub fn evaluate<'a, F>(&mut self, plan: &Plan, t: f64, series: F) -> Vec<usize>
    where
        F: Fn(&str) -> &'a [(f64, f64)],
    {
        let mut fired = Vec::new();
        for (i, stage) in plan.stages.iter().enumerate() {
            if self.fired_at[i].is_some() {
                continue;
            }
            let go = match &stage.trigger {
                Trigger::At(at) => *at <= t,
                Trigger::Plateau(model) => {
                    self.fired_at[..i].iter().all(Option::is_some)
                        && detect_plateau(
                            series(model),
                            plan.plateau.window_s,
                            plan.plateau.rel_epsilon,
                        )
                }
            };
            if go {
                self.fired_at[i] = Some(t);
                fired.push(i);
            }
        }
        fired
    }
}

/// Slots belonging to one instance.
#[derive(Debug, Clone)]
pub struct InstanceSlots {
    pub instance: u64,
    pub slots: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RampdownOutcome {
    /// Instances with no running work left; deprovision at `t`.
    pub terminate_now: Vec<u64>,
    /// Instances that stop when their last attempt completes.
    pub draining: Vec<u64>,
    /// GPU-seconds of attempts killed by the rampdown.
    pub wasted_s: f64,
}

/// Applies a rampdown policy to the given instances at time `t`.
pub fn rampdown(
    pool: &mut Pool,
    instances: &[InstanceSlots],
    policy: RampdownPolicy,
    t: f64,
) -> RampdownOutcome {
    let mut out = RampdownOutcome::default();
    for inst in instances {
        match policy {
            RampdownPolicy::ImmediateKill => {
                for &s in &inst.slots {
                    if let Ok(Some(c)) = pool.kill(s, t) {
                        out.wasted_s += c.duration_s;
                    }
                }
                out.terminate_now.push(inst.instance);
            }
            RampdownPolicy::DrainAtJobBoundary => {
                let mut all_done = true;
                for &s in &inst.slots {
                    all_done &= pool.drain(s, t);
                }
                if all_done {
                    out.terminate_now.push(inst.instance);
                } else {
                    out.draining.push(inst.instance);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{NewJob, SlotState};

    #[test]
    fn largest_remainder_sums_exactly() {
        assert_eq!(largest_remainder(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(largest_remainder(7, &[0.5, 0.25, 0.25]), vec![3, 2, 2]);
        assert_eq!(largest_remainder(0, &[0.3, 0.7]), vec![0, 0]);
        assert_eq!(largest_remainder(5, &[]), Vec::<u64>::new());
        let v = largest_remainder(5500, &[0.13, 0.29, 0.07, 0.51]);
        assert_eq!(v.iter().sum::<u64>(), 5500);
    }

    fn constant(v: f64, until: f64) -> Vec<(f64, f64)> {
        (0..=(until / 60.0) as usize)
            .map(|i| (i as f64 * 60.0, v))
            .collect()
    }

    #[test]
    fn constant_series_is_a_plateau() {
        assert!(detect_plateau(&constant(5500.0, 3600.0), 1800.0, 0.02));
    }

    #[test]
    fn short_history_is_not_a_plateau() {
        assert!(!detect_plateau(&constant(5500.0, 3000.0), 1800.0, 0.02));
        assert!(!detect_plateau(&[], 1800.0, 0.02));
    }

    #[test]
    fn ten_percent_per_window_growth_is_not_a_plateau() {
        let w = 1800.0;
        let s: Vec<(f64, f64)> = (0..=180)
            .map(|i| {
                let t = i as f64 * 60.0;
                (t, 1000.0 * 1.1f64.powf(t / w))
            })
            .collect();
        for end in 60..s.len() {
            assert!(!detect_plateau(&s[..=end], w, 0.02));
        }
    }

    fn plan(stages: Vec<Stage>) -> Plan {
        Plan {
            stages,
            rampdown_at: 1e9,
            rampdown_policy: RampdownPolicy::ImmediateKill,
            plateau: PlateauDetector::default(),
            retry_interval_s: 300.0,
        }
    }

    fn fleet(it: &str, n: u64) -> FleetSpec {
        FleetSpec {
            name: None,
            instance_type: it.into(),
            regions: vec![RegionWeight {
                region: "r".into(),
                weight: 1.0,
            }],
            target_size: n,
        }
    }

    #[test]
    fn timed_stage_fires_once() {
        let p = plan(vec![Stage {
            trigger: Trigger::At(0.0),
            fleets: vec![fleet("aws-t4", 5500)],
        }]);
        let mut tr = StageTracker::new(&p);
        let empty: Vec<(f64, f64)> = Vec::new();
        assert_eq!(tr.evaluate(&p, 0.0, |_| &empty), vec![0]);
        assert!(tr.evaluate(&p, 60.0, |_| &empty).is_empty());
        assert_eq!(tr.fired_at(0), Some(0.0));
    }

    #[test]
    fn plateau_stage_waits_for_predecessors_and_flat_series() {
        let p = plan(vec![
            Stage {
                trigger: Trigger::At(100.0),
                fleets: vec![],
            },
            Stage {
                trigger: Trigger::Plateau("T4".into()),
                fleets: vec![],
            },
        ]);
        let flat = constant(5500.0, 4000.0);
        let mut tr = StageTracker::new(&p);
        // predecessor not yet fired: nothing, even though T4 is flat
        assert!(tr.evaluate(&p, 50.0, |_| &flat[..]).is_empty());
        assert_eq!(tr.evaluate(&p, 100.0, |_| &flat[..]), vec![0, 1]);
        assert!(tr.evaluate(&p, 160.0, |_| &flat[..]).is_empty());
    }

    #[test]
    fn plateau_fires_on_first_qualifying_sample() {
        let p = plan(vec![Stage {
            trigger: Trigger::Plateau("T4".into()),
            fleets: vec![],
        }]);
        let flat = constant(5500.0, 7200.0);
        let mut tr = StageTracker::new(&p);
        let mut fired_at = None;
        for end in 0..flat.len() {
            let t = flat[end].0;
            if !tr.evaluate(&p, t, |_| &flat[..=end]).is_empty() {
                fired_at = Some(t);
                break;
            }
        }
        assert_eq!(fired_at, Some(3600.0));
    }

    #[test]
    fn immediate_kill_wastes_elapsed_time() {
        let mut pool = Pool::new();
        pool.submit(&[NewJob {
            id: 0,
            submit_time: 0.0,
        }])
        .unwrap();
        let s = pool.add_slot(7, 0, 0.0);
        let a = pool.match_jobs(0.0)[0];
        pool.start_running(a.job, 3000.0);
        let out = rampdown(
            &mut pool,
            &[InstanceSlots {
                instance: 7,
                slots: vec![s],
            }],
            RampdownPolicy::ImmediateKill,
            600.0,
        );
        assert_eq!(out.wasted_s, 600.0);
        assert_eq!(out.terminate_now, vec![7]);
    }

    #[test]
    fn drain_waits_for_busy_slots_and_stops_idle_ones() {
        let mut pool = Pool::new();
        pool.submit(&[NewJob {
            id: 0,
            submit_time: 0.0,
        }])
        .unwrap();
        let busy = pool.add_slot(1, 0, 0.0);
        pool.match_jobs(0.0);
        let idle = pool.add_slot(2, 0, 0.0);
        let out = rampdown(
            &mut pool,
            &[
                InstanceSlots {
                    instance: 1,
                    slots: vec![busy],
                },
                InstanceSlots {
                    instance: 2,
                    slots: vec![idle],
                },
            ],
            RampdownPolicy::DrainAtJobBoundary,
            10.0,
        );
        assert_eq!(out.wasted_s, 0.0);
        assert_eq!(out.terminate_now, vec![2]);
        assert_eq!(out.draining, vec![1]);
        assert_eq!(pool.slot(busy).state, SlotState::Busy);
        assert_eq!(pool.slot(idle).state, SlotState::Terminated);
    }
}
