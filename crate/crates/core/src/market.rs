//! Catalog of purchasable compute and its stochastic behaviour: spot pricing,
//! provisioning delays, capacity caps and preemption hazard.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Provider {
    AWS,
    Azure,
    GCP,
    OnPrem,
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provider::AWS => "AWS",
            Provider::Azure => "Azure",
            Provider::GCP => "GCP",
            Provider::OnPrem => "OnPrem",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GeoGroup {
    UsWest,
    UsEast,
    Europe,
    AsiaPacific,
}

impl fmt::Display for GeoGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GeoGroup::UsWest => "UsWest",
            GeoGroup::UsEast => "UsEast",
            GeoGroup::Europe => "Europe",
            GeoGroup::AsiaPacific => "AsiaPacific",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpuModel {
    pub name: String,
    /// Vendor peak fp32 TFLOPS.
    pub peak_tflops32: f64,
    pub cores: u64,
}

fn one() -> u32 {
    1
}

fn default_spot_fraction() -> f64 {
    1.0 / 3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceType {
    pub id: String,
    pub provider: Provider,
    pub gpu_model: String,
    #[serde(default = "one")]
    pub gpus_per_instance: u32,
    /// On-demand list price, $/hour.
    #[serde(default)]
    pub ondemand_price: f64,
    #[serde(default = "default_spot_fraction")]
    pub spot_fraction: f64,
}

/// Hourly spot price. On-prem resources are never billed.
pub fn spot_price(it: &InstanceType) -> f64 {
    if it.provider == Provider::OnPrem {
        0.0
    } else {
        it.ondemand_price * it.spot_fraction
    }
}

/// Lognormal provisioning delay; a zero median means instant availability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySpec {
    pub median_s: f64,
    #[serde(default)]
    pub sigma_log: f64,
}

impl Default for DelaySpec {
    fn default() -> Self {
        Self {
            median_s: 120.0,
            sigma_log: 0.5,
        }
    }
}

impl DelaySpec {
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        if self.median_s <= 0.0 {
            rng.draw();
            return 0.0;
        }
        rng.lognormal(self.median_s, self.sigma_log)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStep {
    pub from_s: f64,
    pub rate_per_hour: f64,
}

/// Preemption hazard in events per hour, either constant or a step function
/// of simulation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PreemptionRate {
    Constant(f64),
    Steps(Vec<RateStep>),
}

impl Default for PreemptionRate {
    fn default() -> Self {
        PreemptionRate::Constant(0.0)
    }
}

impl PreemptionRate {
    pub fn rate_at(&self, t_s: f64) -> f64 {
        match self {
            PreemptionRate::Constant(r) => *r,
            PreemptionRate::Steps(steps) => steps
                .iter()
                .take_while(|s| s.from_s <= t_s)
                .last()
                .map_or(0.0, |s| s.rate_per_hour),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let rates: Vec<f64> = match self {
            PreemptionRate::Constant(r) => vec![*r],
            PreemptionRate::Steps(s) => s.iter().map(|s| s.rate_per_hour).collect(),
        };
        match rates.into_iter().find(|r| !(*r >= 0.0)) {
            Some(bad) => Err(ConfigError::NegativeRate(bad)),
            None => Ok(()),
        }
    }

    /// Absolute time of the next preemption for an instance alive at
    /// `start_s`, or `None` if the hazard integrates to less than the drawn
    /// exponential before time runs out.
    pub fn next_preemption(&self, start_s: f64, rng: &mut RngStream) -> Option<f64> {
        let target = -rng.draw_open_low().ln(); // Exp(1) in units of cumulative hazard
        self.invert_cumulative_hazard(start_s, target)
    }

    fn invert_cumulative_hazard(&self, start_s: f64, target: f64) -> Option<f64> {
        match self {
            PreemptionRate::Constant(r) => {
                if *r <= 0.0 {
                    None
                } else {
                    Some(start_s + target / r * 3600.0)
                }
            }
            PreemptionRate::Steps(steps) => {
                let mut remaining = target;
                let mut t = start_s;
                let mut rate = self.rate_at(start_s);
                for step in steps.iter().filter(|s| s.from_s > start_s) {
                    let span_h = (step.from_s - t) / 3600.0;
                    if rate > 0.0 && rate * span_h >= remaining {
                        return Some(t + remaining / rate * 3600.0);
                    }
                    remaining -= rate * span_h;
                    t = step.from_s;
                    rate = step.rate_per_hour;
                }
                if rate > 0.0 {
                    Some(t + remaining / rate * 3600.0)
                } else {
                    None
                }
            }
        }
    }
}

/// Exponential preemption delay in hours by inversion of one uniform draw
/// `u` in `(0, 1]`; infinite when the rate is zero.
pub fn preemption_delay_from_uniform(rate_per_hour: f64, u: f64) -> Result<f64, ConfigError> {
    if !(rate_per_hour >= 0.0) {
        return Err(ConfigError::NegativeRate(rate_per_hour));
    }
    if rate_per_hour == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-u.ln() / rate_per_hour)
}

/// Memoryless preemption delay, in hours.
pub fn sample_preemption_delay(
    rate_per_hour: f64,
    rng: &mut RngStream,
) -> Result<f64, ConfigError> {
    preemption_delay_from_uniform(rate_per_hour, rng.draw_open_low())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMarket {
    pub id: String,
    pub provider: Provider,
    pub geo_group: GeoGroup,
    /// Max concurrent instances per instance type id.
    #[serde(default)]
    pub capacity: BTreeMap<String, u64>,
    #[serde(default)]
    pub provision_delay: DelaySpec,
    #[serde(default)]
    pub preemption_rate: PreemptionRate,
}

/// Concurrent-instance counter for one `(region, instance type)` pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Capacity {
    pub cap: u64,
    pub in_use: u64,
}

impl Capacity {
    pub fn new(cap: u64) -> Self {
        Self { cap, in_use: 0 }
    }

    pub fn available(&self) -> u64 {
        self.cap.saturating_sub(self.in_use)
    }

    /// Grants `min(requested, cap - in_use)` and reserves it.
    pub fn grant(&mut self, requested: u64) -> u64 {
        let granted = requested.min(self.available());
        self.in_use += granted;
        granted
    }

    pub fn release(&mut self, n: u64) {
        debug_assert!(n <= self.in_use);
        self.in_use = self.in_use.saturating_sub(n);
    }
}

pub fn grant_capacity(cap: &mut Capacity, requested: u64) -> u64 {
    cap.grant(requested)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn it(provider: Provider, price: f64, frac: f64) -> InstanceType {
        InstanceType {
            id: "x".into(),
            provider,
            gpu_model: "T4".into(),
            gpus_per_instance: 1,
            ondemand_price: price,
            spot_fraction: frac,
        }
    }

    #[test]
    fn spot_price_is_a_third_of_on_demand() {
        let p = spot_price(&it(Provider::AWS, 3.0, 1.0 / 3.0));
        assert!((p - 1.0).abs() < 1e-12);
        assert_eq!(spot_price(&it(Provider::GCP, 2.5, 1.0)), 2.5);
        assert_eq!(spot_price(&it(Provider::OnPrem, 2.5, 1.0)), 0.0);
    }

    #[test]
    fn preemption_delay_inverse_cdf() {
        assert_eq!(
            preemption_delay_from_uniform(0.0, 0.3).unwrap(),
            f64::INFINITY
        );
        let d = preemption_delay_from_uniform(0.2, (-1.0f64).exp()).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
        assert!(preemption_delay_from_uniform(-0.1, 0.5).is_err());
    }

    #[test]
    fn preemption_delay_mean() {
        let mut rng = RngStream::new(99, "preempt/test");
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_preemption_delay(0.5, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 2.0).abs() / 2.0 < 0.02, "mean {mean}");
    }

    #[test]
    fn grant_respects_cap() {
        let mut c = Capacity::new(100);
        assert_eq!(grant_capacity(&mut c, 40), 40);
        let mut c = Capacity {
            cap: 100,
            in_use: 90,
        };
        assert_eq!(c.grant(40), 10);
        assert_eq!(c.in_use, 100);
        assert_eq!(c.grant(1), 0);
        c.release(5);
        assert_eq!(c.grant(10), 5);
    }

    #[test]
    fn step_hazard_inversion() {
        let steps = PreemptionRate::Steps(vec![
            RateStep {
                from_s: 0.0,
                rate_per_hour: 0.0,
            },
            RateStep {
                from_s: 3600.0,
                rate_per_hour: 1.0,
            },
        ]);
        // no hazard for the first hour, then 1/h: one unit of hazard takes 1 h
        let t = steps.invert_cumulative_hazard(0.0, 1.0).unwrap();
        assert!((t - 7200.0).abs() < 1e-9);
        let t = steps.invert_cumulative_hazard(5400.0, 0.5).unwrap();
        assert!((t - 7200.0).abs() < 1e-9);
        let never = PreemptionRate::Steps(vec![RateStep {
            from_s: 0.0,
            rate_per_hour: 0.0,
        }]);
        assert_eq!(never.invert_cumulative_hazard(0.0, 0.1), None);
        assert_eq!(steps.rate_at(100.0), 0.0);
        assert_eq!(steps.rate_at(4000.0), 1.0);
    }

    #[test]
    fn negative_step_rate_rejected() {
        let r = PreemptionRate::Steps(vec![RateStep {
            from_s: 0.0,
            rate_per_hour: -1.0,
        }]);
        assert!(r.validate().is_err());
        assert!(PreemptionRate::Constant(0.1).validate().is_ok());
    }
}
