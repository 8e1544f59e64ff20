//! Job runtimes per GPU model and input-file fetch against a shared,
//! capacity-limited origin server.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSpec {
    pub median_s: f64,
    #[serde(default = "default_sigma_log")]
    pub sigma_log: f64,
    pub cap_s: f64,
}

fn default_sigma_log() -> f64 {
    0.15
}

/// Fixed photon count per job, converted to seconds through a per-model
/// throughput rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonWork {
    pub photons_per_job: f64,
    /// Photons per second, keyed by GPU model.
    pub ratings: BTreeMap<String, f64>,
}

impl PhotonWork {
    /// Ratings that reproduce the given median runtimes exactly.
    pub fn calibrated(photons_per_job: f64, medians: &BTreeMap<String, RuntimeSpec>) -> Self {
        let ratings = medians
            .iter()
            .map(|(k, v)| (k.clone(), photons_per_job / v.median_s))
            .collect();
        Self {
            photons_per_job,
            ratings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeModel {
    pub per_model: BTreeMap<String, RuntimeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photon_work: Option<PhotonWork>,
}

impl RuntimeModel {
    /// Lognormal runtime with the model's median and sigma, clamped to
    /// `cap_s`. In photon-work mode the runtime is `photons / rating`.
    pub fn sample_runtime(&self, gpu_model: &str, rng: &mut RngStream) -> Result<f64, ConfigError> {
        if let Some(pw) = &self.photon_work {
            let rating = pw
                .ratings
                .get(gpu_model)
                .ok_or_else(|| ConfigError::UnknownGpuModel(gpu_model.to_string()))?;
            rng.draw();
            return Ok(pw.photons_per_job / rating);
        }
        let spec = self
            .per_model
            .get(gpu_model)
            .ok_or_else(|| ConfigError::UnknownGpuModel(gpu_model.to_string()))?;
        Ok(rng.lognormal(spec.median_s, spec.sigma_log).min(spec.cap_s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FetchModel {
    pub file_mb: f64,
    pub server_gbps_cap: f64,
    pub per_client_mbps_cap: f64,
    pub overhead_s: f64,
}

impl Default for FetchModel {
    fn default() -> Self {
        Self {
            file_mb: 45.0,
            server_gbps_cap: 100.0,
            per_client_mbps_cap: 500.0,
            overhead_s: 0.3,
        }
    }
}

impl FetchModel {
    /// Fair share of the server for each of `n_active` concurrent fetches,
    /// bounded by the client link, in Mbps.
    pub fn per_fetch_mbps(&self, n_active: u64) -> f64 {
        if n_active == 0 {
            return self.per_client_mbps_cap;
        }
        self.per_client_mbps_cap
            .min(self.server_gbps_cap * 1000.0 / n_active as f64)
    }

    pub fn file_mbit(&self) -> f64 {
        self.file_mb * 8.0
    }
}

/// Download time for one input file when `n_active` fetches (including
/// this one) share the server.
pub fn sample_fetch_time(n_active: u64, fm: &FetchModel) -> f64 {
    let n = n_active.max(1);
    fm.overhead_s + fm.file_mbit() / fm.per_fetch_mbps(n)
}

/// Instantaneous aggregate rate of `n_active` fair-shared fetches, in Gbps.
pub fn aggregate_input_throughput(n_active: u64, fm: &FetchModel) -> f64 {
    n_active as f64 * fm.per_fetch_mbps(n_active) / 1000.0
}

/// Closed-form steady-state input rate in Gbps for a pool where `count`
/// slots each restart a job every `mean_runtime_s` seconds.
pub fn steady_state_throughput_gbps(mix: &[(f64, f64)], file_mb: f64) -> f64 {
    mix.iter()
        .map(|(count, runtime)| count * file_mb * 8.0 / runtime)
        .sum::<f64>()
        / 1000.0
}

/// Running set of in-flight fetches.
#[derive(Debug, Clone, Default)]
pub struct FetchTracker {
    active: u64,
    started: u64,
    peak_active: u64,
}

impl FetchTracker {
    /// Registers a new fetch and returns its duration.
    pub fn start(&mut self, fm: &FetchModel) -> f64 {
        self.active += 1;
        self.started += 1;
        self.peak_active = self.peak_active.max(self.active);
        sample_fetch_time(self.active, fm)
    }

    pub fn finish(&mut self) {
        debug_assert!(self.active > 0);
        self.active = self.active.saturating_sub(1);
    }

    pub fn active(&self) -> u64 {
        self.active
    }

    pub fn started(&self) -> u64 {
        self.started
    }

    pub fn peak_active(&self) -> u64 {
        self.peak_active
    }

    pub fn throughput_gbps(&self, fm: &FetchModel) -> f64 {
        aggregate_input_throughput(self.active, fm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> RuntimeModel {
        let mut per_model = BTreeMap::new();
        per_model.insert(
            "V100".to_string(),
            RuntimeSpec {
                median_s: 1500.0,
                sigma_log: 0.0,
                cap_s: 7200.0,
            },
        );
        per_model.insert(
            "T4".to_string(),
            RuntimeSpec {
                median_s: 3300.0,
                sigma_log: 0.0,
                cap_s: 7200.0,
            },
        );
        per_model.insert(
            "OnPremMisc".to_string(),
            RuntimeSpec {
                median_s: 4000.0,
                sigma_log: 0.6,
                cap_s: 7200.0,
            },
        );
        RuntimeModel {
            per_model,
            photon_work: None,
        }
    }

    #[test]
    fn degenerate_sigma_returns_median() {
        let m = model();
        let mut rng = RngStream::new(1, "runtime/V100");
        assert_eq!(m.sample_runtime("V100", &mut rng).unwrap(), 1500.0);
        assert_eq!(m.sample_runtime("T4", &mut rng).unwrap(), 3300.0);
    }

    #[test]
    fn cap_is_never_exceeded() {
        let m = model();
        let mut rng = RngStream::new(1, "runtime/OnPremMisc");
        for _ in 0..20_000 {
            let r = m.sample_runtime("OnPremMisc", &mut rng).unwrap();
            assert!(r > 0.0 && r <= 7200.0);
        }
    }

    #[test]
    fn unknown_model_is_config_error() {
        let m = model();
        let mut rng = RngStream::new(1, "x");
        assert!(matches!(
            m.sample_runtime("A100", &mut rng),
            Err(ConfigError::UnknownGpuModel(_))
        ));
    }

    #[test]
    fn empirical_median_v100() {
        let mut m = model();
        m.per_model.get_mut("V100").unwrap().sigma_log = 0.15;
        let mut rng = RngStream::new(42, "runtime/V100");
        let mut xs: Vec<f64> = (0..100_000)
            .map(|_| m.sample_runtime("V100", &mut rng).unwrap())
            .collect();
        xs.sort_by(f64::total_cmp);
        let median = (xs[49_999] + xs[50_000]) / 2.0;
        assert!((median - 1500.0).abs() / 1500.0 < 0.02, "median {median}");
    }

    #[test]
    fn photon_work_reproduces_medians() {
        let mut m = model();
        m.photon_work = Some(PhotonWork::calibrated(1.0e9, &m.per_model));
        let mut rng = RngStream::new(1, "x");
        assert!((m.sample_runtime("T4", &mut rng).unwrap() - 3300.0).abs() < 1e-9);
        assert!((m.sample_runtime("V100", &mut rng).unwrap() - 1500.0).abs() < 1e-9);
    }

    #[test]
    fn fetch_time_arithmetic() {
        let fm = FetchModel {
            file_mb: 45.0,
            server_gbps_cap: 100.0,
            per_client_mbps_cap: 360.0,
            overhead_s: 0.0,
        };
        assert!((sample_fetch_time(1, &fm) - 1.0).abs() < 1e-12);
        let fm = FetchModel {
            per_client_mbps_cap: 1000.0,
            ..fm
        };
        assert!((sample_fetch_time(1000, &fm) - 3.6).abs() < 1e-12);
        assert!((sample_fetch_time(50_000, &fm) - 180.0).abs() < 1e-9);
    }

    #[test]
    fn aggregate_throughput_cap() {
        let fm = FetchModel::default();
        assert_eq!(aggregate_input_throughput(0, &fm), 0.0);
        assert!((aggregate_input_throughput(5000, &fm) - 100.0).abs() < 1e-9);
        assert!((aggregate_input_throughput(10, &fm) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn steady_state_rate_formula() {
        let g = steady_state_throughput_gbps(&[(15_000.0, 2400.0)], 45.0);
        assert!((g - 2.25).abs() < 1e-12);
    }

    #[test]
    fn tracker_counts() {
        let fm = FetchModel::default();
        let mut t = FetchTracker::default();
        let d1 = t.start(&fm);
        let d2 = t.start(&fm);
        assert!(d2 >= d1);
        assert_eq!(t.active(), 2);
        t.finish();
        assert_eq!(t.active(), 1);
        assert_eq!(t.peak_active(), 2);
        assert_eq!(t.started(), 2);
    }
}
