#![allow(dead_code)]

use burstsim_core::Scenario;
use serde_json::{json, Value};

/// One cloud region with a single T4 instance type, one at(0) fleet, and an
/// optional on-prem site. Tests patch the returned document as needed.
pub fn tiny_doc() -> Value {
    json!({
        "name": "tiny",
        "seed": 7,
        "horizon_s": 20000.0,
        "metric_period_s": 60.0,
        "catalog": {
            "gpu_models": [
                {"name": "T4", "peak_tflops32": 8.1, "cores": 2560},
                {"name": "OnPremMisc", "peak_tflops32": 6.0, "cores": 2560}
            ],
            "instance_types": [
                {"id": "t4", "provider": "AWS", "gpu_model": "T4", "ondemand_price": 0.9, "spot_fraction": 0.5},
                {"id": "local", "provider": "OnPrem", "gpu_model": "OnPremMisc"}
            ],
            "regions": [
                {"id": "r1", "provider": "AWS", "geo_group": "UsEast", "capacity": {"t4": 100},
                 "provision_delay": {"median_s": 0.0, "sigma_log": 0.0}, "preemption_rate": 0.0},
                {"id": "site", "provider": "OnPrem", "geo_group": "UsWest", "capacity": {"local": 10},
                 "provision_delay": {"median_s": 0.0, "sigma_log": 0.0}, "preemption_rate": 0.0}
            ]
        },
        "onprem": [],
        "plan": {
            "stages": [
                {"trigger": {"at": 0.0}, "fleets": [
                    {"instance_type": "t4", "regions": [{"region": "r1", "weight": 1.0}], "target_size": 50}
                ]}
            ],
            "rampdown_at": 10000.0,
            "rampdown_policy": "drain_at_job_boundary",
            "retry_interval_s": 300.0
        },
        "workload": {
            "jobs": 1000,
            "runtime": {"per_model": {
                "T4": {"median_s": 1000.0, "sigma_log": 0.2, "cap_s": 7200.0},
                "OnPremMisc": {"median_s": 2000.0, "sigma_log": 0.2, "cap_s": 7200.0}
            }},
            "fetch": {"file_mb": 45.0, "server_gbps_cap": 100.0, "per_client_mbps_cap": 500.0, "overhead_s": 0.3},
            "epilogue_s": 5.0
        }
    })
}

pub fn scenario(doc: Value) -> Scenario {
    Scenario::from_value(doc).expect("test scenario parses")
}

pub fn tiny() -> Scenario {
    scenario(tiny_doc())
}

/// Renewal-reward waste of a fixed-length job under memoryless preemption.
pub fn renewal_waste(lambda_r: f64) -> f64 {
    1.0 - lambda_r / lambda_r.exp_m1()
}
