//! Photon batches. Photon `i` draws everything from its own indexed stream,
//! so results do not depend on how the batch is split across threads.

use burstsim_core::rng::RngStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ice::IceModel;
use crate::kernel::{
    isotropic_direction, propagate_traced, sample_abs_tau, Dom, Photon, Propagation, Status,
};
use crate::vec3::Vec3;
use crate::PhotonError;

pub const PHOTON_STREAM: &str = "photon";

/// Isotropic emitters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Point {
        position: Vec3,
    },
    /// Emission points uniform along the segment.
    Segment {
        start: Vec3,
        end: Vec3,
    },
}

impl Source {
    pub fn emit(&self, rng: &mut RngStream) -> Photon {
        let position = match self {
            Source::Point { position } => *position,
            Source::Segment { start, end } => *start + (*end - *start) * rng.draw(),
        };
        let direction = isotropic_direction(rng);
        Photon::new(position, direction, sample_abs_tau(rng))
    }
}

/// Detector layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// `nx × ny` vertical strings centred on the origin, `doms_per_string`
    /// modules each, the first at `top_z`.
    Grid {
        nx: usize,
        ny: usize,
        doms_per_string: usize,
        string_spacing_m: f64,
        dom_spacing_m: f64,
        top_z: f64,
        dom_radius_m: f64,
    },
    Explicit {
        doms: Vec<Dom>,
    },
}

impl Geometry {
    /// The bundled desk-scale array: 5×5 strings of 10 modules.
    pub fn desk_grid() -> Self {
        Geometry::Grid {
            nx: 5,
            ny: 5,
            doms_per_string: 10,
            string_spacing_m: 40.0,
            dom_spacing_m: 17.0,
            top_z: -120.0,
            dom_radius_m: 0.18,
        }
    }

    pub fn doms(&self) -> Vec<Dom> {
        match self {
            Geometry::Explicit { doms } => doms.clone(),
            Geometry::Grid {
                nx,
                ny,
                doms_per_string,
                string_spacing_m,
                dom_spacing_m,
                top_z,
                dom_radius_m,
            } => {
                let x0 = -(*nx as f64 - 1.0) / 2.0 * string_spacing_m;
                let y0 = -(*ny as f64 - 1.0) / 2.0 * string_spacing_m;
                let mut out = Vec::with_capacity(nx * ny * doms_per_string);
                for i in 0..*nx {
                    for j in 0..*ny {
                        for k in 0..*doms_per_string {
                            out.push(Dom {
                                center: Vec3::new(
                                    x0 + i as f64 * string_spacing_m,
                                    y0 + j as f64 * string_spacing_m,
                                    top_z - k as f64 * dom_spacing_m,
                                ),
                                radius: *dom_radius_m,
                            });
                        }
                    }
                }
                out
            }
        }
    }
}

/// Rejects non-positive radii and overlapping spheres.
pub fn validate_doms(doms: &[Dom]) -> Result<(), PhotonError> {
    for (i, a) in doms.iter().enumerate() {
        if !(a.radius > 0.0) || !a.center.is_finite() {
            return Err(PhotonError::InvalidGeometry(format!(
                "DOM {i} has radius {} ",
                a.radius
            )));
        }
        for (j, b) in doms.iter().enumerate().skip(i + 1) {
            if (a.center - b.center).norm() < a.radius + b.radius {
                return Err(PhotonError::InvalidGeometry(format!(
                    "DOMs {i} and {j} overlap"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchResult {
    pub n_emitted: u64,
    pub n_detected: u64,
    pub n_absorbed: u64,
    pub n_escaped: u64,
    /// Escapes forced by the step limit; included in `n_escaped`.
    pub n_step_limited: u64,
    pub dom_hits: Vec<u64>,
    pub total_steps: u64,
}

fn run_one(
    i: u64,
    seed: u64,
    source: &Source,
    ice: &IceModel,
    doms: &[Dom],
    max_steps: u64,
    trace: Option<&mut Vec<Vec3>>,
) -> Result<Propagation, PhotonError> {
    let mut rng = RngStream::indexed(seed, PHOTON_STREAM, i);
    let mut photon = source.emit(&mut rng);
    propagate_traced(&mut photon, ice, doms, max_steps, &mut rng, trace).map_err(|e| match e {
        PhotonError::NumericalFault { steps, dump } => PhotonError::NumericalFault {
            steps,
            dump: format!("photon {i}: {dump}"),
        },
        other => other,
    })
}

/// Outcome of every photon, in index order.
pub fn run_outcomes(
    n_photons: u64,
    source: &Source,
    ice: &IceModel,
    doms: &[Dom],
    seed: u64,
    max_steps: u64,
) -> Result<Vec<Propagation>, PhotonError> {
    ice.validate()?;
    (0..n_photons)
        .into_par_iter()
        .map(|i| run_one(i, seed, source, ice, doms, max_steps, None))
        .collect()
}

pub fn run_batch(
    n_photons: u64,
    source: &Source,
    ice: &IceModel,
    doms: &[Dom],
    seed: u64,
    max_steps: u64,
) -> Result<BatchResult, PhotonError> {
    if n_photons == 0 {
        return Err(PhotonError::InvalidBatch(
            "n_photons must be at least 1".into(),
        ));
    }
    let outcomes = run_outcomes(n_photons, source, ice, doms, seed, max_steps)?;
    let mut r = BatchResult {
        n_emitted: n_photons,
        n_detected: 0,
        n_absorbed: 0,
        n_escaped: 0,
        n_step_limited: 0,
        dom_hits: vec![0; doms.len()],
        total_steps: 0,
    };
    for o in &outcomes {
        r.total_steps += o.steps;
        match o.status {
            Status::Detected => r.n_detected += 1,
            Status::Absorbed => r.n_absorbed += 1,
            Status::Escaped => r.n_escaped += 1,
            Status::InFlight => unreachable!("propagation always terminates"),
        }
        r.n_step_limited += o.step_limited as u64;
        if let Some(d) = o.dom {
            r.dom_hits[d] += 1;
        }
    }
    if r.n_step_limited > 0 {
        log::warn!("{} photons stopped by the step limit", r.n_step_limited);
    }
    Ok(r)
}

/// Path vertices of the first `n` photons of a batch, for debugging.
pub fn trace_paths(
    n: u64,
    source: &Source,
    ice: &IceModel,
    doms: &[Dom],
    seed: u64,
    max_steps: u64,
) -> Result<Vec<(Propagation, Vec<Vec3>)>, PhotonError> {
    ice.validate()?;
    (0..n)
        .map(|i| {
            let mut path = Vec::new();
            let p = run_one(i, seed, source, ice, doms, max_steps, Some(&mut path))?;
            Ok((p, path))
        })
        .collect()
}

fn default_max_steps() -> u64 {
    crate::kernel::DEFAULT_MAX_STEPS
}

/// Standalone batch description: ice, detectors, source and batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub n_photons: u64,
    pub seed: u64,
    pub source: Source,
    pub ice: IceModel,
    pub geometry: Geometry,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
}

/// The bundled synthetic batch configuration.
pub const DESK_BATCH: &str = include_str!("../data/desk-batch.json");

impl BatchConfig {
    pub fn from_json(text: &str) -> Result<Self, PhotonError> {
        serde_json::from_str(text).map_err(|e| PhotonError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn run(&self) -> Result<BatchResult, PhotonError> {
        let doms = self.geometry.doms();
        validate_doms(&doms)?;
        run_batch(
            self.n_photons,
            &self.source,
            &self.ice,
            &doms,
            self.seed,
            self.max_steps,
        )
    }
}
