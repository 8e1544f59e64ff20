//! Single-photon propagation: absorption and scattering optical depths
//! consumed through the layers, detector intersection, Henyey–Greenstein
//! redirection.

use std::f64::consts::PI;

use burstsim_core::rng::RngStream;
use serde::{Deserialize, Serialize};

use crate::ice::IceModel;
use crate::vec3::Vec3;
use crate::PhotonError;

pub const DEFAULT_MAX_STEPS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    InFlight,
    Absorbed,
    Detected,
    Escaped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Photon {
    pub position: Vec3,
    /// Unit length.
    pub direction: Vec3,
    pub remaining_abs_tau: f64,
    pub status: Status,
}

impl Photon {
    pub fn new(position: Vec3, direction: Vec3, abs_tau: f64) -> Self {
        Self {
            position,
            direction: direction.normalized(),
            remaining_abs_tau: abs_tau,
            status: Status::InFlight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dom {
    pub center: Vec3,
    pub radius: f64,
}

/// Optical depth to absorption, `-ln(u)` with `u` in `(0, 1]`.
pub fn sample_abs_tau(rng: &mut RngStream) -> f64 {
    -rng.draw_open_low().ln()
}

/// Unit vector uniform on the sphere.
pub fn isotropic_direction(rng: &mut RngStream) -> Vec3 {
    let cos = 2.0 * rng.draw() - 1.0;
    let phi = 2.0 * PI * rng.draw();
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    Vec3::new(sin * phi.cos(), sin * phi.sin(), cos)
}

/// Polar cosine from the Henyey–Greenstein law by inversion of `u`.
pub fn hg_cos_theta(g: f64, u: f64) -> f64 {
    if g.abs() < 1e-9 {
        return 2.0 * u - 1.0;
    }
    let frac = (1.0 - g * g) / (1.0 - g + 2.0 * g * u);
    ((1.0 + g * g - frac * frac) / (2.0 * g)).clamp(-1.0, 1.0)
}

/// New direction after one scatter: polar angle from Henyey–Greenstein,
/// azimuth uniform.
pub fn sample_scatter(direction: Vec3, g: f64, rng: &mut RngStream) -> Result<Vec3, PhotonError> {
    if !(g.abs() < 1.0) {
        return Err(PhotonError::InvalidG(g));
    }
    let cos = hg_cos_theta(g, rng.draw());
    let phi = 2.0 * PI * rng.draw();
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    // orthonormal frame around the incoming direction
    let d = direction;
    let helper = if d.z.abs() < 0.9 {
        Vec3::new(0.0, 0.0, 1.0)
    } else {
        Vec3::new(1.0, 0.0, 0.0)
    };
    let u = d.cross(helper).normalized();
    let v = d.cross(u);
    Ok((d * cos + u * (sin * phi.cos()) + v * (sin * phi.sin())).normalized())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentEnd {
    Scatter,
    Absorbed,
    Escaped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: Vec3,
    pub end: Vec3,
    pub length: f64,
    pub end_kind: SegmentEnd,
}

/// Moves the photon along its direction until the scattering optical depth
/// `tau_s` is used up, its absorption depth runs out, or it leaves the ice.
/// Both depths are consumed at the local coefficients of every layer crossed.
pub fn step_with_tau(photon: &mut Photon, ice: &IceModel, tau_s: f64) -> Segment {
    let start = photon.position;
    let d = photon.direction;
    let escaped = |p: &mut Photon| Segment {
        start,
        end: p.position,
        length: 0.0,
        end_kind: SegmentEnd::Escaped,
    };
    let Some(mut layer) = ice.layer_at(start) else {
        return escaped(photon);
    };
    let rate = ice.depth_rate(d);
    let z0 = ice.effective_depth(start);
    let s_side = ice.horizontal_exit(start, d);
    let last = ice.layers.len() - 1;

    let mut s = 0.0;
    let mut tau_s_left = tau_s;
    let mut tau_a_left = photon.remaining_abs_tau;
    let end_kind = loop {
        let l = &ice.layers[layer];
        let mu_s = ice.scat_coeff(layer, d);
        let mu_a = l.abs_coeff;
        let z = z0 + rate * s;
        let ds_b = if rate > 0.0 {
            ((l.z_top - z) / rate).max(0.0)
        } else if rate < 0.0 {
            ((l.z_bottom - z) / rate).max(0.0)
        } else {
            f64::INFINITY
        };
        let ds_s = if mu_s > 0.0 {
            tau_s_left / mu_s
        } else {
            f64::INFINITY
        };
        let ds_a = if mu_a > 0.0 {
            tau_a_left / mu_a
        } else {
            f64::INFINITY
        };
        let ds_h = s_side - s;
        let step = ds_a.min(ds_s).min(ds_b).min(ds_h);
        if !step.is_finite() {
            // nothing ever happens along this ray
            break SegmentEnd::Escaped;
        }
        tau_s_left = (tau_s_left - mu_s * step).max(0.0);
        tau_a_left = (tau_a_left - mu_a * step).max(0.0);
        s += step;
        if step == ds_a {
            tau_a_left = 0.0;
            break SegmentEnd::Absorbed;
        }
        if step == ds_s {
            break SegmentEnd::Scatter;
        }
        if step == ds_h {
            break SegmentEnd::Escaped;
        }
        layer = match (rate > 0.0, layer) {
            (true, 0) => break SegmentEnd::Escaped,
            (true, i) => i - 1,
            (false, i) if i == last => break SegmentEnd::Escaped,
            (false, i) => i + 1,
        };
    };
    photon.position = start + d * s;
    photon.remaining_abs_tau = tau_a_left;
    Segment {
        start,
        end: photon.position,
        length: s,
        end_kind,
    }
}

/// Draws a scattering optical depth and takes one step.
pub fn step_to_next_scatter(photon: &mut Photon, ice: &IceModel, rng: &mut RngStream) -> Segment {
    let tau_s = -rng.draw_open_low().ln();
    step_with_tau(photon, ice, tau_s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub dom: usize,
    /// Fraction of the segment travelled before the hit.
    pub t: f64,
    pub distance: f64,
}

/// Earliest intersection of the segment `start -> end` with any sphere.
pub fn intersect_dom(start: Vec3, end: Vec3, doms: &[Dom]) -> Option<Hit> {
    let seg = end - start;
    let a = seg.dot(seg);
    let mut best: Option<Hit> = None;
    for (i, dom) in doms.iter().enumerate() {
        let f = start - dom.center;
        let c = f.dot(f) - dom.radius * dom.radius;
        let t = if c <= 0.0 {
            0.0
        } else {
            if a == 0.0 {
                continue;
            }
            let b = 2.0 * f.dot(seg);
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                continue;
            }
            let t = (-b - disc.sqrt()) / (2.0 * a);
            if !(0.0..=1.0).contains(&t) {
                continue;
            }
            t
        };
        if best.is_none_or(|h| t < h.t) {
            best = Some(Hit {
                dom: i,
                t,
                distance: t * a.sqrt(),
            });
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Propagation {
    pub status: Status,
    pub steps: u64,
    pub path_length: f64,
    pub dom: Option<usize>,
    /// Stopped by the step limit and counted as escaped.
    pub step_limited: bool,
}

/// Propagates until absorption, detection or escape. With `trace`, every
/// vertex of the path is appended, starting with the emission point.
pub fn propagate_traced(
    photon: &mut Photon,
    ice: &IceModel,
    doms: &[Dom],
    max_steps: u64,
    rng: &mut RngStream,
    mut trace: Option<&mut Vec<Vec3>>,
) -> Result<Propagation, PhotonError> {
    let mut steps = 0;
    let mut path = 0.0;
    if let Some(t) = trace.as_deref_mut() {
        t.push(photon.position);
    }
    let fault = |p: &Photon, steps: u64| PhotonError::NumericalFault {
        steps,
        dump: format!("{p:?}"),
    };
    while photon.status == Status::InFlight {
        if steps >= max_steps {
            photon.status = Status::Escaped;
            log::warn!("photon hit the {max_steps}-step limit; counted as escaped");
            return Ok(Propagation {
                status: Status::Escaped,
                steps,
                path_length: path,
                dom: None,
                step_limited: true,
            });
        }
        if !photon.position.is_finite() || !photon.direction.is_finite() {
            return Err(fault(photon, steps));
        }
        let seg = step_to_next_scatter(photon, ice, rng);
        steps += 1;
        if !seg.end.is_finite() {
            return Err(fault(photon, steps));
        }
        if let Some(hit) = intersect_dom(seg.start, seg.end, doms) {
            photon.position = seg.start + photon.direction * hit.distance;
            photon.status = Status::Detected;
            path += hit.distance;
            if let Some(t) = trace.as_deref_mut() {
                t.push(photon.position);
            }
            return Ok(Propagation {
                status: Status::Detected,
                steps,
                path_length: path,
                dom: Some(hit.dom),
                step_limited: false,
            });
        }
        path += seg.length;
        if let Some(t) = trace.as_deref_mut() {
            t.push(seg.end);
        }
        match seg.end_kind {
            SegmentEnd::Absorbed => photon.status = Status::Absorbed,
            SegmentEnd::Escaped => photon.status = Status::Escaped,
            SegmentEnd::Scatter => photon.direction = sample_scatter(photon.direction, ice.g, rng)?,
        }
    }
    Ok(Propagation {
        status: photon.status,
        steps,
        path_length: path,
        dom: None,
        step_limited: false,
    })
}

pub fn propagate(
    photon: &mut Photon,
    ice: &IceModel,
    doms: &[Dom],
    max_steps: u64,
    rng: &mut RngStream,
) -> Result<Propagation, PhotonError> {
    propagate_traced(photon, ice, doms, max_steps, rng, None)
}
