//! Layered glacial ice. Layer boundaries are planes tilted by a constant
//! horizontal gradient; scattering strength depends on the angle between the
//! photon direction and a horizontal anisotropy axis.

use serde::{Deserialize, Serialize};

use crate::vec3::Vec3;
use crate::PhotonError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub z_top: f64,
    pub z_bottom: f64,
    /// Per metre.
    pub abs_coeff: f64,
    /// Per metre, before anisotropy scaling.
    pub scat_coeff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tilt {
    /// Direction of steepest boundary rise, radians from +x.
    pub azimuth: f64,
    /// Metres of boundary depth change per horizontal metre.
    pub gradient: f64,
}

impl Default for Tilt {
    fn default() -> Self {
        Self {
            azimuth: 0.0,
            gradient: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anisotropy {
    pub axis_azimuth: f64,
    pub strength: f64,
}

impl Default for Anisotropy {
    fn default() -> Self {
        Self {
            axis_azimuth: 0.0,
            strength: 0.1,
        }
    }
}

fn default_g() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceModel {
    /// Ordered top to bottom; each layer's bottom is the next one's top.
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub tilt: Tilt,
    #[serde(default)]
    pub anisotropy: Anisotropy,
    /// Henyey–Greenstein asymmetry parameter.
    #[serde(default = "default_g")]
    pub g: f64,
    /// Horizontal extent of the medium; unbounded if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,
}

impl IceModel {
    /// A single untilted, isotropic layer spanning `[z_bottom, z_top]`.
    pub fn uniform(z_top: f64, z_bottom: f64, abs_coeff: f64, scat_coeff: f64, g: f64) -> Self {
        Self {
            layers: vec![Layer {
                z_top,
                z_bottom,
                abs_coeff,
                scat_coeff,
            }],
            tilt: Tilt {
                azimuth: 0.0,
                gradient: 0.0,
            },
            anisotropy: Anisotropy {
                axis_azimuth: 0.0,
                strength: 0.0,
            },
            g,
            radius_m: None,
        }
    }

    pub fn validate(&self) -> Result<(), PhotonError> {
        let bad = |m: String| Err(PhotonError::InvalidIce(m));
        if self.layers.is_empty() {
            return bad("at least one layer is required".into());
        }
        for (i, l) in self.layers.iter().enumerate() {
            if !(l.z_top > l.z_bottom) {
                return bad(format!(
                    "layer {i}: z_top {} must be above z_bottom {}",
                    l.z_top, l.z_bottom
                ));
            }
            if !(l.abs_coeff >= 0.0 && l.scat_coeff >= 0.0)
                || !(l.abs_coeff + l.scat_coeff).is_finite()
            {
                return bad(format!(
                    "layer {i}: coefficients must be finite and non-negative"
                ));
            }
            if let Some(next) = self.layers.get(i + 1) {
                if next.z_top != l.z_bottom {
                    return bad(format!(
                        "layers {i} and {} are not contiguous ({} vs {})",
                        i + 1,
                        l.z_bottom,
                        next.z_top
                    ));
                }
            }
        }
        if !(self.g.abs() < 1.0) {
            return Err(PhotonError::InvalidG(self.g));
        }
        if !(self.anisotropy.strength >= 0.0) {
            return bad("anisotropy strength must be >= 0".into());
        }
        if !self.tilt.gradient.is_finite() {
            return bad("tilt gradient must be finite".into());
        }
        if matches!(self.radius_m, Some(r) if !(r > 0.0)) {
            return bad("radius_m must be positive".into());
        }
        Ok(())
    }

    fn tilt_offset(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.tilt.azimuth.sin_cos();
        self.tilt.gradient * (x * c + y * s)
    }

    /// Depth coordinate in the untilted frame: layer `i` holds the points
    /// with `z_bottom < effective_depth <= z_top`.
    pub fn effective_depth(&self, p: Vec3) -> f64 {
        p.z - self.tilt_offset(p.x, p.y)
    }

    /// Rate of change of [`Self::effective_depth`] per metre along `d`.
    pub fn depth_rate(&self, d: Vec3) -> f64 {
        d.z - self.tilt_offset(d.x, d.y)
    }

    pub fn layer_at(&self, p: Vec3) -> Option<usize> {
        let z = self.effective_depth(p);
        self.layers
            .iter()
            .position(|l| z <= l.z_top && z > l.z_bottom)
    }

    fn axis(&self) -> Vec3 {
        let (s, c) = self.anisotropy.axis_azimuth.sin_cos();
        Vec3::new(c, s, 0.0)
    }

    /// Scattering coefficient seen by a photon moving along `d`.
    pub fn scat_coeff(&self, layer: usize, d: Vec3) -> f64 {
        let cos = d.dot(self.axis());
        self.layers[layer].scat_coeff * (1.0 + self.anisotropy.strength * cos * cos)
    }

    /// Path length from `p` along `d` until the horizontal boundary; zero if
    /// already on or outside it and moving outward.
    pub fn horizontal_exit(&self, p: Vec3, d: Vec3) -> f64 {
        let Some(r) = self.radius_m else {
            return f64::INFINITY;
        };
        let a = d.x * d.x + d.y * d.y;
        let b = 2.0 * (p.x * d.x + p.y * d.y);
        let c = p.x * p.x + p.y * p.y - r * r;
        if a == 0.0 {
            return if c > 0.0 { 0.0 } else { f64::INFINITY };
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return 0.0;
        }
        ((-b + disc.sqrt()) / (2.0 * a)).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn untilted_lookup_ignores_xy() {
        let mut ice = IceModel::uniform(0.0, -100.0, 0.01, 0.05, 0.9);
        ice.layers[0].z_bottom = -50.0;
        ice.layers.push(Layer {
            z_top: -50.0,
            z_bottom: -100.0,
            abs_coeff: 0.01,
            scat_coeff: 0.1,
        });
        for (x, y) in [(0.0, 0.0), (500.0, -300.0), (-1e4, 1e4)] {
            assert_eq!(ice.layer_at(Vec3::new(x, y, -49.0)), Some(0));
            assert_eq!(ice.layer_at(Vec3::new(x, y, -51.0)), Some(1));
        }
        assert_eq!(ice.layer_at(Vec3::new(0.0, 0.0, 1.0)), None);
    }

    #[test]
    fn tilted_boundary_moves_with_position() {
        let mut ice = IceModel::uniform(0.0, -50.0, 0.01, 0.05, 0.9);
        ice.layers.push(Layer {
            z_top: -50.0,
            z_bottom: -100.0,
            abs_coeff: 0.01,
            scat_coeff: 0.1,
        });
        ice.tilt = Tilt {
            azimuth: 0.0,
            gradient: 0.01,
        };
        // boundary sits at z = -50 + 0.01 x
        assert_eq!(ice.layer_at(Vec3::new(200.0, 0.0, -49.0)), Some(1));
        assert_eq!(ice.layer_at(Vec3::new(-200.0, 0.0, -51.0)), Some(0));
        assert_eq!(ice.layer_at(Vec3::new(0.0, 200.0, -49.0)), Some(0));
    }

    #[test]
    fn validation() {
        let ok = IceModel::uniform(0.0, -10.0, 0.01, 0.05, 0.9);
        assert!(ok.validate().is_ok());
        let mut gap = ok.clone();
        gap.layers.push(Layer {
            z_top: -11.0,
            z_bottom: -20.0,
            abs_coeff: 0.01,
            scat_coeff: 0.05,
        });
        assert!(gap.validate().is_err());
        let bad_g = IceModel {
            g: 1.0,
            ..ok.clone()
        };
        assert!(matches!(bad_g.validate(), Err(PhotonError::InvalidG(_))));
    }

    #[test]
    fn anisotropy_scaling() {
        let mut ice = IceModel::uniform(0.0, -10.0, 0.01, 0.05, 0.9);
        ice.anisotropy = Anisotropy {
            axis_azimuth: 0.0,
            strength: 1.0,
        };
        assert!((ice.scat_coeff(0, Vec3::new(1.0, 0.0, 0.0)) - 0.10).abs() < 1e-15);
        assert!((ice.scat_coeff(0, Vec3::new(0.0, 1.0, 0.0)) - 0.05).abs() < 1e-15);
        assert!((ice.scat_coeff(0, Vec3::new(0.0, 0.0, -1.0)) - 0.05).abs() < 1e-15);
    }
}
