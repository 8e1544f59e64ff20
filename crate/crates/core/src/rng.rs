//! Counter-based random substreams.
//!
//! Every value is a pure function of `(root_seed, stream_name, draw_index)`,
//! so a stream's sequence never depends on how draws from other streams are
//! interleaved with it. The mixing function is the SplitMix64 finalizer.

use statrs::distribution::{ContinuousCDF, Normal};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, stable across platforms and compiler versions.
fn name_key(name: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[inline]
fn stream_base(root_seed: u64, key: u64) -> u64 {
    mix64(mix64(root_seed.wrapping_add(GOLDEN_GAMMA)) ^ key)
}

#[inline]
fn to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform value on `[0, 1)` addressed by `(root_seed, stream_name, index)`.
pub fn value_at(root_seed: u64, stream_name: &str, index: u64) -> f64 {
    let base = stream_base(root_seed, name_key(stream_name));
    to_unit(mix64(
        base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)),
    ))
}

/// A named, indexable random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    root_seed: u64,
    name: String,
    base: u64,
    draw_index: u64,
}

impl RngStream {
    pub fn new(root_seed: u64, name: impl Into<String>) -> Self {
        let name = name.into();
        let base = stream_base(root_seed, name_key(&name));
        Self {
            root_seed,
            name,
            base,
            draw_index: 0,
        }
    }

    /// Stream `name` specialised by an integer index without string formatting,
    /// used for per-photon substreams.
    pub fn indexed(root_seed: u64, name: &str, index: u64) -> Self {
        let key = mix64(name_key(name) ^ mix64(index.wrapping_mul(GOLDEN_GAMMA)));
        Self {
            root_seed,
            name: name.to_string(),
            base: stream_base(root_seed, key),
            draw_index: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn draw_index(&self) -> u64 {
        self.draw_index
    }

    /// Value at an arbitrary index; does not advance the stream.
    #[inline]
    pub fn at(&self, index: u64) -> f64 {
        to_unit(mix64(
            self.base
                .wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)),
        ))
    }

    /// Uniform on `[0, 1)`; advances the draw index by one.
    #[inline]
    pub fn draw(&mut self) -> f64 {
        let v = self.at(self.draw_index);
        self.draw_index += 1;
        v
    }

    /// Uniform on `(0, 1]`.
    #[inline]
    pub fn draw_open_low(&mut self) -> f64 {
        1.0 - self.draw()
    }

    /// Uniform on the open interval `(0, 1)`, safe for inverse CDFs with
    /// infinite tails at both ends.
    #[inline]
    pub fn draw_open(&mut self) -> f64 {
        let v = self.draw();
        v + 0.5 / (1u64 << 53) as f64
    }

    /// Standard normal by inversion, one uniform per sample.
    pub fn standard_normal(&mut self) -> f64 {
        let u = self.draw_open();
        standard_normal_quantile(u)
    }

    /// Lognormal with the given median and log-space sigma.
    pub fn lognormal(&mut self, median: f64, sigma_log: f64) -> f64 {
        if sigma_log == 0.0 {
            // keep the draw index in step with the sigma > 0 path
            self.draw_index += 1;
            return median;
        }
        median * (sigma_log * self.standard_normal()).exp()
    }
}

pub fn standard_normal_quantile(u: f64) -> f64 {
    // Normal::new(0, 1) cannot fail
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(u)
}
