//! Fixed-point encoding of reals into the ring.
//!
//! A real `x` is stored as the nearest integer to `x * 2^t`, with ties
//! rounded away from zero, reduced modulo 2^64.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::RingTensor;

pub const DEFAULT_FRAC_BITS: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    frac_bits: u32,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig { frac_bits: DEFAULT_FRAC_BITS }
    }
}

impl FixedPointConfig {
    pub fn new(frac_bits: u32) -> Result<Self> {
        if frac_bits == 0 || frac_bits >= 32 {
            return Err(Error::FixedConfig(format!(
                "fractional bits must lie in 1..=31, got {frac_bits}"
            )));
        }
        Ok(FixedPointConfig { frac_bits })
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// The ring element representing 1.0.
    pub fn one(&self) -> u64 {
        1u64 << self.frac_bits
    }

    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    pub fn encode(&self, x: f64) -> Result<u64> {
        fx_encode(x, *self)
    }

    pub fn decode(&self, v: u64) -> f64 {
        fx_decode(v, *self)
    }

    pub fn encode_tensor(&self, shape: &[usize], values: &[f64]) -> Result<RingTensor> {
        let data = values.iter().map(|&x| self.encode(x)).collect::<Result<Vec<_>>>()?;
        RingTensor::new(shape.to_vec(), data)
    }

    pub fn decode_tensor(&self, t: &RingTensor) -> Vec<f64> {
        t.data().iter().map(|&v| self.decode(v)).collect()
    }
}

pub fn fx_encode(x: f64, cfg: FixedPointConfig) -> Result<u64> {
    let t = cfg.frac_bits();
    let limit = 2f64.powi(63 - t as i32);
    if !x.is_finite() || x.abs() >= limit {
        return Err(Error::Range { value: x, frac_bits: t });
    }
    // Scaling by a power of two is exact, so the only rounding is `round`.
    let scaled = (x * cfg.scale()).round();
    Ok(scaled as i64 as u64)
}

pub fn fx_decode(v: u64, cfg: FixedPointConfig) -> f64 {
    v as i64 as f64 / cfg.scale()
}
