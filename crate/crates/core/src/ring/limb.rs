//! Splitting ring elements into four 16-bit limbs held in `f64`.
//!
//! Limbs are little-endian: limb 0 carries bits 0..16. Every limb value is an
//! integer below 2^16, so products of two limbs summed over up to 2^20 terms
//! stay below 2^52 and are represented exactly in double precision.

use crate::error::{Error, Result};
use crate::ring::RingTensor;

pub const LIMB_COUNT: usize = 4;
pub const LIMB_BITS: u32 = 16;
const LIMB_MASK: u64 = (1 << LIMB_BITS) - 1;

#[derive(Clone, Debug, PartialEq)]
pub struct LimbSet {
    pub shape: Vec<usize>,
    pub limbs: [Vec<f64>; LIMB_COUNT],
}

pub fn limb_decompose(a: &RingTensor) -> LimbSet {
    let n = a.len();
    let mut limbs: [Vec<f64>; LIMB_COUNT] = std::array::from_fn(|_| Vec::with_capacity(n));
    for &v in a.data() {
        for (i, limb) in limbs.iter_mut().enumerate() {
            limb.push(((v >> (LIMB_BITS * i as u32)) & LIMB_MASK) as f64);
        }
    }
    LimbSet { shape: a.shape().to_vec(), limbs }
}

pub fn limb_recompose(set: &LimbSet) -> Result<RingTensor> {
    let n: usize = set.shape.iter().product();
    if set.limbs.iter().any(|l| l.len() != n) {
        return Err(Error::shape("limb lengths disagree with the limb-set shape"));
    }
    let data = (0..n)
        .map(|k| {
            set.limbs.iter().enumerate().fold(0u64, |acc, (i, limb)| {
                acc.wrapping_add((limb[k] as u64).wrapping_shl(LIMB_BITS * i as u32))
            })
        })
        .collect();
    RingTensor::new(set.shape.clone(), data)
}
