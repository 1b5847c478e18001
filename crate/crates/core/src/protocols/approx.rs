//! Polynomial approximations: exponential, reciprocal, division, softmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::party::Party;
use crate::protocols::arith::{mul, mul_fixed, truncate};
use crate::protocols::nonlinear::max_tree;
use crate::ring::fx_encode;
use crate::sharing::ArithmeticShare;

/// `e^x ≈ (1 + x/m)^m`, evaluated with `log2 m` squarings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpConfig {
    pub m: u64,
}

impl Default for ExpConfig {
    fn default() -> Self {
        ExpConfig { m: 512 }
    }
}

impl ExpConfig {
    pub fn new(m: u64) -> Result<Self> {
        if !m.is_power_of_two() || m < 2 {
            return Err(Error::Config(format!("exp degree must be a power of two ≥ 2, got {m}")));
        }
        Ok(ExpConfig { m })
    }

    pub fn squarings(&self) -> u32 {
        self.m.trailing_zeros()
    }
}

/// Newton–Raphson reciprocal for divisors in `[1, bound]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReciprocalConfig {
    pub bound: f64,
    pub iterations: u32,
}

impl Default for ReciprocalConfig {
    fn default() -> Self {
        ReciprocalConfig { bound: 200.0, iterations: 13 }
    }
}

impl ReciprocalConfig {
    /// Worst-case relative error `(1 - 1/Y)^(2^iterations)` in exact arithmetic.
    pub fn error_bound(&self) -> f64 {
        (1.0 - 1.0 / self.bound).powf(2f64.powi(self.iterations as i32))
    }
}

/// Fractional bits of the working precision used by the squarings.
///
/// A value in `[0, 1]` held with `s` fractional bits squares to at most
/// `2^(2s)`; `s = 30` keeps that product below the 2^62 truncation bound.
pub const EXP_WORKING_BITS: u32 = 30;

/// Guard bits carried above `t` during the squarings.
pub fn exp_guard_bits(t: u32) -> u32 {
    EXP_WORKING_BITS.saturating_sub(t)
}

/// Approximate `e^x` for `x ≤ 0`.
///
/// `1 + x/m` is formed at `t + e` fractional bits (exact when `e ≥ log2 m`,
/// otherwise `x` is first truncated by the shortfall), every squaring is a
/// multiply followed by a truncation by `t + e`, and a final truncation by
/// `e` returns to `t` bits. Carrying the guard bits through the squarings
/// keeps their rounding errors, which each later squaring doubles, far
/// below one unit of the output. Inputs below `-m` leave the domain of the
/// approximation and are not clamped.
pub fn exp_approx(p: &mut Party, x: &ArithmeticShare, cfg: ExpConfig) -> Result<ArithmeticShare> {
    let t = p.frac_bits();
    let l = cfg.squarings();
    let e = exp_guard_bits(t);
    let s = t + e;
    let scaled = if e >= l { x.mul_public_scalar(1u64 << (e - l)) } else { truncate(p, x, l - e)? };
    let mut y = scaled.add_public_scalar(1u64 << s);
    for _ in 0..l {
        let sq = mul(p, &y, &y)?;
        y = truncate(p, &sq, s)?;
    }
    if e > 0 {
        y = truncate(p, &y, e)?;
    }
    Ok(y)
}

/// Approximate `1/y` for `y ∈ [1, Y]` with `z ← 2z − y z²` from `z₀ = 1/Y`.
pub fn reciprocal(p: &mut Party, y: &ArithmeticShare, cfg: ReciprocalConfig) -> Result<ArithmeticShare> {
    let z0 = fx_encode(1.0 / cfg.bound, p.fixed())?;
    let mut z = ArithmeticShare::zeros(p.id(), y.shape()).add_public_scalar(z0);
    for _ in 0..cfg.iterations {
        let zz = mul_fixed(p, &z, &z)?;
        let yzz = mul_fixed(p, y, &zz)?;
        z = z.mul_public_scalar(2).sub(&yzz)?;
    }
    Ok(z)
}

/// `x / y` as `x · reciprocal(y)`.
pub fn division(p: &mut Party, x: &ArithmeticShare, y: &ArithmeticShare, cfg: ReciprocalConfig) -> Result<ArithmeticShare> {
    let r = reciprocal(p, y, cfg)?;
    mul_fixed(p, x, &r)
}

/// Row-wise softmax of a `[rows, d]` sharing.
pub fn softmax(
    p: &mut Party,
    z: &ArithmeticShare,
    exp: ExpConfig,
    recip: ReciprocalConfig,
) -> Result<ArithmeticShare> {
    let [_, d] = z.lo.dims2()?;
    if d as f64 > recip.bound {
        return Err(Error::Config(format!("softmax over {d} classes exceeds the reciprocal bound {}", recip.bound)));
    }
    let mx = max_tree(p, z)?;
    let mx = mx.map_linear(|t| t.broadcast_cols(d))?;
    let e = exp_approx(p, &z.sub(&mx)?, exp)?;
    let sum = e.map_linear(|t| t.sum_cols())?;
    let inv = reciprocal(p, &sum, recip)?;
    mul_fixed(p, &e, &inv.map_linear(|t| t.broadcast_cols(d))?)
}
