//! Bilinear layers on shares: matrix products, convolutions and pooling.
//!
//! Each party evaluates the cross terms locally with the exact limb engine,
//! reshares the result once (communication proportional to the output) and
//! truncates once.

use crate::error::Result;
use crate::party::Party;
use crate::protocols::arith::{local_product, mul_public_real, reshare, truncate};
use crate::ring::{bilinear_exact, BilinearOpSpec, ConvGeometry, PoolGeometry, RingTensor};
use crate::sharing::prf::Purpose;
use crate::sharing::ArithmeticShare;

/// Guard bits used when dividing by a non-power-of-two pooling area.
pub const POOL_GUARD_BITS: u32 = 10;

/// Product of two fixed-point sharings under any bilinear `op`, with an
/// optional linear map applied to the 3-of-3 summands before resharing.
pub fn bilinear_shares(
    p: &mut Party,
    x: &ArithmeticShare,
    y: &ArithmeticShare,
    op: impl Fn(&RingTensor, &RingTensor) -> Result<RingTensor>,
    post: Option<&dyn Fn(RingTensor) -> Result<RingTensor>>,
) -> Result<ArithmeticShare> {
    let z = local_product(x, y, op)?.val;
    let z = match post {
        Some(f) => f(z)?,
        None => z,
    };
    let z = reshare(p, z, Purpose::Mul, "mul")?;
    let t = p.frac_bits();
    truncate(p, &z, t)
}

/// Fixed-point product of shared operands under `spec`.
pub fn bilinear_op_shares(
    p: &mut Party,
    x: &ArithmeticShare,
    w: &ArithmeticShare,
    spec: &BilinearOpSpec,
) -> Result<ArithmeticShare> {
    bilinear_shares(p, x, w, |a, b| bilinear_exact(a, b, spec), None)
}

/// `[m, k] · [k, n]` on shares.
pub fn matmul_shares(p: &mut Party, x: &ArithmeticShare, w: &ArithmeticShare) -> Result<ArithmeticShare> {
    let [m, k] = x.lo.dims2()?;
    let [_, n] = w.lo.dims2()?;
    bilinear_op_shares(p, x, w, &BilinearOpSpec::matmul(m, k, n))
}

pub fn conv2d_shares(p: &mut Party, x: &ArithmeticShare, w: &ArithmeticShare, g: ConvGeometry) -> Result<ArithmeticShare> {
    bilinear_op_shares(p, x, w, &BilinearOpSpec::conv2d(g))
}

/// Local window sums (no communication).
pub fn sum_pool_shares(x: &ArithmeticShare, g: PoolGeometry) -> Result<ArithmeticShare> {
    let spec = BilinearOpSpec::sum_pool(g);
    let ones = RingTensor::filled(&[g.kernel, g.kernel], 1);
    x.map_linear(|t| bilinear_exact(t, &ones, &spec))
}

/// Divide by a public positive integer.
///
/// Powers of two are a single truncation. Other divisors multiply by
/// `round(2^(t+10) / d)` and truncate by `t + 10`, which keeps the constant's
/// rounding error well under one unit for `|x| < 2^(32 - t)`.
pub fn divide_public(p: &mut Party, x: &ArithmeticShare, d: usize) -> Result<ArithmeticShare> {
    if d.is_power_of_two() {
        truncate(p, x, d.trailing_zeros())
    } else {
        mul_public_real(p, x, 1.0 / d as f64, POOL_GUARD_BITS)
    }
}

/// Average pooling: local window sum then one division by the area.
pub fn avgpool_shares(p: &mut Party, x: &ArithmeticShare, g: PoolGeometry) -> Result<ArithmeticShare> {
    g.validate()?;
    let sums = sum_pool_shares(x, g)?;
    divide_public(p, &sums, g.area())
}
