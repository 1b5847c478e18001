//! Sign-based non-linearities built from MSB extraction.

use crate::error::{Error, Result};
use crate::party::Party;
use crate::protocols::arith::mul;
use crate::protocols::binary::{bit_inject, msb};
use crate::ring::RingTensor;
use crate::sharing::ArithmeticShare;

/// `1 - msb(x)` as an unscaled 0/1 sharing; `drelu(0) = 1`.
pub fn drelu(p: &mut Party, x: &ArithmeticShare) -> Result<ArithmeticShare> {
    let m = msb(p, x)?;
    Ok(bit_inject(p, &m)?.public_scalar_minus(1))
}

/// `max(x, 0)` together with the 0/1 mask it applied (kept for backprop).
pub fn relu_with_mask(p: &mut Party, x: &ArithmeticShare) -> Result<(ArithmeticShare, ArithmeticShare)> {
    let mask = drelu(p, x)?;
    let y = mul(p, x, &mask)?;
    Ok((y, mask))
}

pub fn relu(p: &mut Party, x: &ArithmeticShare) -> Result<ArithmeticShare> {
    Ok(relu_with_mask(p, x)?.0)
}

/// 0/1 indicator of `x >= y`.
pub fn compare(p: &mut Party, x: &ArithmeticShare, y: &ArithmeticShare) -> Result<ArithmeticShare> {
    drelu(p, &x.sub(y)?)
}

/// Row-wise maximum of a `[rows, m]` sharing, returned as `[rows, 1]`.
///
/// Columns are paired level by level with `max(a, b) = b + relu(a - b)`, so
/// `ceil(log2 m)` levels are evaluated, each batched across the whole tensor.
pub fn max_tree(p: &mut Party, v: &ArithmeticShare) -> Result<ArithmeticShare> {
    let [rows, mut width] = v.lo.dims2()?;
    if width == 0 {
        return Err(Error::shape("max of an empty vector"));
    }
    let mut cur = v.clone();
    while width > 1 {
        let half = width / 2;
        let evens: Vec<usize> = (0..half).map(|k| 2 * k).collect();
        let odds: Vec<usize> = (0..half).map(|k| 2 * k + 1).collect();
        let a = cur.map_linear(|t| t.select_cols(&evens))?;
        let b = cur.map_linear(|t| t.select_cols(&odds))?;
        let best = b.add(&relu(p, &a.sub(&b)?)?)?;
        cur = if width % 2 == 1 {
            let last = cur.map_linear(|t| t.select_cols(&[width - 1]))?;
            ArithmeticShare::new(
                cur.owner,
                RingTensor::concat_cols(&[&best.lo, &last.lo])?,
                RingTensor::concat_cols(&[&best.hi, &last.hi])?,
            )?
        } else {
            best
        };
        width = half + width % 2;
    }
    debug_assert_eq!(cur.shape(), &[rows, 1]);
    Ok(cur)
}
