//! Input, output, multiplication, resharing and truncation of arithmetic shares.

use crate::error::{Error, Result};
use crate::party::Party;
use crate::ring::{FixedPointConfig, RingTensor};
use crate::sharing::prf::{KeySlot, Purpose};
use crate::sharing::{AdditiveShare, ArithmeticShare, PartyId};

/// Offset that maps any `|z| < 2^62` into `[0, 2^63)` before truncating.
const TRUNC_OFFSET: u64 = (1 << 62) - 1;

/// Share a tensor known to `owner`; everyone else passes `None`.
///
/// The owner's two PRF-derived components need no communication, the third
/// is sent to both other parties: one round.
pub fn input(p: &mut Party, owner: PartyId, value: Option<&RingTensor>, shape: &[usize]) -> Result<ArithmeticShare> {
    let n: usize = shape.iter().product();
    let j = p.keys().next_counter(Purpose::Input);
    let me = p.id();
    // x_owner comes from k_{owner-1}, x_{owner+1} from k_owner.
    let share = if me == owner {
        let x = value.ok_or_else(|| Error::Config(format!("{me} owns the input but has no value")))?;
        if x.shape() != shape {
            return Err(Error::shape(format!("input {:?} does not match declared {shape:?}", x.shape())));
        }
        let a = p.keys().stream(KeySlot::Pred, Purpose::Input, j, n)?;
        let b = p.keys().stream(KeySlot::Own, Purpose::Input, j, n)?;
        let c: Vec<u64> =
            x.data().iter().zip(a.iter().zip(&b)).map(|(&v, (&a, &b))| v.wrapping_sub(a).wrapping_sub(b)).collect();
        p.net().send(me.next(), c.clone())?;
        p.net().send(me.prev(), c)?;
        ArithmeticShare::new(me, RingTensor::new(shape.to_vec(), a)?, RingTensor::new(shape.to_vec(), b)?)?
    } else if me == owner.next() {
        // Holds (x_{owner+1}, x_{owner+2}).
        let b = p.keys().stream(KeySlot::Pred, Purpose::Input, j, n)?;
        let c = p.net().recv_exact(owner, n)?;
        ArithmeticShare::new(me, RingTensor::new(shape.to_vec(), b)?, RingTensor::new(shape.to_vec(), c)?)?
    } else {
        // Holds (x_{owner+2}, x_owner).
        let a = p.keys().stream(KeySlot::Own, Purpose::Input, j, n)?;
        let c = p.net().recv_exact(owner, n)?;
        ArithmeticShare::new(me, RingTensor::new(shape.to_vec(), c)?, RingTensor::new(shape.to_vec(), a)?)?
    };
    p.net().round_mark("input");
    Ok(share)
}

/// A public tensor as a (non-random) sharing `(c, 0, 0)`.
pub fn public(p: &Party, c: &RingTensor) -> ArithmeticShare {
    ArithmeticShare::zeros(p.id(), c.shape()).add_public(c).expect("shapes agree")
}

/// Open a sharing to all parties: each sends `x_i` to its successor.
pub fn reveal(p: &mut Party, x: &ArithmeticShare) -> Result<RingTensor> {
    let me = p.id();
    p.net().send(me.next(), x.lo.data().to_vec())?;
    let missing = p.net().recv_exact(me.prev(), x.len())?;
    p.net().round_mark("reveal");
    let data = x
        .lo
        .data()
        .iter()
        .zip(x.hi.data())
        .zip(&missing)
        .map(|((&a, &b), &c)| a.wrapping_add(b).wrapping_add(c))
        .collect();
    RingTensor::new(x.shape().to_vec(), data)
}

/// Turn a 3-of-3 additive sharing into a replicated one: mask with a fresh
/// zero share and send the result to the predecessor (who needs it as `hi`).
pub fn reshare(p: &mut Party, z: RingTensor, purpose: Purpose, label: &str) -> Result<ArithmeticShare> {
    let alpha = p.fresh_zero_share(purpose, z.len())?;
    let mut v = z;
    v.data_mut().iter_mut().zip(&alpha).for_each(|(a, &b)| *a = a.wrapping_add(b));
    let me = p.id();
    p.net().send(me.prev(), v.data().to_vec())?;
    let hi = p.net().recv_exact(me.next(), v.len())?;
    p.net().round_mark(label);
    let hi = RingTensor::new(v.shape().to_vec(), hi)?;
    ArithmeticShare::new(me, v, hi)
}

/// This party's summand of `x · y` for an element-wise or bilinear `op`.
///
/// `z_i = op(x_i + x_{i+1}, y_i) + op(x_i, y_{i+1})`, which expands to the
/// three cross terms `x_i y_i + x_{i+1} y_i + x_i y_{i+1}`.
pub fn local_product(
    x: &ArithmeticShare,
    y: &ArithmeticShare,
    op: impl Fn(&RingTensor, &RingTensor) -> Result<RingTensor>,
) -> Result<AdditiveShare> {
    let sum = crate::ring::ring_add(&x.lo, &x.hi)?;
    let a = op(&sum, &y.lo)?;
    let b = op(&x.lo, &y.hi)?;
    Ok(AdditiveShare { owner: x.owner, val: crate::ring::ring_add(&a, &b)? })
}

/// Element-wise ring product, no truncation. One round.
pub fn mul(p: &mut Party, x: &ArithmeticShare, y: &ArithmeticShare) -> Result<ArithmeticShare> {
    if x.shape() != y.shape() {
        return Err(Error::shape(format!("mul: {:?} vs {:?}", x.shape(), y.shape())));
    }
    let z = local_product(x, y, crate::ring::ring_mul_elem)?;
    reshare(p, z.val, Purpose::Mul, "mul")
}

/// Divide by `2^bits`, rounding stochastically to a neighbouring integer.
///
/// Requires `|z| < 2^62`. Writing `z' = z + 2^62 - 1`, P1 knows
/// `A = x_1 + x_2 + 2^62 - 1` and P2, P3 both know `B = x_3`, so
/// `A + B = z' + w·2^64` with `w = msb(A) OR msb(B)`. The parties compute an
/// additive sharing of `1 - w = (1 - msb A)(1 - msb B)` with one message
/// from P1 to P2, blinded by randomness P1 shares with P3, subtract the
/// wrap from the locally shifted halves, and reshare (second round).
///
/// The result is `⌊z/2^bits⌋` or `⌈z/2^bits⌉`; exact multiples are
/// returned exactly and the rounding is unbiased.
pub fn truncate(p: &mut Party, x: &ArithmeticShare, bits: u32) -> Result<ArithmeticShare> {
    if bits == 0 {
        return Ok(x.clone());
    }
    if bits > 62 {
        return Err(Error::Config(format!("cannot truncate by {bits} bits")));
    }
    let n = x.len();
    let j = p.keys().next_counter(Purpose::Truncate);
    let wrap = 1u64 << (64 - bits);
    let me = p.id();
    let y: Vec<u64> = match me {
        PartyId::P1 => {
            let s = p.keys().stream(KeySlot::Pred, Purpose::Truncate, j, n)?;
            let a: Vec<u64> = x
                .lo
                .data()
                .iter()
                .zip(x.hi.data())
                .map(|(&a, &b)| a.wrapping_add(b).wrapping_add(TRUNC_OFFSET))
                .collect();
            let m: Vec<u64> = a.iter().zip(&s).map(|(&a, &s)| (1 - (a >> 63)).wrapping_add(s)).collect();
            p.net().send(PartyId::P2, m)?;
            let bias = wrap.wrapping_add(1u64 << (62 - bits)).wrapping_sub(1);
            a.iter().map(|&a| (a >> bits).wrapping_sub(bias)).collect()
        }
        PartyId::P2 => {
            let m = p.net().recv_exact(PartyId::P1, n)?;
            x.hi.data()
                .iter()
                .zip(&m)
                .map(|(&b, &m)| {
                    let c = if b >> 63 == 0 { m } else { 0 };
                    (b >> bits).wrapping_add(c.wrapping_mul(wrap))
                })
                .collect()
        }
        _ => {
            let s = p.keys().stream(KeySlot::Own, Purpose::Truncate, j, n)?;
            x.lo.data()
                .iter()
                .zip(&s)
                .map(|(&b, &s)| {
                    let c = if b >> 63 == 0 { s.wrapping_neg() } else { 0 };
                    c.wrapping_mul(wrap)
                })
                .collect()
        }
    };
    p.net().round_mark("truncate");
    reshare(p, RingTensor::new(x.shape().to_vec(), y)?, Purpose::Truncate, "truncate")
}

/// Fixed-point product: multiply then truncate by `t`. Three rounds.
pub fn mul_fixed(p: &mut Party, x: &ArithmeticShare, y: &ArithmeticShare) -> Result<ArithmeticShare> {
    let z = mul(p, x, y)?;
    let t = p.frac_bits();
    truncate(p, &z, t)
}

/// Encode a public real `c` with `t + extra` fractional bits.
pub fn public_multiplier(fixed: FixedPointConfig, c: f64, extra: u32) -> Result<u64> {
    let t = fixed.frac_bits() + extra;
    let scaled = (c * 2f64.powi(t as i32)).round();
    if !scaled.is_finite() || scaled.abs() >= 2f64.powi(62) {
        return Err(Error::Range { value: c, frac_bits: t });
    }
    Ok(scaled as i64 as u64)
}

/// Multiply by a public real, carrying `extra` guard bits through the
/// product before truncating by `t + extra`.
///
/// The product must stay below 2^62: `|x| · |c| · 2^(2t + extra) < 2^62`.
pub fn mul_public_real(p: &mut Party, x: &ArithmeticShare, c: f64, extra: u32) -> Result<ArithmeticShare> {
    let k = public_multiplier(p.fixed(), c, extra)?;
    let t = p.frac_bits();
    truncate(p, &x.mul_public_scalar(k), t + extra)
}
