//! Boolean sharings: AND gates, arithmetic-to-binary conversion, MSB
//! extraction and bit injection back into the arithmetic domain.

use crate::error::{Error, Result};
use crate::party::Party;
use crate::protocols::arith::mul;
use crate::ring::RingTensor;
use crate::sharing::prf::{KeySlot, Purpose};
use crate::sharing::{ArithmeticShare, BinaryShare, PartyId};

/// Rounds spent by [`a2b`]: one masked message, one resharing, five prefix levels.
pub const A2B_ROUNDS: u64 = 7;
/// Rounds spent by [`bit_inject`].
pub const INJECT_ROUNDS: u64 = 2;

/// Reshare several word vectors in a single message.
fn reshare_xor_parts(
    p: &mut Party,
    parts: Vec<Vec<u64>>,
    purpose: Purpose,
    label: &str,
) -> Result<Vec<(Vec<u64>, Vec<u64>)>> {
    let lens: Vec<usize> = parts.iter().map(Vec::len).collect();
    let mut flat: Vec<u64> = parts.concat();
    let alpha = p.fresh_zero_share_xor(purpose, flat.len())?;
    flat.iter_mut().zip(&alpha).for_each(|(a, &b)| *a ^= b);
    let me = p.id();
    p.net().send(me.prev(), flat.clone())?;
    let hi = p.net().recv_exact(me.next(), flat.len())?;
    p.net().round_mark(label);
    let mut out = Vec::with_capacity(parts.len());
    let mut off = 0;
    for len in lens {
        out.push((flat[off..off + len].to_vec(), hi[off..off + len].to_vec()));
        off += len;
    }
    Ok(out)
}

fn and_local(x: &BinaryShare, y: &BinaryShare) -> Vec<u64> {
    let (xl, xh, yl, yh) = (x.lo.data(), x.hi.data(), y.lo.data(), y.hi.data());
    (0..xl.len()).map(|k| (xl[k] & yl[k]) ^ (xh[k] & yl[k]) ^ (xl[k] & yh[k])).collect()
}

/// Evaluate several word-wise AND gates in one round.
pub fn and_many(p: &mut Party, pairs: &[(&BinaryShare, &BinaryShare)]) -> Result<Vec<BinaryShare>> {
    and_many_labeled(p, pairs, "and")
}

fn and_many_labeled(p: &mut Party, pairs: &[(&BinaryShare, &BinaryShare)], label: &str) -> Result<Vec<BinaryShare>> {
    for (x, y) in pairs {
        if x.shape() != y.shape() {
            return Err(Error::shape(format!("and: {:?} vs {:?}", x.shape(), y.shape())));
        }
    }
    let parts = pairs.iter().map(|(x, y)| and_local(x, y)).collect();
    let me = p.id();
    let shared = reshare_xor_parts(p, parts, Purpose::And, label)?;
    pairs
        .iter()
        .zip(shared)
        .map(|((x, y), (lo, hi))| {
            let shape = x.shape().to_vec();
            BinaryShare::new(me, RingTensor::new(shape.clone(), lo)?, RingTensor::new(shape, hi)?, x.bits.max(y.bits))
        })
        .collect()
}

pub fn and(p: &mut Party, x: &BinaryShare, y: &BinaryShare) -> Result<BinaryShare> {
    Ok(and_many(p, &[(x, y)])?.remove(0))
}

/// Binary sharing of the same 64-bit words as `x`.
///
/// P1 knows `u = x_1 + x_2`; P2 and P3 both know `v = x_3`, so the secret is
/// `u + v`. P1 sends `u` and `u ∧ (u << 1)` to P2 masked with randomness it
/// shares with P3, which yields XOR sharings `⟦u⟧ = (r, u ⊕ r, 0)` and
/// `⟦v⟧ = (0, 0, v)`. Since one operand of every product below is known to
/// P2 and P3 in the clear, the span-2 generate/propagate signals of the
/// Kogge–Stone adder come out as local 3-of-3 XOR shares; one resharing
/// makes them replicated and five AND levels (spans 4..64) finish the carry.
pub fn a2b(p: &mut Party, x: &ArithmeticShare) -> Result<BinaryShare> {
    let n = x.len();
    let shape = x.shape().to_vec();
    let me = p.id();
    let ja = p.keys().next_counter(Purpose::A2b);
    let jb = p.keys().next_counter(Purpose::A2b);
    let zeros = || vec![0u64; n];

    // Replicated halves of ⟦u⟧ and ⟦v⟧, and 3-of-3 shares of (G, P) at span 2.
    let (u_lo, u_hi, v_lo, v_hi, g, pr) = match me {
        PartyId::P1 => {
            let u: Vec<u64> = x.lo.data().iter().zip(x.hi.data()).map(|(&a, &b)| a.wrapping_add(b)).collect();
            let ra = p.keys().stream(KeySlot::Pred, Purpose::A2b, ja, n)?;
            let rb = p.keys().stream(KeySlot::Pred, Purpose::A2b, jb, n)?;
            let masked_u: Vec<u64> = u.iter().zip(&ra).map(|(&u, &r)| u ^ r).collect();
            let mut msg = masked_u.clone();
            msg.extend(u.iter().zip(&rb).map(|(&u, &r)| (u & (u << 1)) ^ r));
            p.net().send(PartyId::P2, msg)?;
            (ra, masked_u, zeros(), zeros(), zeros(), zeros())
        }
        PartyId::P2 => {
            let msg = p.net().recv_exact(PartyId::P1, 2 * n)?;
            let (uu, ww) = msg.split_at(n);
            let v = x.hi.data();
            let (g, pr) = span2_terms(uu, ww, v, true);
            (uu.to_vec(), zeros(), zeros(), v.to_vec(), g, pr)
        }
        _ => {
            let ra = p.keys().stream(KeySlot::Own, Purpose::A2b, ja, n)?;
            let rb = p.keys().stream(KeySlot::Own, Purpose::A2b, jb, n)?;
            let v = x.lo.data();
            let (g, pr) = span2_terms(&ra, &rb, v, false);
            (zeros(), ra, v.to_vec(), zeros(), g, pr)
        }
    };
    p.net().round_mark("a2b");

    let mut shared = reshare_xor_parts(p, vec![g, pr], Purpose::A2b, "a2b")?.into_iter();
    let (g_lo, g_hi) = shared.next().expect("two parts");
    let (p_lo, p_hi) = shared.next().expect("two parts");
    let t = |d: Vec<u64>| RingTensor::new(shape.clone(), d);
    let mut gen = BinaryShare::new(me, t(g_lo)?, t(g_hi)?, 64)?;
    let mut prop = BinaryShare::new(me, t(p_lo)?, t(p_hi)?, 64)?;

    for d in [2u32, 4, 8, 16, 32] {
        let g_shift = gen.map_words(|w| w << d, 64);
        if d < 32 {
            let p_shift = prop.map_words(|w| w << d, 64);
            let mut out = and_many_labeled(p, &[(&prop, &g_shift), (&prop, &p_shift)], "a2b")?.into_iter();
            let pg = out.next().expect("two gates");
            prop = out.next().expect("two gates");
            gen = gen.xor(&pg)?;
        } else {
            let pg = and_many_labeled(p, &[(&prop, &g_shift)], "a2b")?.remove(0);
            gen = gen.xor(&pg)?;
        }
    }

    // sum = u ⊕ v ⊕ (carries << 1)
    let xor3 = |a: Vec<u64>, b: Vec<u64>, c: &RingTensor| -> Result<RingTensor> {
        t(a.iter().zip(&b).zip(c.data()).map(|((&a, &b), &c)| a ^ b ^ (c << 1)).collect())
    };
    let lo = xor3(u_lo, v_lo, &gen.lo)?;
    let hi = xor3(u_hi, v_hi, &gen.hi)?;
    BinaryShare::new(me, lo, hi, 64)
}

/// 3-of-3 shares of the span-2 generate and propagate words.
///
/// `a`, `b` are this party's parts of `u` and `w = u ∧ (u << 1)`; `v` is
/// public to P2 and P3. P2 additionally contributes the `v`-only term.
fn span2_terms(a: &[u64], b: &[u64], v: &[u64], with_v_term: bool) -> (Vec<u64>, Vec<u64>) {
    let mut g = Vec::with_capacity(v.len());
    let mut pr = Vec::with_capacity(v.len());
    for k in 0..v.len() {
        let (u, w, v) = (a[k], b[k], v[k]);
        let vv = v & (v << 1);
        g.push((u & v) ^ (w & (v << 1)) ^ ((u << 1) & vv));
        let mut q = w ^ (u & (v << 1)) ^ ((u << 1) & v);
        if with_v_term {
            q ^= vv;
        }
        pr.push(q);
    }
    (g, pr)
}

/// Sharing of the sign bit (bit 63), one bit per word.
pub fn msb(p: &mut Party, x: &ArithmeticShare) -> Result<BinaryShare> {
    Ok(a2b(p, x)?.map_words(|w| w >> 63, 1))
}

/// Arithmetic sharing of the same 0/1 values as a single-bit binary sharing.
///
/// The XOR shares `b_1, b_2, b_3` are each known to two parties and so form
/// trivial arithmetic sharings; they are combined with `a ⊕ b = a + b - 2ab`
/// using two multiplications in sequence.
pub fn bit_inject(p: &mut Party, b: &BinaryShare) -> Result<ArithmeticShare> {
    if b.bits != 1 {
        return Err(Error::Domain(format!("expected single-bit words, got {}-bit", b.bits)));
    }
    if b.lo.data().iter().chain(b.hi.data()).any(|&w| w > 1) {
        return Err(Error::Domain("share word has bits above bit 0".into()));
    }
    let me = p.id();
    let zero = RingTensor::zeros(b.shape());
    // Arithmetic sharing of b_k: P_k holds it as lo, P_{k-1} as hi.
    let term = |k: PartyId| {
        let lo = if me == k { b.lo.clone() } else { zero.clone() };
        let hi = if me.next() == k { b.hi.clone() } else { zero.clone() };
        ArithmeticShare { owner: me, lo, hi }
    };
    let (b1, b2, b3) = (term(PartyId::P1), term(PartyId::P2), term(PartyId::P3));
    let xor = |p: &mut Party, x: &ArithmeticShare, y: &ArithmeticShare| -> Result<ArithmeticShare> {
        let xy = mul(p, x, y)?;
        x.add(y)?.sub(&xy.mul_public_scalar(2))
    };
    let a = xor(p, &b1, &b2)?;
    let out = xor(p, &a, &b3)?;
    Ok(out)
}
