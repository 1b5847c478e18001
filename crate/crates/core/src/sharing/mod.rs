//! Replicated (2-of-3) and additive (3-of-3) secret sharing.
//!
//! A secret `x = x_1 + x_2 + x_3 (mod 2^64)` is held as `(x_i, x_{i+1})` by
//! party `P_i`; we call these `lo` and `hi`. Binary sharings are the same
//! with XOR in place of addition.

pub mod prf;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::{ring_add, ring_neg, ring_sub, RingTensor};

/// One of the three parties, numbered 1..=3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartyId(u8);

impl PartyId {
    pub const P1: PartyId = PartyId(1);
    pub const P2: PartyId = PartyId(2);
    pub const P3: PartyId = PartyId(3);
    pub const ALL: [PartyId; 3] = [PartyId::P1, PartyId::P2, PartyId::P3];

    pub fn new(id: u8) -> Result<Self> {
        match id {
            1..=3 => Ok(PartyId(id)),
            _ => Err(Error::Config(format!("party id must be 1, 2 or 3, got {id}"))),
        }
    }

    pub fn from_index(i: usize) -> Self {
        PartyId((i % 3) as u8 + 1)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based index, handy for arrays.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn next(self) -> PartyId {
        PartyId::from_index(self.index() + 1)
    }

    pub fn prev(self) -> PartyId {
        PartyId::from_index(self.index() + 2)
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// A party's replicated share of an arithmetic secret.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArithmeticShare {
    pub owner: PartyId,
    /// `x_i`
    pub lo: RingTensor,
    /// `x_{i+1}`
    pub hi: RingTensor,
}

/// A party's single summand of a 3-of-3 additive sharing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdditiveShare {
    pub owner: PartyId,
    pub val: RingTensor,
}

/// A party's replicated share of XOR-shared 64-bit words.
///
/// `bits` is 64 for full words and 1 when every word holds a single bit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryShare {
    pub owner: PartyId,
    pub lo: RingTensor,
    pub hi: RingTensor,
    pub bits: u32,
}

impl ArithmeticShare {
    pub fn new(owner: PartyId, lo: RingTensor, hi: RingTensor) -> Result<Self> {
        if lo.shape() != hi.shape() {
            return Err(Error::shape(format!("share halves differ: {:?} vs {:?}", lo.shape(), hi.shape())));
        }
        Ok(ArithmeticShare { owner, lo, hi })
    }

    pub fn zeros(owner: PartyId, shape: &[usize]) -> Self {
        ArithmeticShare { owner, lo: RingTensor::zeros(shape), hi: RingTensor::zeros(shape) }
    }

    pub fn shape(&self) -> &[usize] {
        self.lo.shape()
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn add(&self, other: &ArithmeticShare) -> Result<Self> {
        Ok(ArithmeticShare { owner: self.owner, lo: ring_add(&self.lo, &other.lo)?, hi: ring_add(&self.hi, &other.hi)? })
    }

    pub fn sub(&self, other: &ArithmeticShare) -> Result<Self> {
        Ok(ArithmeticShare { owner: self.owner, lo: ring_sub(&self.lo, &other.lo)?, hi: ring_sub(&self.hi, &other.hi)? })
    }

    pub fn neg(&self) -> Self {
        ArithmeticShare { owner: self.owner, lo: ring_neg(&self.lo), hi: ring_neg(&self.hi) }
    }

    /// Add a public tensor; it is folded into `x_1`, held by P1 (lo) and P3 (hi).
    pub fn add_public(&self, c: &RingTensor) -> Result<Self> {
        let mut out = self.clone();
        match self.owner {
            PartyId::P1 => out.lo = ring_add(&out.lo, c)?,
            PartyId::P3 => out.hi = ring_add(&out.hi, c)?,
            _ => {
                if c.shape() != self.shape() {
                    return Err(Error::shape("public operand shape differs from share"));
                }
            }
        }
        Ok(out)
    }

    /// Add the same public word to every element.
    pub fn add_public_scalar(&self, c: u64) -> Self {
        let mut out = self.clone();
        match self.owner {
            PartyId::P1 => out.lo.map_inplace(|v| v.wrapping_add(c)),
            PartyId::P3 => out.hi.map_inplace(|v| v.wrapping_add(c)),
            _ => {}
        }
        out
    }

    /// `c - x` for a public scalar `c`.
    pub fn public_scalar_minus(&self, c: u64) -> Self {
        self.neg().add_public_scalar(c)
    }

    pub fn mul_public_scalar(&self, c: u64) -> Self {
        ArithmeticShare {
            owner: self.owner,
            lo: self.lo.map(|v| v.wrapping_mul(c)),
            hi: self.hi.map(|v| v.wrapping_mul(c)),
        }
    }

    /// Apply the same linear map to both halves.
    pub fn map_linear(&self, f: impl Fn(&RingTensor) -> Result<RingTensor>) -> Result<Self> {
        ArithmeticShare::new(self.owner, f(&self.lo)?, f(&self.hi)?)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        self.map_linear(|t| t.clone().reshape(shape))
    }
}

impl AdditiveShare {
    pub fn shape(&self) -> &[usize] {
        self.val.shape()
    }
}

impl BinaryShare {
    pub fn new(owner: PartyId, lo: RingTensor, hi: RingTensor, bits: u32) -> Result<Self> {
        if lo.shape() != hi.shape() {
            return Err(Error::shape("binary share halves differ in shape"));
        }
        Ok(BinaryShare { owner, lo, hi, bits })
    }

    pub fn shape(&self) -> &[usize] {
        self.lo.shape()
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn xor(&self, other: &BinaryShare) -> Result<Self> {
        Ok(BinaryShare {
            owner: self.owner,
            lo: self.lo.zip_map(&other.lo, "xor", |a, b| a ^ b)?,
            hi: self.hi.zip_map(&other.hi, "xor", |a, b| a ^ b)?,
            bits: self.bits.max(other.bits),
        })
    }

    /// Apply a bitwise-linear map (shift, mask) to both halves.
    pub fn map_words(&self, f: impl Fn(u64) -> u64, bits: u32) -> Self {
        BinaryShare { owner: self.owner, lo: self.lo.map(&f), hi: self.hi.map(&f), bits }
    }

    /// XOR a public word tensor into the secret (folded into share 1).
    pub fn xor_public(&self, c: &RingTensor) -> Result<Self> {
        let mut out = self.clone();
        match self.owner {
            PartyId::P1 => out.lo = out.lo.zip_map(c, "xor", |a, b| a ^ b)?,
            PartyId::P3 => out.hi = out.hi.zip_map(c, "xor", |a, b| a ^ b)?,
            _ => {}
        }
        Ok(out)
    }
}

/// Dealer sharing: `x_1, x_2` uniform, `x_3 = x - x_1 - x_2`.
pub fn share<R: Rng + ?Sized>(x: &RingTensor, rng: &mut R) -> [ArithmeticShare; 3] {
    let shape = x.shape();
    let x1 = RingTensor::from_fn(shape, |_| rng.gen());
    let x2 = RingTensor::from_fn(shape, |_| rng.gen());
    let x3 = x.zip_map(&x1, "share", u64::wrapping_sub).and_then(|t| t.zip_map(&x2, "share", u64::wrapping_sub));
    let x3 = x3.expect("same shape by construction");
    let parts = [x1, x2, x3];
    PartyId::ALL.map(|p| ArithmeticShare {
        owner: p,
        lo: parts[p.index()].clone(),
        hi: parts[p.next().index()].clone(),
    })
}

/// Collect `(x_1, x_2, x_3)` from two or more replicated shares.
fn gather<'a>(
    shares: impl Iterator<Item = (PartyId, &'a RingTensor, &'a RingTensor)>,
    eq_name: &str,
) -> Result<[RingTensor; 3]> {
    let mut parts: [Option<&RingTensor>; 3] = [None, None, None];
    let mut seen = [false; 3];
    for (owner, lo, hi) in shares {
        if seen[owner.index()] {
            continue;
        }
        seen[owner.index()] = true;
        for (slot, t) in [(owner.index(), lo), (owner.next().index(), hi)] {
            match parts[slot] {
                Some(prev) if prev != t => {
                    return Err(Error::Integrity(format!("{eq_name} component x_{} disagrees between holders", slot + 1)))
                }
                Some(_) => {}
                None => parts[slot] = Some(t),
            }
        }
    }
    let distinct = seen.iter().filter(|&&s| s).count();
    if distinct < 2 {
        return Err(Error::Threshold(distinct));
    }
    let [a, b, c] = parts;
    match (a, b, c) {
        (Some(a), Some(b), Some(c)) => Ok([a.clone(), b.clone(), c.clone()]),
        _ => Err(Error::Threshold(distinct)),
    }
}

pub fn reconstruct(shares: &[&ArithmeticShare]) -> Result<RingTensor> {
    let [a, b, c] = gather(shares.iter().map(|s| (s.owner, &s.lo, &s.hi)), "arithmetic")?;
    ring_add(&ring_add(&a, &b)?, &c)
}

pub fn reconstruct_additive(shares: &[&AdditiveShare]) -> Result<RingTensor> {
    let mut seen = [false; 3];
    for s in shares {
        seen[s.owner.index()] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Threshold(seen.iter().filter(|&&s| s).count()));
    }
    let mut acc = RingTensor::zeros(shares[0].shape());
    for s in shares.iter().take(3) {
        acc = ring_add(&acc, &s.val)?;
    }
    Ok(acc)
}

/// Dealer XOR sharing of full 64-bit words.
pub fn xor_share<R: Rng + ?Sized>(x: &RingTensor, rng: &mut R) -> [BinaryShare; 3] {
    let shape = x.shape();
    let x1 = RingTensor::from_fn(shape, |_| rng.gen());
    let x2 = RingTensor::from_fn(shape, |_| rng.gen());
    let x3 = RingTensor::from_fn(shape, |i| x.data()[i] ^ x1.data()[i] ^ x2.data()[i]);
    let parts = [x1, x2, x3];
    PartyId::ALL.map(|p| BinaryShare {
        owner: p,
        lo: parts[p.index()].clone(),
        hi: parts[p.next().index()].clone(),
        bits: 64,
    })
}

/// The trivial sharing `(x, 0, 0)` of a word known to the holders of slot 1.
pub fn xor_embed(x: &RingTensor) -> [BinaryShare; 3] {
    let zero = RingTensor::zeros(x.shape());
    let parts = [x.clone(), zero.clone(), zero];
    PartyId::ALL.map(|p| BinaryShare {
        owner: p,
        lo: parts[p.index()].clone(),
        hi: parts[p.next().index()].clone(),
        bits: 64,
    })
}

pub fn xor_reconstruct(shares: &[&BinaryShare]) -> Result<RingTensor> {
    let [a, b, c] = gather(shares.iter().map(|s| (s.owner, &s.lo, &s.hi)), "binary")?;
    a.zip_map(&b, "xor", |x, y| x ^ y)?.zip_map(&c, "xor", |x, y| x ^ y)
}
