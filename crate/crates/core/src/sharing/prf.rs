//! AES-based PRF and the per-party key set used for correlated randomness.
//!
//! Party `P_i` samples `k_i` and sends it to `P_{i+1}`, so `P_i` holds
//! `(k_i, k_{i-1})`. Every draw is addressed by a purpose tag and a counter;
//! all three parties advance counters in lockstep, so the same
//! `(key, purpose, counter)` input yields identical output on both holders.
//!
//! PRF input block: `LE64(purpose | counter << 16) || LE64(block_index)`.
//! Each AES block yields two little-endian words.

use std::collections::HashMap;

use aes::cipher::{Array, BlockCipherEncrypt, KeyInit};
use aes::Aes128;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sharing::PartyId;

pub type SessionId = [u8; 16];
pub type RawKey = [u8; 16];

const MAX_COUNTER: u64 = (1 << 48) - 1;
const BATCH_BLOCKS: usize = 512;

/// Purpose tags; one per protocol family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u16)]
pub enum Purpose {
    Input = 1,
    Mul = 2,
    Truncate = 3,
    A2b = 4,
    And = 5,
    Reshare = 6,
    Test = 0xfff0,
}

impl Purpose {
    pub const ALL: [Purpose; 7] = [
        Purpose::Input,
        Purpose::Mul,
        Purpose::Truncate,
        Purpose::A2b,
        Purpose::And,
        Purpose::Reshare,
        Purpose::Test,
    ];
}

/// A keyed pseudorandom function producing 64-bit words.
#[derive(Clone)]
pub struct Prf {
    cipher: Aes128,
}

impl std::fmt::Debug for Prf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Prf(..)")
    }
}

impl Prf {
    /// Bind a raw key to a session so keys never repeat across runs.
    pub fn new(raw: &RawKey, session: &SessionId) -> Self {
        let mut h = Sha256::new();
        h.update(b"trinet-prf-v1");
        h.update(session);
        h.update(raw);
        let digest = h.finalize();
        let mut key = [0u8; 16];
        key.copy_from_slice(&digest[..16]);
        Prf { cipher: Aes128::new(&key.into()) }
    }

    /// Fill `out` with the stream for `(purpose, counter)`.
    pub fn fill(&self, purpose: Purpose, counter: u64, out: &mut [u64]) {
        assert!(counter <= MAX_COUNTER, "PRF counter exceeds 48 bits");
        let tag = (purpose as u64) | (counter << 16);
        let mut blocks = vec![Array::<u8, aes::cipher::consts::U16>::default(); BATCH_BLOCKS];
        let mut index = 0u64;
        for chunk in out.chunks_mut(2 * BATCH_BLOCKS) {
            let nblocks = chunk.len().div_ceil(2);
            for b in blocks[..nblocks].iter_mut() {
                b[..8].copy_from_slice(&tag.to_le_bytes());
                b[8..].copy_from_slice(&index.to_le_bytes());
                index += 1;
            }
            self.cipher.encrypt_blocks(&mut blocks[..nblocks]);
            for (words, b) in chunk.chunks_mut(2).zip(&blocks[..nblocks]) {
                for (k, w) in words.iter_mut().enumerate() {
                    *w = u64::from_le_bytes(b[8 * k..8 * k + 8].try_into().expect("8-byte slice"));
                }
            }
        }
    }

    pub fn words(&self, purpose: Purpose, counter: u64, n: usize) -> Vec<u64> {
        let mut out = vec![0u64; n];
        self.fill(purpose, counter, &mut out);
        out
    }
}

/// Which of a party's two keys a draw uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KeySlot {
    /// `k_i`, shared with the successor.
    Own,
    /// `k_{i-1}`, shared with the predecessor.
    Pred,
}

impl KeySlot {
    fn name(self) -> &'static str {
        match self {
            KeySlot::Own => "own",
            KeySlot::Pred => "predecessor",
        }
    }
}

/// A party's two PRF keys with lockstep counters and a reuse ledger.
#[derive(Debug)]
pub struct PrfKeySet {
    me: PartyId,
    own: Prf,
    pred: Prf,
    counters: HashMap<Purpose, u64>,
    // Next unused counter per (key, purpose); draws must move forward.
    ledger: HashMap<(KeySlot, Purpose), u64>,
}

impl PrfKeySet {
    pub fn new(me: PartyId, own: &RawKey, pred: &RawKey, session: &SessionId) -> Self {
        PrfKeySet {
            me,
            own: Prf::new(own, session),
            pred: Prf::new(pred, session),
            counters: HashMap::new(),
            ledger: HashMap::new(),
        }
    }

    pub fn party(&self) -> PartyId {
        self.me
    }

    /// Allocate the next counter for `purpose`. Every party must call this at
    /// the same protocol step, whether or not it evaluates the PRF.
    pub fn next_counter(&mut self, purpose: Purpose) -> u64 {
        let c = self.counters.entry(purpose).or_insert(0);
        let j = *c;
        *c += 1;
        j
    }

    pub fn counter(&self, purpose: Purpose) -> u64 {
        self.counters.get(&purpose).copied().unwrap_or(0)
    }

    /// Evaluate one key, refusing counters already consumed on it.
    pub fn stream(&mut self, slot: KeySlot, purpose: Purpose, j: u64, n: usize) -> Result<Vec<u64>> {
        let next = self.ledger.entry((slot, purpose)).or_insert(0);
        if j < *next {
            return Err(Error::Freshness { slot: slot.name(), purpose, counter: j });
        }
        *next = j + 1;
        let prf = match slot {
            KeySlot::Own => &self.own,
            KeySlot::Pred => &self.pred,
        };
        Ok(prf.words(purpose, j, n))
    }

    /// Additive zero share `F(k_i, j) - F(k_{i-1}, j)`.
    pub fn zero_share(&mut self, purpose: Purpose, j: u64, n: usize) -> Result<Vec<u64>> {
        let mut a = self.stream(KeySlot::Own, purpose, j, n)?;
        let b = self.stream(KeySlot::Pred, purpose, j, n)?;
        a.iter_mut().zip(&b).for_each(|(x, &y)| *x = x.wrapping_sub(y));
        Ok(a)
    }

    /// XOR zero share `F(k_i, j) ^ F(k_{i-1}, j)`.
    pub fn zero_share_xor(&mut self, purpose: Purpose, j: u64, n: usize) -> Result<Vec<u64>> {
        let mut a = self.stream(KeySlot::Own, purpose, j, n)?;
        let b = self.stream(KeySlot::Pred, purpose, j, n)?;
        a.iter_mut().zip(&b).for_each(|(x, &y)| *x ^= y);
        Ok(a)
    }

    /// Randomness common to this party and a neighbour.
    pub fn pairwise_random(&mut self, peer: PartyId, purpose: Purpose, j: u64, n: usize) -> Result<Vec<u64>> {
        let slot = if peer == self.me.next() && peer != self.me {
            KeySlot::Own
        } else if peer == self.me.prev() && peer != self.me {
            KeySlot::Pred
        } else {
            return Err(Error::Topology { me: self.me, peer });
        };
        self.stream(slot, purpose, j, n)
    }
}
