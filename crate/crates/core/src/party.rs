//! Per-party execution context: identity, PRF keys, network and encoding.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ring::FixedPointConfig;
use crate::sharing::prf::{Purpose, PrfKeySet, RawKey, SessionId};
use crate::sharing::PartyId;
use crate::transport::{local_mesh, CommStats, Network, Transport};

pub struct Party {
    id: PartyId,
    keys: PrfKeySet,
    net: Network,
    fixed: FixedPointConfig,
}

/// Session id derived from a run seed, used when none is given explicitly.
pub fn session_from_seed(seed: u64) -> SessionId {
    let digest = Sha256::new().chain_update(b"trinet-session").chain_update(seed.to_le_bytes()).finalize();
    let mut s = [0u8; 16];
    s.copy_from_slice(&digest[..16]);
    s
}

/// Session id derived from an operator-chosen label.
pub fn session_from_label(label: &str) -> SessionId {
    let digest = Sha256::new().chain_update(b"trinet-session-label").chain_update(label.as_bytes()).finalize();
    let mut s = [0u8; 16];
    s.copy_from_slice(&digest[..16]);
    s
}

fn sample_key(seed: u64, id: PartyId, session: &SessionId) -> RawKey {
    let digest = Sha256::new()
        .chain_update(b"trinet-key")
        .chain_update(seed.to_le_bytes())
        .chain_update([id.get()])
        .chain_update(session)
        .finalize();
    let mut rng = ChaCha20Rng::from_seed(digest.into());
    let mut k = [0u8; 16];
    rng.fill_bytes(&mut k);
    k
}

impl Party {
    /// Sample `k_i`, send it to the successor and receive `k_{i-1}`.
    pub fn setup(
        id: PartyId,
        transport: Box<dyn Transport>,
        seed: u64,
        session: SessionId,
        fixed: FixedPointConfig,
    ) -> Result<Self> {
        let mut net = Network::new(id, transport);
        let own = sample_key(seed, id, &session);
        let words = vec![
            u64::from_le_bytes(own[..8].try_into().expect("8 bytes")),
            u64::from_le_bytes(own[8..].try_into().expect("8 bytes")),
        ];
        net.send(id.next(), words)?;
        let got = net.recv_exact(id.prev(), 2)?;
        net.round_mark("setup");
        let mut pred = [0u8; 16];
        pred[..8].copy_from_slice(&got[0].to_le_bytes());
        pred[8..].copy_from_slice(&got[1].to_le_bytes());
        Ok(Party { id, keys: PrfKeySet::new(id, &own, &pred, &session), net, fixed })
    }

    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn fixed(&self) -> FixedPointConfig {
        self.fixed
    }

    /// Switch the fixed-point precision for subsequent protocol calls.
    /// Every party must switch at the same point.
    pub fn set_fixed(&mut self, fixed: FixedPointConfig) {
        self.fixed = fixed;
    }

    pub fn frac_bits(&self) -> u32 {
        self.fixed.frac_bits()
    }

    pub fn keys(&mut self) -> &mut PrfKeySet {
        &mut self.keys
    }

    pub fn net(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn stats(&self) -> &CommStats {
        self.net.stats()
    }

    /// Allocate a counter and return this party's additive zero share.
    pub fn fresh_zero_share(&mut self, purpose: Purpose, n: usize) -> Result<Vec<u64>> {
        let j = self.keys.next_counter(purpose);
        self.keys.zero_share(purpose, j, n)
    }

    pub fn fresh_zero_share_xor(&mut self, purpose: Purpose, n: usize) -> Result<Vec<u64>> {
        let j = self.keys.next_counter(purpose);
        self.keys.zero_share_xor(purpose, j, n)
    }
}

/// Run the same routine as all three parties over the in-process backend.
///
/// Results come back indexed by party. If any party fails, its channels
/// close, the others fail on their next receive, and the first error in
/// party order is returned.
pub fn run_local<R, F>(seed: u64, fixed: FixedPointConfig, f: F) -> Result<[R; 3]>
where
    R: Send,
    F: Fn(&mut Party) -> Result<R> + Sync,
{
    let session = session_from_seed(seed);
    let mesh = local_mesh();
    let f = &f;
    let results: Vec<Result<R>> = std::thread::scope(|scope| {
        let handles: Vec<_> = mesh
            .into_iter()
            .zip(PartyId::ALL)
            .map(|(transport, id)| {
                std::thread::Builder::new()
                    .name(format!("party-{id}"))
                    .stack_size(32 << 20)
                    .spawn_scoped(scope, move || {
                        let mut party = Party::setup(id, Box::new(transport), seed, session, fixed)?;
                        f(&mut party)
                    })
                    .expect("spawn party thread")
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::transport("party thread panicked"))))
            .collect()
    });
    let mut out = Vec::with_capacity(3);
    let mut first_err = None;
    for r in results {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                // Prefer the root cause over the hang-ups it triggers elsewhere.
                let replace = match (&first_err, &e) {
                    (None, _) => true,
                    (Some(Error::Transport(_)), e) => !matches!(e, Error::Transport(_)),
                    _ => false,
                };
                if replace {
                    first_err = Some(e);
                }
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    out.try_into().map_err(|_| Error::transport("missing party result"))
}
