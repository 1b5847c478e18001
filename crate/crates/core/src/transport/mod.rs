//! Point-to-point channels between the three parties, with byte and round
//! accounting.
//!
//! Every message is a frame: an 8-byte little-endian payload length followed
//! by the payload as little-endian 64-bit words. The in-process backend
//! passes word vectors directly but accounts for the same framed size, so
//! both backends report identical counters.

pub mod local;
pub mod tcp;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sharing::PartyId;

pub use local::{local_mesh, LocalTransport};
pub use tcp::{TcpConfig, TcpTransport};

/// Largest payload a frame may carry.
pub const MAX_FRAME_BYTES: u64 = 1 << 32;
pub const FRAME_HEADER_BYTES: u64 = 8;

/// A reliable, ordered channel to each of the two peers.
pub trait Transport: Send {
    fn send(&mut self, to: PartyId, words: Vec<u64>) -> Result<()>;
    fn recv(&mut self, from: PartyId) -> Result<Vec<u64>>;
}

/// Check the payload size of a frame carrying `words` words.
pub fn check_frame(words: usize) -> Result<u64> {
    let bytes = words as u64 * 8;
    if bytes > MAX_FRAME_BYTES {
        return Err(Error::Frame(bytes));
    }
    Ok(bytes)
}

pub fn encode_frame(words: &[u64]) -> Result<Vec<u8>> {
    let payload = check_frame(words.len())?;
    let mut buf = Vec::with_capacity((FRAME_HEADER_BYTES + payload) as usize);
    buf.extend_from_slice(&payload.to_le_bytes());
    for w in words {
        buf.extend_from_slice(&w.to_le_bytes());
    }
    Ok(buf)
}

/// Decode the payload bytes of a frame whose header has been read.
pub fn decode_payload(bytes: &[u8]) -> Result<Vec<u64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::format(format!("frame payload of {} bytes is not whole words", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

/// Communication counters for one party, indexed by peer.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommStats {
    /// Framed bytes (header + payload) sent to each party.
    pub bytes_sent: [u64; 3],
    pub bytes_received: [u64; 3],
    /// Payload bytes only.
    pub payload_sent: [u64; 3],
    pub payload_received: [u64; 3],
    pub messages_sent: [u64; 3],
    pub messages_received: [u64; 3],
    /// Communication rounds marked by protocols.
    pub rounds: u64,
    pub rounds_by_label: BTreeMap<String, u64>,
}

impl CommStats {
    pub fn total_bytes_sent(&self) -> u64 {
        self.bytes_sent.iter().sum()
    }

    pub fn total_bytes_received(&self) -> u64 {
        self.bytes_received.iter().sum()
    }

    pub fn total_payload_sent(&self) -> u64 {
        self.payload_sent.iter().sum()
    }

    pub fn total_messages_sent(&self) -> u64 {
        self.messages_sent.iter().sum()
    }

    /// Counter deltas since an earlier snapshot.
    pub fn since(&self, earlier: &CommStats) -> CommStats {
        let sub = |a: [u64; 3], b: [u64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let mut labels = BTreeMap::new();
        for (k, v) in &self.rounds_by_label {
            let d = v - earlier.rounds_by_label.get(k).copied().unwrap_or(0);
            if d > 0 {
                labels.insert(k.clone(), d);
            }
        }
        CommStats {
            bytes_sent: sub(self.bytes_sent, earlier.bytes_sent),
            bytes_received: sub(self.bytes_received, earlier.bytes_received),
            payload_sent: sub(self.payload_sent, earlier.payload_sent),
            payload_received: sub(self.payload_received, earlier.payload_received),
            messages_sent: sub(self.messages_sent, earlier.messages_sent),
            messages_received: sub(self.messages_received, earlier.messages_received),
            rounds: self.rounds - earlier.rounds,
            rounds_by_label: labels,
        }
    }
}

/// A party's transport together with its counters.
pub struct Network {
    me: PartyId,
    transport: Box<dyn Transport>,
    stats: CommStats,
}

impl Network {
    pub fn new(me: PartyId, transport: Box<dyn Transport>) -> Self {
        Network { me, transport, stats: CommStats::default() }
    }

    pub fn party(&self) -> PartyId {
        self.me
    }

    fn check_peer(&self, peer: PartyId) -> Result<()> {
        if peer == self.me {
            return Err(Error::Topology { me: self.me, peer });
        }
        Ok(())
    }

    pub fn send(&mut self, to: PartyId, words: Vec<u64>) -> Result<()> {
        self.check_peer(to)?;
        let payload = check_frame(words.len())?;
        self.transport.send(to, words)?;
        let i = to.index();
        self.stats.bytes_sent[i] += FRAME_HEADER_BYTES + payload;
        self.stats.payload_sent[i] += payload;
        self.stats.messages_sent[i] += 1;
        Ok(())
    }

    pub fn recv(&mut self, from: PartyId) -> Result<Vec<u64>> {
        self.check_peer(from)?;
        let words = self.transport.recv(from)?;
        let payload = words.len() as u64 * 8;
        let i = from.index();
        self.stats.bytes_received[i] += FRAME_HEADER_BYTES + payload;
        self.stats.payload_received[i] += payload;
        self.stats.messages_received[i] += 1;
        Ok(words)
    }

    /// Receive exactly `n` words or fail.
    pub fn recv_exact(&mut self, from: PartyId, n: usize) -> Result<Vec<u64>> {
        let words = self.recv(from)?;
        if words.len() != n {
            return Err(Error::transport(format!("expected {n} words from {from}, got {}", words.len())));
        }
        Ok(words)
    }

    /// Record the end of one communication round.
    pub fn round_mark(&mut self, label: &str) {
        self.stats.rounds += 1;
        *self.stats.rounds_by_label.entry(label.to_string()).or_insert(0) += 1;
    }

    pub fn stats(&self) -> &CommStats {
        &self.stats
    }
}
