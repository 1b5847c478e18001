//! Error type shared by every layer of the crate.

use thiserror::Error;

use crate::sharing::PartyId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("value {value} is outside the fixed-point range for {frac_bits} fractional bits")]
    Range { value: f64, frac_bits: u32 },

    #[error("invalid fixed-point configuration: {0}")]
    FixedConfig(String),

    #[error("bilinear op accumulates {count} products per output, above the exact limit of 2^20")]
    Exactness { count: usize },

    #[error("need shares from at least two distinct parties to reconstruct (got {0})")]
    Threshold(usize),

    #[error("replicated shares are inconsistent: {0}")]
    Integrity(String),

    #[error("PRF counter {counter} was already consumed for purpose {purpose:?} on the {slot} key")]
    Freshness {
        slot: &'static str,
        purpose: crate::sharing::prf::Purpose,
        counter: u64,
    },

    #[error("{me} and {peer} do not share a pairwise key")]
    Topology { me: PartyId, peer: PartyId },

    #[error("binary share is not a single-bit sharing: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("frame of {0} bytes exceeds the 2^32 byte limit")]
    Frame(u64),

    #[error("handshake rejected: {0}")]
    Handshake(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("missing activation cache for layer {0}")]
    MissingCache(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn transport(msg: impl Into<String>) -> Self {
        Error::Transport(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
