//! Three-party replicated secret sharing for private convolutional network
//! inference and training.
//!
//! The crate is layered bottom-up:
//!
//! * [`ring`] — tensors over Z_2^64, fixed-point encoding and the exact
//!   limb-decomposed bilinear engine built on `f64` GEMM;
//! * [`sharing`] — replicated arithmetic/binary sharings and PRF-derived
//!   correlated randomness;
//! * [`transport`] — framed point-to-point channels (in-process and TCP)
//!   with byte and round accounting;
//! * [`protocols`] — multiplication, truncation, conversions, comparisons
//!   and the approximations needed for softmax;
//! * [`nn`] — layer graphs, private forward/backward passes, SGD and the
//!   plaintext oracles;
//! * [`data`] — dataset loaders;
//! * [`pipeline`] — end-to-end inference and training workflows.

pub mod data;
pub mod error;
pub mod nn;
pub mod party;
pub mod pipeline;
pub mod protocols;
pub mod ring;
pub mod sharing;
pub mod transport;

pub use error::{Error, Result};
pub use party::{run_local, session_from_label, session_from_seed, Party};
