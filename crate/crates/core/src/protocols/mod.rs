//! Interactive sub-protocols over replicated shares.
//!
//! Every function takes the calling party's context and must be invoked by
//! all three parties at the same step with matching public arguments.

pub mod approx;
pub mod arith;
pub mod binary;
pub mod linear;
pub mod nonlinear;

pub use approx::{division, exp_approx, reciprocal, softmax, ExpConfig, ReciprocalConfig};
pub use arith::{input, mul, mul_fixed, mul_public_real, reshare, reveal, truncate};
pub use binary::{a2b, and, and_many, bit_inject, msb};
pub use linear::{avgpool_shares, conv2d_shares, divide_public, matmul_shares, sum_pool_shares};
pub use nonlinear::{compare, drelu, max_tree, relu, relu_with_mask};
