#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use trinet::ring::{FixedPointConfig, RingTensor};
use trinet::sharing::{reconstruct, share, xor_reconstruct, ArithmeticShare, BinaryShare};
use trinet::transport::CommStats;
use trinet::{run_local, Party, Result};

pub fn cfg() -> FixedPointConfig {
    FixedPointConfig::default()
}

pub fn encode(values: &[f64]) -> RingTensor {
    cfg().encode_tensor(&[values.len()], values).unwrap()
}

pub fn decode(t: &RingTensor) -> Vec<f64> {
    cfg().decode_tensor(t)
}

/// Deal `inputs` with a seeded dealer, run `f` as every party and
/// reconstruct the arithmetic output from all three shares.
pub fn run_arith<F>(seed: u64, inputs: &[RingTensor], f: F) -> (RingTensor, [CommStats; 3])
where
    F: Fn(&mut Party, Vec<ArithmeticShare>) -> Result<ArithmeticShare> + Sync,
{
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let dealt: Vec<[ArithmeticShare; 3]> = inputs.iter().map(|x| share(x, &mut rng)).collect();
    let out = run_local(seed, cfg(), |p| {
        let mine: Vec<ArithmeticShare> = dealt.iter().map(|s| s[p.id().index()].clone()).collect();
        let before = p.stats().clone();
        let y = f(p, mine)?;
        Ok((y, p.stats().since(&before)))
    })
    .unwrap();
    let [(a, sa), (b, sb), (c, sc)] = out;
    (reconstruct(&[&a, &b, &c]).unwrap(), [sa, sb, sc])
}

pub fn run_binary<F>(seed: u64, inputs: &[RingTensor], f: F) -> (RingTensor, [CommStats; 3])
where
    F: Fn(&mut Party, Vec<ArithmeticShare>) -> Result<BinaryShare> + Sync,
{
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xb17);
    let dealt: Vec<[ArithmeticShare; 3]> = inputs.iter().map(|x| share(x, &mut rng)).collect();
    let out = run_local(seed, cfg(), |p| {
        let mine: Vec<ArithmeticShare> = dealt.iter().map(|s| s[p.id().index()].clone()).collect();
        let before = p.stats().clone();
        let y = f(p, mine)?;
        Ok((y, p.stats().since(&before)))
    })
    .unwrap();
    let [(a, sa), (b, sb), (c, sc)] = out;
    (xor_reconstruct(&[&a, &b, &c]).unwrap(), [sa, sb, sc])
}
