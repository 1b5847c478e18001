mod common;

use common::*;
use proptest::prelude::*;
use trinet::protocols::{input, reveal, truncate};
use trinet::ring::{
    bilinear_exact, fx_decode, fx_encode, limb_decompose, limb_recompose, ring_add, ring_mul_elem, ring_neg, ring_shift_arith,
    ring_sub, BilinearOpSpec, FixedPointConfig, RingTensor,
};
use trinet::sharing::{reconstruct, share, xor_reconstruct, xor_share, PartyId};
use trinet::{run_local, Party};

fn ring_vec(len: usize) -> impl Strategy<Value = RingTensor> {
    prop::collection::vec(any::<u64>(), len).prop_map(RingTensor::from_vec)
}

fn pair(max: usize) -> impl Strategy<Value = (RingTensor, RingTensor)> {
    (1..=max).prop_flat_map(|n| (ring_vec(n), ring_vec(n)))
}

proptest! {
    #[test]
    fn addition_is_a_group((a, b) in pair(64)) {
        prop_assert_eq!(ring_sub(&ring_add(&a, &b).unwrap(), &b).unwrap(), a.clone());
        prop_assert_eq!(ring_add(&a, &b).unwrap(), ring_add(&b, &a).unwrap());
        prop_assert!(ring_add(&a, &ring_neg(&a)).unwrap().data().iter().all(|&v| v == 0));
    }

    #[test]
    fn multiplication_distributes((a, b) in pair(64), c in any::<u64>()) {
        let cs = RingTensor::filled(a.shape(), c);
        let lhs = ring_mul_elem(&ring_add(&a, &b).unwrap(), &cs).unwrap();
        let rhs = ring_add(&ring_mul_elem(&a, &cs).unwrap(), &ring_mul_elem(&b, &cs).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn limbs_roundtrip(a in (1usize..64).prop_flat_map(ring_vec)) {
        prop_assert_eq!(limb_recompose(&limb_decompose(&a)).unwrap(), a);
    }

    #[test]
    fn arithmetic_shift_is_floor_division(v in any::<i64>(), bits in 0u32..63) {
        let t = RingTensor::from_vec(vec![v as u64]);
        prop_assert_eq!(ring_shift_arith(&t, bits).data()[0] as i64, v.div_euclid(1i64 << bits));
    }

    #[test]
    fn fixed_point_roundtrip_is_within_half_an_ulp(x in -1.0e6f64..1.0e6, t in 1u32..=30) {
        let cfg = FixedPointConfig::new(t).unwrap();
        let back = fx_decode(fx_encode(x, cfg).unwrap(), cfg);
        prop_assert!((back - x).abs() <= 0.5 / cfg.scale() + 1e-9 * x.abs());
    }

    #[test]
    fn exact_matmul_matches_wrapping_loops(m in 1usize..6, k in 1usize..40, n in 1usize..6, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let a = RingTensor::from_fn(&[m, k], |_| rng.gen());
        let b = RingTensor::from_fn(&[k, n], |_| rng.gen());
        let got = bilinear_exact(&a, &b, &BilinearOpSpec::matmul(m, k, n)).unwrap();
        for i in 0..m {
            for j in 0..n {
                let want = (0..k).fold(0u64, |acc, l| acc.wrapping_add(a.data()[i * k + l].wrapping_mul(b.data()[l * n + j])));
                prop_assert_eq!(got.data()[i * n + j], want);
            }
        }
    }

    #[test]
    fn any_two_shares_reconstruct(x in (1usize..32).prop_flat_map(ring_vec), seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let s = share(&x, &mut rng);
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            prop_assert_eq!(reconstruct(&[&s[i], &s[j]]).unwrap(), x.clone());
        }
        let b = xor_share(&x, &mut rng);
        prop_assert_eq!(xor_reconstruct(&[&b[2], &b[0]]).unwrap(), x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn private_truncation_is_within_one_unit(vals in prop::collection::vec(-(1i64 << 60)..(1i64 << 60), 1..200), bits in 1u32..=30) {
        let x = RingTensor::from_vec(vals.iter().map(|&v| v as u64).collect());
        let (z, _) = run_arith(17, &[x], |p, s| truncate(p, &s[0], bits));
        for (&v, &got) in vals.iter().zip(z.data()) {
            let d = got as i64 - (v >> bits);
            prop_assert!(d == 0 || d == 1, "{} >> {}: off by {}", v, bits, d);
        }
    }
}

/// Count one-bits per position and a byte histogram over everything a
/// single party holds after the owner inputs an all-zero tensor.
fn view_of(viewer: PartyId, n: usize) -> Vec<u64> {
    let secret = RingTensor::zeros(&[n]);
    let views = run_local(23, cfg(), |p: &mut Party| {
        let s = input(p, PartyId::P1, (p.id() == PartyId::P1).then_some(&secret), &[n])?;
        // Sanity: the sharing still opens to zero.
        assert!(reveal(p, &s)?.data().iter().all(|&v| v == 0));
        Ok([s.lo.into_data(), s.hi.into_data()].concat())
    })
    .unwrap();
    views[viewer.index()].clone()
}

#[test]
fn input_shares_look_uniform_to_non_owners() {
    let n = 20_000;
    for viewer in [PartyId::P2, PartyId::P3] {
        let words = view_of(viewer, n);
        let total = words.len() as f64;
        // Every bit position is a fair coin: within 5 standard deviations.
        for bit in 0..64 {
            let ones = words.iter().filter(|&&w| (w >> bit) & 1 == 1).count() as f64;
            let z = (ones - total / 2.0) / (total / 4.0).sqrt();
            assert!(z.abs() < 5.0, "{viewer}: bit {bit} has z = {z:.2}");
        }
        // Low byte histogram: chi-square with 255 degrees of freedom stays
        // far below 346 (p ≈ 1e-4) for uniform data.
        let mut hist = [0f64; 256];
        for &w in &words {
            hist[(w & 0xff) as usize] += 1.0;
        }
        let expect = total / 256.0;
        let chi2: f64 = hist.iter().map(|&h| (h - expect).powi(2) / expect).sum();
        assert!(chi2 < 346.0, "{viewer}: chi-square {chi2:.1}");
    }
}
