mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use trinet::protocols::*;
use trinet::ring::{ring_mul_elem, RingTensor};

#[test]
fn mul_matches_ring_product_with_one_round() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let a = RingTensor::from_fn(&[100], |_| rng.gen());
    let b = RingTensor::from_fn(&[100], |_| rng.gen());
    let (z, stats) = run_arith(1, &[a.clone(), b.clone()], |p, s| mul(p, &s[0], &s[1]));
    assert_eq!(z, ring_mul_elem(&a, &b).unwrap());
    for s in &stats {
        assert_eq!(s.rounds, 1);
        assert_eq!(s.total_payload_sent(), 800);
    }
}

#[test]
fn truncate_is_exact_on_multiples_and_within_one_ulp() {
    let (z, stats) = run_arith(2, &[RingTensor::zeros(&[1000])], |p, s| truncate(p, &s[0], 20));
    assert!(z.data().iter().all(|&v| v == 0));
    assert!(stats.iter().all(|s| s.rounds == 2));

    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let x: Vec<i64> = (0..20000).map(|_| rng.gen_range(-(1i64 << 61)..(1i64 << 61))).collect();
    let t = RingTensor::from_vec(x.iter().map(|&v| v as u64).collect());
    let (z, _) = run_arith(3, &[t], |p, s| truncate(p, &s[0], 20));
    for (&v, &got) in x.iter().zip(z.data()) {
        let floor = v >> 20;
        let got = got as i64;
        assert!(got == floor || got == floor + 1, "{v}: {got} vs {floor}");
        if v & 0xfffff == 0 {
            assert_eq!(got, floor);
        }
    }
}

#[test]
fn fixed_point_product_decodes() {
    let a = encode(&[2.5]);
    let b = encode(&[2.0]);
    let (z, _) = run_arith(4, &[a, b], |p, s| mul_fixed(p, &s[0], &s[1]));
    assert!((decode(&z)[0] - 5.0).abs() <= 2f64.powi(-20));
}

#[test]
fn a2b_and_msb_match_integers() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut vals: Vec<u64> = (0..5000).map(|_| rng.gen()).collect();
    vals.extend([0, 1, u64::MAX, 1 << 63, (1 << 63) - 1]);
    let x = RingTensor::from_vec(vals.clone());
    let (b, stats) = run_binary(5, &[x.clone()], |p, s| a2b(p, &s[0]));
    assert_eq!(b, x);
    assert!(stats.iter().all(|s| s.rounds == 7), "{:?}", stats[0].rounds_by_label);
    let (m, _) = run_binary(6, &[x], |p, s| msb(p, &s[0]));
    for (&v, &bit) in vals.iter().zip(m.data()) {
        assert_eq!(bit, v >> 63);
    }
}

#[test]
fn relu_is_exact_and_costs_ten_rounds() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut vals: Vec<i64> = (0..5000).map(|_| rng.gen_range(-(1i64 << 40)..(1i64 << 40))).collect();
    vals.push(0);
    let x = RingTensor::from_vec(vals.iter().map(|&v| v as u64).collect());
    let (y, stats) = run_arith(7, &[x.clone()], |p, s| relu(p, &s[0]));
    for (&v, &r) in vals.iter().zip(y.data()) {
        assert_eq!(r as i64, v.max(0));
    }
    assert!(stats.iter().all(|s| s.rounds == 10));
    let (d, _) = run_arith(8, &[x], |p, s| drelu(p, &s[0]));
    for (&v, &r) in vals.iter().zip(d.data()) {
        assert_eq!(r, u64::from(v >= 0));
    }
}

#[test]
fn max_tree_of_rows() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    for width in [1usize, 2, 3, 4, 7, 10] {
        let rows = 50;
        let vals: Vec<f64> = (0..rows * width).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let x = cfg().encode_tensor(&[rows, width], &vals).unwrap();
        let (m, _) = run_arith(10, &[x.clone()], |p, s| max_tree(p, &s[0]));
        for r in 0..rows {
            let want = x.data()[r * width..(r + 1) * width].iter().map(|&v| v as i64).max().unwrap();
            assert_eq!(m.data()[r] as i64, want);
        }
    }
}

#[test]
fn exp_reciprocal_softmax_are_accurate() {
    let xs: Vec<f64> = vec![0.0, -1.0, -0.5, -3.0, -10.0, -45.0];
    let (e, _) = run_arith(11, &[encode(&xs)], |p, s| exp_approx(p, &s[0], ExpConfig::default()));
    let e = decode(&e);
    assert!((e[0] - 1.0).abs() <= 9.0 * 2f64.powi(-20));
    assert!((e[1] - (511f64 / 512.0).powi(512)).abs() < 1e-5, "{}", e[1]);
    for (x, got) in xs.iter().zip(&e) {
        assert!((got - x.exp()).abs() <= 6e-4);
    }

    let ys: Vec<f64> = vec![1.0, 2.0, 7.3, 100.0, 200.0];
    let (r, _) = run_arith(12, &[encode(&ys)], |p, s| reciprocal(p, &s[0], ReciprocalConfig::default()));
    for (y, got) in ys.iter().zip(decode(&r)) {
        assert!((got - 1.0 / y).abs() <= 2e-4, "1/{y}: {got}");
    }

    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let rows = 20;
    let z: Vec<f64> = (0..rows * 10).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let zt = cfg().encode_tensor(&[rows, 10], &z).unwrap();
    let (s, _) = run_arith(13, &[zt], |p, s| softmax(p, &s[0], ExpConfig::default(), ReciprocalConfig::default()));
    let s = decode(&s);
    for r in 0..rows {
        let row = &z[r * 10..(r + 1) * 10];
        let mx = row.iter().cloned().fold(f64::MIN, f64::max);
        // Double-precision softmax built on the same (1 + x/m)^m exponential;
        // against the true exponential the approximation alone differs by up
        // to ~1.9e-3 on this input range.
        let fm = |x: f64| (1.0 + x / 512.0).powi(512);
        let den: f64 = row.iter().map(|v| fm(v - mx)).sum();
        for c in 0..10 {
            let want = fm(row[c] - mx) / den;
            assert!((s[r * 10 + c] - want).abs() <= 1e-3, "{} vs {want}", s[r * 10 + c]);
        }
    }
}
