//! Exact bilinear operations over Z_2^64 evaluated with `f64` matrix products.
//!
//! Both operands are split into four 16-bit limbs. The ring product only
//! needs limb pairs `(i, j)` with `i + j < 4`; the other six land entirely
//! above bit 63. The ten surviving products run as four GEMMs
//! `A_i · [B_0 | … | B_{3-i}]` that read a single packed copy of the `B` limbs
//! through row strides. With at most 2^20 accumulated products every partial
//! sum stays below 2^52, so the float results are exact integers; they are
//! converted to `u64` and combined with wrapping shifts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::geometry::{im2col, rows_to_nchw, ConvGeometry, PoolGeometry};
use crate::ring::limb::{LIMB_BITS, LIMB_COUNT};
use crate::ring::RingTensor;

/// Largest number of products one output element may accumulate.
pub const MAX_ACCUMULATION: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BilinearKind {
    /// `[m, k] · [k, n]`.
    MatMul { m: usize, k: usize, n: usize },
    /// NCHW input against `[out_c, in_c, kh, kw]` weights.
    Conv2d(ConvGeometry),
    /// Per-channel window sum with a `[kernel, kernel]` constant kernel.
    SumPool(PoolGeometry),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BilinearOpSpec {
    pub kind: BilinearKind,
}

impl BilinearOpSpec {
    pub fn matmul(m: usize, k: usize, n: usize) -> Self {
        BilinearOpSpec { kind: BilinearKind::MatMul { m, k, n } }
    }

    pub fn conv2d(g: ConvGeometry) -> Self {
        BilinearOpSpec { kind: BilinearKind::Conv2d(g) }
    }

    pub fn sum_pool(g: PoolGeometry) -> Self {
        BilinearOpSpec { kind: BilinearKind::SumPool(g) }
    }

    /// Products summed into each output element.
    pub fn accumulation_count(&self) -> usize {
        match self.kind {
            BilinearKind::MatMul { k, .. } => k,
            BilinearKind::Conv2d(g) => g.col_cols(),
            BilinearKind::SumPool(g) => g.area(),
        }
    }

    pub fn lhs_shape(&self) -> Vec<usize> {
        match self.kind {
            BilinearKind::MatMul { m, k, .. } => vec![m, k],
            BilinearKind::Conv2d(g) => g.input_shape().to_vec(),
            BilinearKind::SumPool(g) => g.input_shape().to_vec(),
        }
    }

    pub fn rhs_shape(&self) -> Vec<usize> {
        match self.kind {
            BilinearKind::MatMul { k, n, .. } => vec![k, n],
            BilinearKind::Conv2d(g) => g.weight_shape().to_vec(),
            BilinearKind::SumPool(g) => vec![g.kernel, g.kernel],
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self.kind {
            BilinearKind::MatMul { m, n, .. } => vec![m, n],
            BilinearKind::Conv2d(g) => g.output_shape().to_vec(),
            BilinearKind::SumPool(g) => g.output_shape().to_vec(),
        }
    }

    fn validate(&self, a: &RingTensor, b: &RingTensor) -> Result<()> {
        let count = self.accumulation_count();
        if count > MAX_ACCUMULATION {
            return Err(Error::Exactness { count });
        }
        match self.kind {
            BilinearKind::Conv2d(g) => g.validate()?,
            BilinearKind::SumPool(g) => g.validate()?,
            BilinearKind::MatMul { .. } => {}
        }
        if a.shape() != self.lhs_shape() || b.shape() != self.rhs_shape() {
            return Err(Error::shape(format!(
                "operands {:?} and {:?} do not fit {:?}",
                a.shape(),
                b.shape(),
                self.kind
            )));
        }
        Ok(())
    }
}

/// Diagnostics from one exact evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LimbStats {
    /// Largest value produced by any limb-product GEMM.
    pub max_intermediate: f64,
    /// Number of limb products evaluated.
    pub products: usize,
}

/// Which limb pairs to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LimbSchedule {
    /// The ten pairs that can affect the low 64 bits.
    Ring,
    /// All sixteen pairs; the extra six must contribute nothing mod 2^64.
    Full,
}

pub fn bilinear_exact(a: &RingTensor, b: &RingTensor, spec: &BilinearOpSpec) -> Result<RingTensor> {
    bilinear_exact_with_stats(a, b, spec, LimbSchedule::Ring).map(|(t, _)| t)
}

pub fn bilinear_exact_with_stats(
    a: &RingTensor,
    b: &RingTensor,
    spec: &BilinearOpSpec,
    schedule: LimbSchedule,
) -> Result<(RingTensor, LimbStats)> {
    spec.validate(a, b)?;
    let out_shape = spec.output_shape();
    let (data, stats) = match spec.kind {
        BilinearKind::MatMul { m, k, n } => matmul_limbs(a.data(), b.data(), m, k, n, schedule),
        BilinearKind::Conv2d(g) => {
            let cols = im2col(a.data(), &g);
            let wt = RingTensor::new(vec![g.out_channels, g.col_cols()], b.data().to_vec())?.transpose()?;
            let (rows, stats) = matmul_limbs(&cols, wt.data(), g.col_rows(), g.col_cols(), g.out_channels, schedule);
            (rows_to_nchw(&rows, g.batch, g.out_channels, g.out_h(), g.out_w()), stats)
        }
        BilinearKind::SumPool(p) => {
            let g = p.as_depthwise_conv();
            let cols = im2col(a.data(), &g);
            // With one channel the im2col rows are already in NCHW order.
            matmul_limbs(&cols, b.data(), g.col_rows(), g.col_cols(), 1, schedule)
        }
    };
    Ok((RingTensor::new(out_shape, data)?, stats))
}

/// Exact wrapping product of row-major `[m, k]` and `[k, n]` ring matrices.
pub fn matmul_exact(a: &[u64], b: &[u64], m: usize, k: usize, n: usize) -> Result<Vec<u64>> {
    if k > MAX_ACCUMULATION {
        return Err(Error::Exactness { count: k });
    }
    if a.len() != m * k || b.len() != k * n {
        return Err(Error::shape(format!("matmul operands do not match {m}x{k}x{n}")));
    }
    Ok(matmul_limbs(a, b, m, k, n, LimbSchedule::Ring).0)
}

fn limb(v: u64, i: usize) -> f64 {
    ((v >> (LIMB_BITS as usize * i)) & 0xffff) as f64
}

fn matmul_limbs(a: &[u64], b: &[u64], m: usize, k: usize, n: usize, schedule: LimbSchedule) -> (Vec<u64>, LimbStats) {
    let mut out = vec![0u64; m * n];
    let mut stats = LimbStats::default();
    if m == 0 || n == 0 || k == 0 {
        return (out, stats);
    }

    // B limbs packed side by side: row r holds [B_0[r,:] | B_1[r,:] | B_2[r,:] | B_3[r,:]].
    let wide = LIMB_COUNT * n;
    let mut b_limbs = vec![0f64; k * wide];
    for r in 0..k {
        for j in 0..LIMB_COUNT {
            for c in 0..n {
                b_limbs[r * wide + j * n + c] = limb(b[r * n + c], j);
            }
        }
    }

    let mut a_limb = vec![0f64; m * k];
    let mut prod = vec![0f64; m * wide];
    for i in 0..LIMB_COUNT {
        let used = match schedule {
            LimbSchedule::Ring => LIMB_COUNT - i,
            LimbSchedule::Full => LIMB_COUNT,
        };
        for (dst, &v) in a_limb.iter_mut().zip(a) {
            *dst = limb(v, i);
        }
        let cols = used * n;
        // SAFETY: a_limb is m×k with row stride k; b_limbs is read as k×cols
        // with row stride `wide ≥ cols`; prod is written as m×cols with row
        // stride `cols`, within its m×wide allocation.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                cols,
                1.0,
                a_limb.as_ptr(),
                k as isize,
                1,
                b_limbs.as_ptr(),
                wide as isize,
                1,
                0.0,
                prod.as_mut_ptr(),
                cols as isize,
                1,
            );
        }
        stats.products += used;
        for r in 0..m {
            let row = &prod[r * cols..(r + 1) * cols];
            let dst = &mut out[r * n..(r + 1) * n];
            for j in 0..used {
                let shift = LIMB_BITS * (i + j) as u32;
                for (o, &p) in dst.iter_mut().zip(&row[j * n..(j + 1) * n]) {
                    if p > stats.max_intermediate {
                        stats.max_intermediate = p;
                    }
                    // p is an exact non-negative integer below 2^52.
                    *o = o.wrapping_add((p as u64).wrapping_shl(shift.min(63)) & shift_mask(shift));
                }
            }
        }
    }
    (out, stats)
}

/// Shifts of 64 or more bits contribute nothing modulo 2^64.
fn shift_mask(shift: u32) -> u64 {
    if shift >= 64 {
        0
    } else {
        u64::MAX
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &[u64], b: &[u64], m: usize, k: usize, n: usize) -> Vec<u64> {
        let mut out = vec![0u64; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = a[i * k + p];
                for j in 0..n {
                    out[i * n + j] = out[i * n + j].wrapping_add(av.wrapping_mul(b[p * n + j]));
                }
            }
        }
        out
    }

    #[test]
    fn two_to_the_32_squared_wraps() {
        let a = RingTensor::new(vec![1, 1], vec![1 << 32]).unwrap();
        let got = bilinear_exact(&a, &a, &BilinearOpSpec::matmul(1, 1, 1)).unwrap();
        assert_eq!(got.data(), &[0]);
    }

    #[test]
    fn identity_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = RingTensor::from_fn(&[16, 16], |_| rng.gen());
        let id = RingTensor::from_fn(&[16, 16], |i| u64::from(i / 16 == i % 16));
        assert_eq!(bilinear_exact(&a, &id, &BilinearOpSpec::matmul(16, 16, 16)).unwrap(), a);
    }

    #[test]
    fn random_matmuls_match_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (m, k, n) = (rng.gen_range(1..20), rng.gen_range(1..40), rng.gen_range(1..20));
            let a: Vec<u64> = (0..m * k).map(|_| rng.gen()).collect();
            let b: Vec<u64> = (0..k * n).map(|_| rng.gen()).collect();
            assert_eq!(matmul_exact(&a, &b, m, k, n).unwrap(), naive(&a, &b, m, k, n));
        }
    }

    #[test]
    fn skipped_products_vanish_mod_2_64() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = RingTensor::from_fn(&[9, 13], |_| rng.gen());
        let b = RingTensor::from_fn(&[13, 5], |_| rng.gen());
        let spec = BilinearOpSpec::matmul(9, 13, 5);
        let (ring, s10) = bilinear_exact_with_stats(&a, &b, &spec, LimbSchedule::Ring).unwrap();
        let (full, s16) = bilinear_exact_with_stats(&a, &b, &spec, LimbSchedule::Full).unwrap();
        assert_eq!(ring, full);
        assert_eq!((s10.products, s16.products), (10, 16));
    }

    #[test]
    fn worst_case_intermediates_stay_below_2_52() {
        let k = 4096;
        let a = RingTensor::filled(&[2, k], u64::MAX);
        let b = RingTensor::filled(&[k, 2], u64::MAX);
        let (got, stats) =
            bilinear_exact_with_stats(&a, &b, &BilinearOpSpec::matmul(2, k, 2), LimbSchedule::Ring).unwrap();
        assert_eq!(stats.max_intermediate, k as f64 * 65535.0 * 65535.0);
        assert!(stats.max_intermediate < 2f64.powi(52));
        // (-1)·(-1) summed k times.
        assert!(got.data().iter().all(|&v| v == k as u64));
    }

    #[test]
    fn refuses_beyond_exactness_bound() {
        let spec = BilinearOpSpec::matmul(1, MAX_ACCUMULATION + 1, 1);
        let a = RingTensor::zeros(&[1, MAX_ACCUMULATION + 1]);
        let b = RingTensor::zeros(&[MAX_ACCUMULATION + 1, 1]);
        assert!(matches!(bilinear_exact(&a, &b, &spec), Err(Error::Exactness { .. })));
    }

    #[test]
    fn sum_pool_sums_windows() {
        let g = PoolGeometry { batch: 1, channels: 2, height: 4, width: 4, kernel: 2, stride: 2 };
        let x = RingTensor::from_fn(&[1, 2, 4, 4], |i| i as u64);
        let ones = RingTensor::filled(&[2, 2], 1);
        let got = bilinear_exact(&x, &ones, &BilinearOpSpec::sum_pool(g)).unwrap();
        assert_eq!(got.shape(), &[1, 2, 2, 2]);
        assert_eq!(&got.data()[..4], &[0 + 1 + 4 + 5, 2 + 3 + 6 + 7, 8 + 9 + 12 + 13, 10 + 11 + 14 + 15]);
    }

    #[test]
    fn wrong_operand_shape_is_rejected() {
        let a = RingTensor::zeros(&[2, 3]);
        let b = RingTensor::zeros(&[4, 2]);
        assert!(matches!(bilinear_exact(&a, &b, &BilinearOpSpec::matmul(2, 3, 2)), Err(Error::Shape(_))));
    }
}
