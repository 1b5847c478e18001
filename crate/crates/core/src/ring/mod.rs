//! Tensors over the ring of 64-bit integers with wrapping arithmetic.
//!
//! Signed quantities use the two's-complement view of each word; every
//! operation wraps modulo 2^64 and never saturates.

pub mod bilinear;
pub mod fixed;
pub mod geometry;
pub mod limb;

pub use bilinear::{bilinear_exact, BilinearKind, BilinearOpSpec, MAX_ACCUMULATION};
pub use fixed::{fx_decode, fx_encode, FixedPointConfig};
pub use geometry::{col2im, im2col, nchw_to_rows, rows_to_nchw, ConvGeometry, Element, PoolGeometry};
pub use limb::{limb_decompose, limb_recompose, LimbSet};

use crate::error::{Error, Result};

/// Row-major n-dimensional tensor of ring elements.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct RingTensor {
    shape: Vec<usize>,
    data: Vec<u64>,
}

impl RingTensor {
    pub fn new(shape: Vec<usize>, data: Vec<u64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(RingTensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        RingTensor { shape: shape.to_vec(), data: vec![0; len] }
    }

    pub fn filled(shape: &[usize], value: u64) -> Self {
        let len = shape.iter().product();
        RingTensor { shape: shape.to_vec(), data: vec![value; len] }
    }

    /// One-dimensional tensor owning `data`.
    pub fn from_vec(data: Vec<u64>) -> Self {
        RingTensor { shape: vec![data.len()], data }
    }

    pub fn scalar(value: u64) -> Self {
        RingTensor { shape: vec![1], data: vec![value] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> u64) -> Self {
        let len: usize = shape.iter().product();
        RingTensor { shape: shape.to_vec(), data: (0..len).map(&mut f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    fn check_same_shape(&self, other: &RingTensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn zip_map(&self, other: &RingTensor, op: &str, f: impl Fn(u64, u64) -> u64) -> Result<Self> {
        self.check_same_shape(other, op)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(RingTensor { shape: self.shape.clone(), data })
    }

    pub fn map(&self, f: impl Fn(u64) -> u64) -> Self {
        RingTensor { shape: self.shape.clone(), data: self.data.iter().map(|&a| f(a)).collect() }
    }

    pub fn map_inplace(&mut self, f: impl Fn(u64) -> u64) {
        self.data.iter_mut().for_each(|a| *a = f(*a));
    }

    pub fn zip_inplace(&mut self, other: &RingTensor, op: &str, f: impl Fn(u64, u64) -> u64) -> Result<()> {
        self.check_same_shape(other, op)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a = f(*a, b));
        Ok(())
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&self) -> Result<Self> {
        let [rows, cols] = self.dims2()?;
        let mut out = vec![0u64; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = self.data[r * cols + c];
            }
        }
        Ok(RingTensor { shape: vec![cols, rows], data: out })
    }

    pub fn dims2(&self) -> Result<[usize; 2]> {
        match self.shape[..] {
            [r, c] => Ok([r, c]),
            _ => Err(Error::shape(format!("expected a 2-D tensor, got {:?}", self.shape))),
        }
    }

    pub fn dims4(&self) -> Result<[usize; 4]> {
        match self.shape[..] {
            [n, c, h, w] => Ok([n, c, h, w]),
            _ => Err(Error::shape(format!("expected a 4-D tensor, got {:?}", self.shape))),
        }
    }

    /// Rows `start..end` of the leading axis.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        let lead = *self.shape.first().ok_or_else(|| Error::shape("cannot slice a 0-D tensor"))?;
        if start > end || end > lead {
            return Err(Error::shape(format!("row range {start}..{end} out of {lead}")));
        }
        let stride: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Ok(RingTensor { shape, data: self.data[start * stride..end * stride].to_vec() })
    }

    /// Gather columns of a 2-D tensor.
    pub fn select_cols(&self, cols: &[usize]) -> Result<Self> {
        let [rows, width] = self.dims2()?;
        if let Some(&bad) = cols.iter().find(|&&c| c >= width) {
            return Err(Error::shape(format!("column {bad} out of {width}")));
        }
        let mut data = Vec::with_capacity(rows * cols.len());
        for r in 0..rows {
            let row = &self.data[r * width..(r + 1) * width];
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(RingTensor { shape: vec![rows, cols.len()], data })
    }

    /// Concatenate 2-D tensors with equal row counts along the column axis.
    pub fn concat_cols(parts: &[&RingTensor]) -> Result<Self> {
        let rows = parts.first().ok_or_else(|| Error::shape("nothing to concatenate"))?.dims2()?[0];
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let [r, c] = p.dims2()?;
            if r != rows {
                return Err(Error::shape(format!("row counts differ: {rows} vs {r}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data[r * w..(r + 1) * w]);
            }
        }
        Ok(RingTensor { shape: vec![rows, total], data })
    }

    /// Sum over the leading axis of a tensor whose trailing axes are kept.
    pub fn sum_rows(&self) -> Result<Self> {
        let lead = *self.shape.first().ok_or_else(|| Error::shape("cannot sum a 0-D tensor"))?;
        let stride: usize = self.shape[1..].iter().product();
        let mut out = vec![0u64; stride];
        for r in 0..lead {
            for (o, &v) in out.iter_mut().zip(&self.data[r * stride..(r + 1) * stride]) {
                *o = o.wrapping_add(v);
            }
        }
        Ok(RingTensor { shape: self.shape[1..].to_vec(), data: out })
    }

    /// Sum over the last axis of a 2-D tensor, giving shape `[rows, 1]`.
    pub fn sum_cols(&self) -> Result<Self> {
        let [rows, cols] = self.dims2()?;
        let data = (0..rows)
            .map(|r| self.data[r * cols..(r + 1) * cols].iter().fold(0u64, |a, &b| a.wrapping_add(b)))
            .collect();
        Ok(RingTensor { shape: vec![rows, 1], data })
    }

    /// Broadcast a `[rows, 1]` column over `cols` columns.
    pub fn broadcast_cols(&self, cols: usize) -> Result<Self> {
        let [rows, one] = self.dims2()?;
        if one != 1 {
            return Err(Error::shape(format!("expected a column vector, got {:?}", self.shape)));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &v in &self.data {
            data.extend(std::iter::repeat(v).take(cols));
        }
        Ok(RingTensor { shape: vec![rows, cols], data })
    }
}

pub fn ring_add(a: &RingTensor, b: &RingTensor) -> Result<RingTensor> {
    a.zip_map(b, "add", u64::wrapping_add)
}

pub fn ring_sub(a: &RingTensor, b: &RingTensor) -> Result<RingTensor> {
    a.zip_map(b, "sub", u64::wrapping_sub)
}

pub fn ring_neg(a: &RingTensor) -> RingTensor {
    a.map(u64::wrapping_neg)
}

pub fn ring_scalar_mul(a: &RingTensor, c: u64) -> RingTensor {
    a.map(|x| x.wrapping_mul(c))
}

/// Element-wise wrapping product (Hadamard).
pub fn ring_mul_elem(a: &RingTensor, b: &RingTensor) -> Result<RingTensor> {
    a.zip_map(b, "mul", u64::wrapping_mul)
}

/// Sign-extending right shift of the two's-complement view.
pub fn ring_shift_arith(a: &RingTensor, bits: u32) -> RingTensor {
    a.map(|x| ((x as i64) >> bits.min(63)) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_neg_is_zero() {
        let x = RingTensor::from_vec(vec![1, u64::MAX, 1 << 63, 12345]);
        let z = ring_add(&x, &ring_neg(&x)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn arithmetic_shift_sign_extends() {
        let x = RingTensor::scalar(0u64.wrapping_sub(1 << 21));
        assert_eq!(ring_shift_arith(&x, 20).data(), &[0u64.wrapping_sub(2)]);
    }

    #[test]
    fn scalar_mul_by_one_is_identity() {
        let x = RingTensor::from_vec(vec![7, 9, u64::MAX]);
        assert_eq!(ring_scalar_mul(&x, 1), x);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = RingTensor::zeros(&[2, 2]);
        let b = RingTensor::zeros(&[4]);
        assert!(matches!(ring_add(&a, &b), Err(Error::Shape(_))));
        assert!(RingTensor::new(vec![3], vec![1, 2]).is_err());
    }

    #[test]
    fn transpose_and_column_helpers() {
        let x = RingTensor::new(vec![2, 3], vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(x.transpose().unwrap().data(), &[1, 4, 2, 5, 3, 6]);
        assert_eq!(x.select_cols(&[2, 0]).unwrap().data(), &[3, 1, 6, 4]);
        assert_eq!(x.sum_cols().unwrap().data(), &[6, 15]);
        assert_eq!(x.sum_rows().unwrap().data(), &[5, 7, 9]);
        let both = RingTensor::concat_cols(&[&x, &x.select_cols(&[1]).unwrap()]).unwrap();
        assert_eq!(both.data(), &[1, 2, 3, 2, 4, 5, 6, 5]);
        let col = RingTensor::new(vec![2, 1], vec![8, 9]).unwrap();
        assert_eq!(col.broadcast_cols(2).unwrap().data(), &[8, 8, 9, 9]);
    }
}
