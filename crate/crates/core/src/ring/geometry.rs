//! Convolution and pooling geometry plus the im2col/col2im rearrangements.
//!
//! Activations are NCHW and convolution weights are `[out_c, in_c, kh, kw]`.
//! `im2col` produces one row per output position `(n, oh, ow)` and one
//! column per weight tap `(c, kh, kw)`, so a convolution becomes
//! `im2col(x) · W^T`. The helpers are generic over `u64` (wrapping) and `f64`
//! so plaintext oracles can reuse the exact same index arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element types the rearrangements can accumulate.
pub trait Element: Copy + Default + Send + Sync {
    fn acc(self, other: Self) -> Self;
}

impl Element for u64 {
    fn acc(self, other: Self) -> Self {
        self.wrapping_add(other)
    }
}

impl Element for f64 {
    fn acc(self, other: Self) -> Self {
        self + other
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::shape("kernel and stride must be positive"));
        }
        if self.height + 2 * self.padding < self.kernel_h || self.width + 2 * self.padding < self.kernel_w {
            return Err(Error::shape(format!(
                "kernel {}x{} does not fit input {}x{} with padding {}",
                self.kernel_h, self.kernel_w, self.height, self.width, self.padding
            )));
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel_w) / self.stride + 1
    }

    pub fn input_shape(&self) -> [usize; 4] {
        [self.batch, self.in_channels, self.height, self.width]
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel_h, self.kernel_w]
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_channels, self.out_h(), self.out_w()]
    }

    /// Number of im2col rows (output positions across the batch).
    pub fn col_rows(&self) -> usize {
        self.batch * self.out_h() * self.out_w()
    }

    /// Number of im2col columns (taps per output channel).
    pub fn col_cols(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolGeometry {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl PoolGeometry {
    /// The pool expressed as a single-channel convolution over `batch * channels` images.
    pub fn as_depthwise_conv(&self) -> ConvGeometry {
        ConvGeometry {
            batch: self.batch * self.channels,
            in_channels: 1,
            height: self.height,
            width: self.width,
            out_channels: 1,
            kernel_h: self.kernel,
            kernel_w: self.kernel,
            stride: self.stride,
            padding: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.as_depthwise_conv().validate()
    }

    pub fn area(&self) -> usize {
        self.kernel * self.kernel
    }

    pub fn out_h(&self) -> usize {
        self.as_depthwise_conv().out_h()
    }

    pub fn out_w(&self) -> usize {
        self.as_depthwise_conv().out_w()
    }

    pub fn input_shape(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.channels, self.out_h(), self.out_w()]
    }
}

/// Rearrange an NCHW input into the `[rows, taps]` patch matrix.
pub fn im2col<T: Element>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let cols = g.col_cols();
    let mut out = vec![T::default(); g.col_rows() * cols];
    let pad = g.padding as isize;
    for n in 0..g.batch {
        for y in 0..oh {
            for x_ in 0..ow {
                let row = ((n * oh + y) * ow + x_) * cols;
                for c in 0..g.in_channels {
                    let plane = (n * g.in_channels + c) * g.height * g.width;
                    for ky in 0..g.kernel_h {
                        let iy = (y * g.stride + ky) as isize - pad;
                        if iy < 0 || iy >= g.height as isize {
                            continue;
                        }
                        let base = row + (c * g.kernel_h + ky) * g.kernel_w;
                        let src = plane + iy as usize * g.width;
                        for kx in 0..g.kernel_w {
                            let ix = (x_ * g.stride + kx) as isize - pad;
                            if ix >= 0 && ix < g.width as isize {
                                out[base + kx] = x[src + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatter-add patch rows back into an NCHW tensor.
pub fn col2im<T: Element>(cols: &[T], g: &ConvGeometry) -> Vec<T> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let ncols = g.col_cols();
    let mut out = vec![T::default(); g.batch * g.in_channels * g.height * g.width];
    let pad = g.padding as isize;
    for n in 0..g.batch {
        for y in 0..oh {
            for x_ in 0..ow {
                let row = ((n * oh + y) * ow + x_) * ncols;
                for c in 0..g.in_channels {
                    let plane = (n * g.in_channels + c) * g.height * g.width;
                    for ky in 0..g.kernel_h {
                        let iy = (y * g.stride + ky) as isize - pad;
                        if iy < 0 || iy >= g.height as isize {
                            continue;
                        }
                        let base = row + (c * g.kernel_h + ky) * g.kernel_w;
                        let dst = plane + iy as usize * g.width;
                        for kx in 0..g.kernel_w {
                            let ix = (x_ * g.stride + kx) as isize - pad;
                            if ix >= 0 && ix < g.width as isize {
                                let slot = &mut out[dst + ix as usize];
                                *slot = slot.acc(cols[base + kx]);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// `[n*oh*ow, c]` rows (one per output position) into an NCHW tensor.
pub fn rows_to_nchw<T: Element>(rows: &[T], n: usize, c: usize, h: usize, w: usize) -> Vec<T> {
    let mut out = vec![T::default(); n * c * h * w];
    for b in 0..n {
        for p in 0..h * w {
            let src = (b * h * w + p) * c;
            for ch in 0..c {
                out[(b * c + ch) * h * w + p] = rows[src + ch];
            }
        }
    }
    out
}

/// Inverse of [`rows_to_nchw`].
pub fn nchw_to_rows<T: Element>(x: &[T], n: usize, c: usize, h: usize, w: usize) -> Vec<T> {
    let mut out = vec![T::default(); n * c * h * w];
    for b in 0..n {
        for ch in 0..c {
            let src = (b * c + ch) * h * w;
            for p in 0..h * w {
                out[(b * h * w + p) * c + ch] = x[src + p];
            }
        }
    }
    out
}
