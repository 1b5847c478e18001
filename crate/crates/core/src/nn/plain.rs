//! Plaintext reference backends.
//!
//! [`FixedBackend`] runs the fixed-point pipeline on a single machine with
//! wrapping 64-bit arithmetic, naive loops and deterministic round-half-to-even
//! rescaling. It follows the private pipeline step for step, so the two
//! differ only by the private truncation's unbiased one-unit rounding noise.
//!
//! [`FloatBackend`] is ordinary `f64` training/inference (im2col + dgemm).

use crate::error::{Error, Result};
use crate::nn::weights::FloatParams;
use crate::nn::{expand_channels, reduce_channels, Backend, LayerGrads, Model, ModelGraph};
use crate::protocols::approx::{exp_guard_bits, ExpConfig, ReciprocalConfig};
use crate::protocols::arith::public_multiplier;
use crate::protocols::linear::POOL_GUARD_BITS;
use crate::ring::{col2im, im2col, nchw_to_rows, rows_to_nchw, ConvGeometry, FixedPointConfig, PoolGeometry, RingTensor};

/// Guard bits used when scaling gradients by the learning rate.
pub const SGD_GUARD_BITS: u32 = POOL_GUARD_BITS;

// ---------------------------------------------------------------------------
// Fixed point
// ---------------------------------------------------------------------------

/// Divide by `2^bits`, rounding half to even.
///
/// The private truncation rounds stochastically and without bias. Rounding
/// half up would not be unbiased: a 2-bit shift (average pooling over 2×2)
/// would drift by +1/8 unit per element, which a bias gradient summed over
/// tens of thousands of positions turns into several units per SGD step.
/// Ties to even keeps the oracle deterministic and unbiased.
fn rescale(v: u64, bits: u32) -> u64 {
    if bits == 0 {
        return v;
    }
    let q = (v as i64) >> bits;
    let r = v & ((1u64 << bits) - 1);
    let half = 1u64 << (bits - 1);
    let up = r > half || (r == half && q & 1 == 1);
    q.wrapping_add(i64::from(up)) as u64
}

fn rescale_all(v: &mut [u64], bits: u32) {
    v.iter_mut().for_each(|x| *x = rescale(*x, bits));
}

/// Visit every `(input, weight, output)` flat index triple of a convolution.
fn for_each_tap(g: &ConvGeometry, mut f: impl FnMut(usize, usize, usize)) {
    let (oh, ow) = (g.out_h(), g.out_w());
    for n in 0..g.batch {
        for oc in 0..g.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let yi = ((n * g.out_channels + oc) * oh + oy) * ow + ox;
                    for c in 0..g.in_channels {
                        for ky in 0..g.kernel_h {
                            let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                            if iy < 0 || iy >= g.height as isize {
                                continue;
                            }
                            for kx in 0..g.kernel_w {
                                let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                if ix < 0 || ix >= g.width as isize {
                                    continue;
                                }
                                let xi = ((n * g.in_channels + c) * g.height + iy as usize) * g.width + ix as usize;
                                let wi = ((oc * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx;
                                f(xi, wi, yi);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Plaintext fixed-point arithmetic mirroring the private protocols.
#[derive(Clone, Copy, Debug)]
pub struct FixedBackend {
    pub fixed: FixedPointConfig,
    pub exp: ExpConfig,
    pub recip: ReciprocalConfig,
}

impl FixedBackend {
    pub fn new(fixed: FixedPointConfig) -> Self {
        FixedBackend { fixed, exp: ExpConfig::default(), recip: ReciprocalConfig::default() }
    }

    fn t(&self) -> u32 {
        self.fixed.frac_bits()
    }

    fn mul_fixed(&self, a: u64, b: u64) -> u64 {
        rescale(a.wrapping_mul(b), self.t())
    }

    /// Mirror of the private division by a public integer.
    pub fn divide_public(&self, v: &mut [u64], d: usize) -> Result<()> {
        if d.is_power_of_two() {
            rescale_all(v, d.trailing_zeros());
        } else {
            let k = public_multiplier(self.fixed, 1.0 / d as f64, POOL_GUARD_BITS)?;
            let bits = self.t() + POOL_GUARD_BITS;
            v.iter_mut().for_each(|x| *x = rescale(x.wrapping_mul(k), bits));
        }
        Ok(())
    }

    /// Mirror of the private `(1 + x/m)^m`.
    pub fn exp(&self, x: u64) -> u64 {
        let t = self.t();
        let l = self.exp.squarings();
        let e = exp_guard_bits(t);
        let s = t + e;
        let x = if e >= l { x.wrapping_mul(1u64 << (e - l)) } else { rescale(x, l - e) };
        let mut y = x.wrapping_add(1u64 << s);
        for _ in 0..l {
            y = rescale(y.wrapping_mul(y), s);
        }
        rescale(y, e)
    }

    /// Mirror of the private Newton–Raphson reciprocal.
    pub fn reciprocal(&self, y: u64) -> Result<u64> {
        let mut z = self.fixed.encode(1.0 / self.recip.bound)?;
        for _ in 0..self.recip.iterations {
            let zz = self.mul_fixed(z, z);
            let yzz = self.mul_fixed(y, zz);
            z = z.wrapping_mul(2).wrapping_sub(yzz);
        }
        Ok(z)
    }
}

fn dims2(t: &RingTensor) -> Result<[usize; 2]> {
    t.dims2()
}

impl Backend for FixedBackend {
    type Tensor = RingTensor;

    fn dims(t: &RingTensor) -> Vec<usize> {
        t.shape().to_vec()
    }

    fn reshape(&mut self, t: &RingTensor, shape: &[usize]) -> Result<RingTensor> {
        t.clone().reshape(shape)
    }

    fn fc(&mut self, x: &RingTensor, w: &RingTensor, b: &RingTensor) -> Result<RingTensor> {
        let [batch, inp] = dims2(x)?;
        let [out, win] = dims2(w)?;
        if win != inp || b.len() != out {
            return Err(Error::shape(format!("fc {:?} · {:?}ᵀ + {:?}", x.shape(), w.shape(), b.shape())));
        }
        let (xd, wd, bd) = (x.data(), w.data(), b.data());
        let mut y = vec![0u64; batch * out];
        for r in 0..batch {
            for o in 0..out {
                let mut acc = 0u64;
                for k in 0..inp {
                    acc = acc.wrapping_add(xd[r * inp + k].wrapping_mul(wd[o * inp + k]));
                }
                y[r * out + o] = rescale(acc, self.t()).wrapping_add(bd[o]);
            }
        }
        RingTensor::new(vec![batch, out], y)
    }

    fn fc_backward(&mut self, g: &RingTensor, x: &RingTensor, w: &RingTensor, need_input: bool) -> Result<LayerGrads<RingTensor>> {
        let [batch, out] = dims2(g)?;
        let [_, inp] = dims2(x)?;
        let (gd, xd, wd) = (g.data(), x.data(), w.data());
        let mut dw = vec![0u64; out * inp];
        for o in 0..out {
            for k in 0..inp {
                let mut acc = 0u64;
                for r in 0..batch {
                    acc = acc.wrapping_add(gd[r * out + o].wrapping_mul(xd[r * inp + k]));
                }
                dw[o * inp + k] = rescale(acc, self.t());
            }
        }
        let db = reduce_channels(gd, batch, out, 1);
        let input = if need_input {
            let mut dx = vec![0u64; batch * inp];
            for r in 0..batch {
                for k in 0..inp {
                    let mut acc = 0u64;
                    for o in 0..out {
                        acc = acc.wrapping_add(gd[r * out + o].wrapping_mul(wd[o * inp + k]));
                    }
                    dx[r * inp + k] = rescale(acc, self.t());
                }
            }
            Some(RingTensor::new(vec![batch, inp], dx)?)
        } else {
            None
        };
        Ok(LayerGrads { weight: RingTensor::new(vec![out, inp], dw)?, bias: RingTensor::new(vec![out], db)?, input })
    }

    fn conv(&mut self, x: &RingTensor, w: &RingTensor, b: &RingTensor, geom: ConvGeometry) -> Result<RingTensor> {
        let (xd, wd) = (x.data(), w.data());
        let shape = geom.output_shape();
        let mut y = vec![0u64; shape.iter().product()];
        for_each_tap(&geom, |xi, wi, yi| y[yi] = y[yi].wrapping_add(xd[xi].wrapping_mul(wd[wi])));
        rescale_all(&mut y, self.t());
        let bias = expand_channels(b.data(), geom.batch, geom.out_h() * geom.out_w());
        y.iter_mut().zip(bias).for_each(|(v, c)| *v = v.wrapping_add(c));
        RingTensor::new(shape.to_vec(), y)
    }

    fn conv_backward(
        &mut self,
        g: &RingTensor,
        x: &RingTensor,
        w: &RingTensor,
        geom: ConvGeometry,
        need_input: bool,
    ) -> Result<LayerGrads<RingTensor>> {
        let (gd, xd, wd) = (g.data(), x.data(), w.data());
        let mut dw = vec![0u64; w.len()];
        for_each_tap(&geom, |xi, wi, yi| dw[wi] = dw[wi].wrapping_add(gd[yi].wrapping_mul(xd[xi])));
        rescale_all(&mut dw, self.t());
        let db = reduce_channels(gd, geom.batch, geom.out_channels, geom.out_h() * geom.out_w());
        let input = if need_input {
            let mut dx = vec![0u64; x.len()];
            for_each_tap(&geom, |xi, wi, yi| dx[xi] = dx[xi].wrapping_add(gd[yi].wrapping_mul(wd[wi])));
            rescale_all(&mut dx, self.t());
            Some(RingTensor::new(x.shape().to_vec(), dx)?)
        } else {
            None
        };
        Ok(LayerGrads {
            weight: RingTensor::new(w.shape().to_vec(), dw)?,
            bias: RingTensor::new(vec![geom.out_channels], db)?,
            input,
        })
    }

    fn avgpool(&mut self, x: &RingTensor, geom: PoolGeometry) -> Result<RingTensor> {
        let conv = geom.as_depthwise_conv();
        let xd = x.data();
        let mut y = vec![0u64; geom.output_shape().iter().product()];
        for_each_tap(&conv, |xi, _, yi| y[yi] = y[yi].wrapping_add(xd[xi]));
        self.divide_public(&mut y, geom.area())?;
        RingTensor::new(geom.output_shape().to_vec(), y)
    }

    fn avgpool_backward(&mut self, g: &RingTensor, geom: PoolGeometry) -> Result<RingTensor> {
        let conv = geom.as_depthwise_conv();
        let mut d = g.data().to_vec();
        self.divide_public(&mut d, geom.area())?;
        let mut dx = vec![0u64; geom.input_shape().iter().product()];
        for_each_tap(&conv, |xi, _, yi| dx[xi] = dx[xi].wrapping_add(d[yi]));
        RingTensor::new(geom.input_shape().to_vec(), dx)
    }

    fn relu(&mut self, x: &RingTensor) -> Result<(RingTensor, RingTensor)> {
        let mask = x.map(|v| u64::from((v as i64) >= 0));
        let y = x.zip_map(&mask, "relu", u64::wrapping_mul)?;
        Ok((y, mask))
    }

    fn relu_backward(&mut self, g: &RingTensor, mask: &RingTensor) -> Result<RingTensor> {
        g.zip_map(mask, "relu backward", u64::wrapping_mul)
    }

    fn softmax(&mut self, z: &RingTensor) -> Result<RingTensor> {
        let [rows, d] = dims2(z)?;
        if d as f64 > self.recip.bound {
            return Err(Error::Config(format!("softmax over {d} classes exceeds the reciprocal bound")));
        }
        let mut out = Vec::with_capacity(rows * d);
        for row in z.data().chunks(d) {
            let mx = row.iter().map(|&v| v as i64).max().unwrap_or(0) as u64;
            let e: Vec<u64> = row.iter().map(|&v| self.exp(v.wrapping_sub(mx))).collect();
            let sum = e.iter().fold(0u64, |a, &b| a.wrapping_add(b));
            let inv = self.reciprocal(sum)?;
            out.extend(e.iter().map(|&v| self.mul_fixed(v, inv)));
        }
        RingTensor::new(vec![rows, d], out)
    }

    fn sub(&mut self, a: &RingTensor, b: &RingTensor) -> Result<RingTensor> {
        a.zip_map(b, "sub", u64::wrapping_sub)
    }

    fn sgd(&mut self, w: &RingTensor, g: &RingTensor, step: f64) -> Result<RingTensor> {
        let k = public_multiplier(self.fixed, step, SGD_GUARD_BITS)?;
        let bits = self.t() + SGD_GUARD_BITS;
        w.zip_map(g, "sgd", |w, g| w.wrapping_sub(rescale(g.wrapping_mul(k), bits)))
    }
}

impl Model<RingTensor> {
    /// Plaintext fixed-point model from ring-encoded parameters.
    pub fn from_ring(graph: ModelGraph, params: Vec<RingTensor>) -> Result<Self> {
        crate::nn::weights::check_shapes(&graph, params.iter().map(RingTensor::shape))?;
        Model::new(graph, params)
    }
}

// ---------------------------------------------------------------------------
// Floating point
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct FloatTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl FloatTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::shape(format!("shape {shape:?} needs {} values, got {}", shape.iter().product::<usize>(), data.len())));
        }
        Ok(FloatTensor { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn dims2(&self) -> Result<[usize; 2]> {
        match self.shape[..] {
            [a, b] => Ok([a, b]),
            _ => Err(Error::shape(format!("expected a matrix, got {:?}", self.shape))),
        }
    }

    fn zip(&self, other: &FloatTensor, f: impl Fn(f64, f64) -> f64) -> Result<FloatTensor> {
        if self.shape != other.shape {
            return Err(Error::shape(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(FloatTensor { shape: self.shape.clone(), data })
    }
}

/// A strided matrix view `(data, rows, cols, row_stride, col_stride)`.
struct View<'a>(&'a [f64], usize, usize, isize, isize);

impl<'a> View<'a> {
    fn plain(d: &'a [f64], rows: usize, cols: usize) -> Self {
        View(d, rows, cols, cols as isize, 1)
    }

    fn t(self) -> Self {
        View(self.0, self.2, self.1, self.4, self.3)
    }
}

/// `a · b` with `f64` GEMM.
fn gemm(a: View<'_>, b: View<'_>) -> Vec<f64> {
    let (m, k, n) = (a.1, a.2, b.2);
    assert_eq!(k, b.1, "inner dimensions");
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 {
        return c;
    }
    // SAFETY: the views cover `m×k` and `k×n` elements of live slices
    // (checked by the callers' shape validation) and `c` is `m×n`.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.0.as_ptr(), a.3, a.4, b.0.as_ptr(), b.3, b.4, 0.0, c.as_mut_ptr(), n as isize, 1);
    }
    c
}

/// Exponential used by the float softmax.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum FloatExp {
    #[default]
    Exact,
    /// `(1 + x/m)^m`, the same approximation the private softmax evaluates.
    Limit(u64),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FloatBackend {
    pub exp: FloatExp,
}

impl FloatBackend {
    fn exp(&self, x: f64) -> f64 {
        match self.exp {
            FloatExp::Exact => x.exp(),
            FloatExp::Limit(m) => (1.0 + x / m as f64).powi(m as i32),
        }
    }
}

fn check_len(t: &FloatTensor, n: usize, what: &str) -> Result<()> {
    if t.data.len() != n {
        return Err(Error::shape(format!("{what}: expected {n} values, got {:?}", t.shape)));
    }
    Ok(())
}

impl Backend for FloatBackend {
    type Tensor = FloatTensor;

    fn dims(t: &FloatTensor) -> Vec<usize> {
        t.shape.clone()
    }

    fn reshape(&mut self, t: &FloatTensor, shape: &[usize]) -> Result<FloatTensor> {
        FloatTensor::new(shape.to_vec(), t.data.clone())
    }

    fn fc(&mut self, x: &FloatTensor, w: &FloatTensor, b: &FloatTensor) -> Result<FloatTensor> {
        let [batch, inp] = x.dims2()?;
        let [out, win] = w.dims2()?;
        if win != inp || b.data.len() != out {
            return Err(Error::shape(format!("fc {:?} · {:?}ᵀ + {:?}", x.shape, w.shape, b.shape)));
        }
        let mut y = gemm(View::plain(&x.data, batch, inp), View::plain(&w.data, out, inp).t());
        y.iter_mut().zip(expand_channels(&b.data, batch, 1)).for_each(|(v, c)| *v += c);
        FloatTensor::new(vec![batch, out], y)
    }

    fn fc_backward(&mut self, g: &FloatTensor, x: &FloatTensor, w: &FloatTensor, need_input: bool) -> Result<LayerGrads<FloatTensor>> {
        let [batch, out] = g.dims2()?;
        let [xb, inp] = x.dims2()?;
        check_len(w, out * inp, "fc weight")?;
        if xb != batch {
            return Err(Error::shape("fc gradient batch mismatch"));
        }
        let dw = gemm(View::plain(&g.data, batch, out).t(), View::plain(&x.data, batch, inp));
        let db = reduce_channels(&g.data, batch, out, 1);
        let input = need_input
            .then(|| FloatTensor::new(vec![batch, inp], gemm(View::plain(&g.data, batch, out), View::plain(&w.data, out, inp))))
            .transpose()?;
        Ok(LayerGrads { weight: FloatTensor::new(vec![out, inp], dw)?, bias: FloatTensor::new(vec![out], db)?, input })
    }

    fn conv(&mut self, x: &FloatTensor, w: &FloatTensor, b: &FloatTensor, geom: ConvGeometry) -> Result<FloatTensor> {
        geom.validate()?;
        check_len(x, geom.input_shape().iter().product(), "conv input")?;
        check_len(w, geom.weight_shape().iter().product(), "conv weight")?;
        let (rows, taps, oc) = (geom.col_rows(), geom.col_cols(), geom.out_channels);
        let cols = im2col(&x.data, &geom);
        let y_rows = gemm(View::plain(&cols, rows, taps), View::plain(&w.data, oc, taps).t());
        let [n, _, oh, ow] = geom.output_shape();
        let mut y = rows_to_nchw(&y_rows, n, oc, oh, ow);
        y.iter_mut().zip(expand_channels(&b.data, n, oh * ow)).for_each(|(v, c)| *v += c);
        FloatTensor::new(geom.output_shape().to_vec(), y)
    }

    fn conv_backward(
        &mut self,
        g: &FloatTensor,
        x: &FloatTensor,
        w: &FloatTensor,
        geom: ConvGeometry,
        need_input: bool,
    ) -> Result<LayerGrads<FloatTensor>> {
        check_len(g, geom.output_shape().iter().product(), "conv gradient")?;
        let (rows, taps, oc) = (geom.col_rows(), geom.col_cols(), geom.out_channels);
        let [n, _, oh, ow] = geom.output_shape();
        let g_rows = nchw_to_rows(&g.data, n, oc, oh, ow);
        let cols = im2col(&x.data, &geom);
        let dw = gemm(View::plain(&g_rows, rows, oc).t(), View::plain(&cols, rows, taps));
        let db = reduce_channels(&g.data, n, oc, oh * ow);
        let input = if need_input {
            let dcols = gemm(View::plain(&g_rows, rows, oc), View::plain(&w.data, oc, taps));
            Some(FloatTensor::new(geom.input_shape().to_vec(), col2im(&dcols, &geom))?)
        } else {
            None
        };
        Ok(LayerGrads {
            weight: FloatTensor::new(geom.weight_shape().to_vec(), dw)?,
            bias: FloatTensor::new(vec![oc], db)?,
            input,
        })
    }

    fn avgpool(&mut self, x: &FloatTensor, geom: PoolGeometry) -> Result<FloatTensor> {
        geom.validate()?;
        check_len(x, geom.input_shape().iter().product(), "pool input")?;
        let area = geom.area();
        let cols = im2col(&x.data, &geom.as_depthwise_conv());
        let y = cols.chunks(area).map(|w| w.iter().sum::<f64>() / area as f64).collect();
        FloatTensor::new(geom.output_shape().to_vec(), y)
    }

    fn avgpool_backward(&mut self, g: &FloatTensor, geom: PoolGeometry) -> Result<FloatTensor> {
        let area = geom.area();
        let spread: Vec<f64> = g.data.iter().flat_map(|&v| std::iter::repeat_n(v / area as f64, area)).collect();
        FloatTensor::new(geom.input_shape().to_vec(), col2im(&spread, &geom.as_depthwise_conv()))
    }

    fn relu(&mut self, x: &FloatTensor) -> Result<(FloatTensor, FloatTensor)> {
        let mask: Vec<f64> = x.data.iter().map(|&v| if v >= 0.0 { 1.0 } else { 0.0 }).collect();
        let mask = FloatTensor::new(x.shape.clone(), mask)?;
        Ok((x.zip(&mask, |a, m| a * m)?, mask))
    }

    fn relu_backward(&mut self, g: &FloatTensor, mask: &FloatTensor) -> Result<FloatTensor> {
        g.zip(mask, |a, m| a * m)
    }

    fn softmax(&mut self, z: &FloatTensor) -> Result<FloatTensor> {
        let [rows, d] = z.dims2()?;
        let mut out = Vec::with_capacity(rows * d);
        for row in z.data.chunks(d) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|&v| self.exp(v - mx)).collect();
            let s: f64 = e.iter().sum();
            out.extend(e.iter().map(|v| v / s));
        }
        FloatTensor::new(vec![rows, d], out)
    }

    fn sub(&mut self, a: &FloatTensor, b: &FloatTensor) -> Result<FloatTensor> {
        a.zip(b, |x, y| x - y)
    }

    fn sgd(&mut self, w: &FloatTensor, g: &FloatTensor, step: f64) -> Result<FloatTensor> {
        w.zip(g, |w, g| w - step * g)
    }
}

impl Model<FloatTensor> {
    pub fn from_float(graph: ModelGraph, params: &FloatParams) -> Result<Self> {
        params.check(&graph)?;
        let tensors = params
            .tensors
            .iter()
            .map(|(s, v)| FloatTensor::new(s.clone(), v.clone()))
            .collect::<Result<Vec<_>>>()?;
        Model::new(graph, tensors)
    }

    pub fn float_params(&self) -> FloatParams {
        FloatParams { tensors: self.params.iter().map(|t| (t.shape.clone(), t.data.clone())).collect() }
    }
}
