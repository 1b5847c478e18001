//! Neural network layers.
//!
//! A model is a [`ModelGraph`] plus one tensor per weight and bias. The layer
//! sequencing, activation caching and backpropagation order live in
//! [`Model`] and are shared by every execution [`Backend`]:
//!
//! * [`private::PrivateBackend`] — replicated shares, one party's view;
//! * [`plain::FixedBackend`] — plaintext ring arithmetic with deterministic
//!   rounding, the reference for the private pipeline;
//! * [`plain::FloatBackend`] — `f64` arithmetic.
//!
//! Each backend implements the per-layer arithmetic on its own, so the
//! plaintext backends serve as independent oracles for the private one.

pub mod plain;
pub mod private;
pub mod spec;
pub mod weights;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::{ConvGeometry, PoolGeometry};

pub use plain::{FixedBackend, FloatBackend, FloatTensor};
pub use private::{loss_grad_output, share_model, PrivateBackend};
pub use spec::{alexnet_cifar, lenet, ActShape, LayerSpec, ModelGraph, ModelSpec};
pub use weights::{read_weights, write_weights, FloatParams};

/// Gradients produced by one parameterised layer.
pub struct LayerGrads<T> {
    pub weight: T,
    pub bias: T,
    /// `None` when the caller asked to skip the input gradient.
    pub input: Option<T>,
}

/// Per-layer arithmetic of one execution mode.
///
/// Shapes: fully connected inputs are `[batch, in]` with weights
/// `[out, in]`; images are NCHW with convolution weights `[oc, ic, k, k]`.
pub trait Backend {
    type Tensor: Clone;

    fn dims(t: &Self::Tensor) -> Vec<usize>;
    fn reshape(&mut self, t: &Self::Tensor, shape: &[usize]) -> Result<Self::Tensor>;

    /// `x · wᵀ + b`.
    fn fc(&mut self, x: &Self::Tensor, w: &Self::Tensor, b: &Self::Tensor) -> Result<Self::Tensor>;
    fn fc_backward(
        &mut self,
        g: &Self::Tensor,
        x: &Self::Tensor,
        w: &Self::Tensor,
        need_input: bool,
    ) -> Result<LayerGrads<Self::Tensor>>;

    fn conv(&mut self, x: &Self::Tensor, w: &Self::Tensor, b: &Self::Tensor, geom: ConvGeometry) -> Result<Self::Tensor>;
    fn conv_backward(
        &mut self,
        g: &Self::Tensor,
        x: &Self::Tensor,
        w: &Self::Tensor,
        geom: ConvGeometry,
        need_input: bool,
    ) -> Result<LayerGrads<Self::Tensor>>;

    fn avgpool(&mut self, x: &Self::Tensor, geom: PoolGeometry) -> Result<Self::Tensor>;
    fn avgpool_backward(&mut self, g: &Self::Tensor, geom: PoolGeometry) -> Result<Self::Tensor>;

    /// `(max(x, 0), mask)` where `mask` is whatever the backward pass needs.
    fn relu(&mut self, x: &Self::Tensor) -> Result<(Self::Tensor, Self::Tensor)>;
    fn relu_backward(&mut self, g: &Self::Tensor, mask: &Self::Tensor) -> Result<Self::Tensor>;

    /// Row-wise softmax of `[batch, classes]`.
    fn softmax(&mut self, z: &Self::Tensor) -> Result<Self::Tensor>;
    fn sub(&mut self, a: &Self::Tensor, b: &Self::Tensor) -> Result<Self::Tensor>;
    /// `w - step · g`.
    fn sgd(&mut self, w: &Self::Tensor, g: &Self::Tensor, step: f64) -> Result<Self::Tensor>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.1, batch_size: 128, iterations: 100, seed: 1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }

    /// Per-sample step size: gradients are summed over the batch, so the
    /// batch mean is folded into the learning rate.
    pub fn step(&self) -> f64 {
        self.learning_rate / self.batch_size as f64
    }
}

/// Values recorded by a forward pass for use in backpropagation.
pub struct Trace<T> {
    inputs: Vec<Option<T>>,
    masks: Vec<Option<T>>,
    batch: usize,
}

/// A model graph with its parameters in some representation.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub graph: ModelGraph,
    /// Weight then bias for each parameterised layer, in layer order.
    pub params: Vec<T>,
}

impl<T: Clone> Model<T> {
    pub fn new(graph: ModelGraph, params: Vec<T>) -> Result<Self> {
        let want = 2 * graph.param_shapes().len();
        if params.len() != want {
            return Err(Error::shape(format!("model needs {want} parameter tensors, got {}", params.len())));
        }
        Ok(Model { graph, params })
    }

    /// Index into `params` of each layer's weight.
    fn param_offsets(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.graph
            .layers()
            .iter()
            .map(|l| {
                l.param_shapes().map(|_| {
                    next += 2;
                    next - 2
                })
            })
            .collect()
    }

    /// Logits for a batch; with `record` the activations needed by
    /// [`Model::backward`] are kept.
    pub fn forward<B: Backend<Tensor = T>>(&self, be: &mut B, x: &T, record: bool) -> Result<(T, Option<Trace<T>>)> {
        let dims = B::dims(x);
        let batch = *dims.first().ok_or_else(|| Error::shape("input has no batch axis"))?;
        if dims != self.graph.input_shape(batch) {
            return Err(Error::shape(format!(
                "input {dims:?} does not match model input {:?}",
                self.graph.input_shape(batch)
            )));
        }
        let n = self.graph.layers().len();
        let mut trace = Trace { inputs: vec![None; n], masks: vec![None; n], batch };
        let offsets = self.param_offsets();
        let mut cur = x.clone();
        for (i, layer) in self.graph.layers().iter().enumerate() {
            let shape_in = self.graph.shapes[i];
            let next = match layer {
                LayerSpec::Conv2d { .. } => {
                    let o = offsets[i].expect("conv has parameters");
                    let g = layer.conv_geometry(batch, shape_in)?;
                    be.conv(&cur, &self.params[o], &self.params[o + 1], g)?
                }
                LayerSpec::FullyConnected { .. } => {
                    let o = offsets[i].expect("fc has parameters");
                    be.fc(&cur, &self.params[o], &self.params[o + 1])?
                }
                LayerSpec::AvgPool { .. } => be.avgpool(&cur, layer.pool_geometry(batch, shape_in)?)?,
                LayerSpec::Relu => {
                    let (y, mask) = be.relu(&cur)?;
                    if record {
                        trace.masks[i] = Some(mask);
                    }
                    y
                }
                LayerSpec::Flatten => be.reshape(&cur, &[batch, shape_in.size()])?,
            };
            if record && matches!(layer, LayerSpec::Conv2d { .. } | LayerSpec::FullyConnected { .. }) {
                trace.inputs[i] = Some(cur);
            }
            cur = next;
        }
        Ok((cur, record.then_some(trace)))
    }

    pub fn infer<B: Backend<Tensor = T>>(&self, be: &mut B, x: &T) -> Result<T> {
        Ok(self.forward(be, x, false)?.0)
    }

    /// Parameter gradients (aligned with `params`) given the gradient of
    /// the loss with respect to the logits.
    pub fn backward<B: Backend<Tensor = T>>(&self, be: &mut B, trace: &Trace<T>, grad_out: &T) -> Result<Vec<T>> {
        let batch = trace.batch;
        let offsets = self.param_offsets();
        let mut grads: Vec<Option<T>> = vec![None; self.params.len()];
        let mut g = grad_out.clone();
        for (i, layer) in self.graph.layers().iter().enumerate().rev() {
            let need_input = i > 0;
            let shape_in = self.graph.shapes[i];
            let cached = |v: &Vec<Option<T>>| v.get(i).cloned().flatten().ok_or(Error::MissingCache(i));
            let next = match layer {
                LayerSpec::Conv2d { .. } | LayerSpec::FullyConnected { .. } => {
                    let o = offsets[i].expect("layer has parameters");
                    let x = cached(&trace.inputs)?;
                    let lg = match layer {
                        LayerSpec::Conv2d { .. } => {
                            let geom = layer.conv_geometry(batch, shape_in)?;
                            be.conv_backward(&g, &x, &self.params[o], geom, need_input)?
                        }
                        _ => be.fc_backward(&g, &x, &self.params[o], need_input)?,
                    };
                    grads[o] = Some(lg.weight);
                    grads[o + 1] = Some(lg.bias);
                    lg.input
                }
                LayerSpec::AvgPool { .. } if need_input => {
                    Some(be.avgpool_backward(&g, layer.pool_geometry(batch, shape_in)?)?)
                }
                LayerSpec::Relu if need_input => Some(be.relu_backward(&g, &cached(&trace.masks)?)?),
                LayerSpec::Flatten if need_input => Some(be.reshape(&g, &shape_in.with_batch(batch))?),
                _ => None,
            };
            match next {
                Some(n) => g = n,
                None => break,
            }
        }
        grads.into_iter().enumerate().map(|(i, g)| g.ok_or(Error::MissingCache(i))).collect()
    }

    pub fn sgd_step<B: Backend<Tensor = T>>(&mut self, be: &mut B, grads: &[T], step: f64) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::shape("gradient count does not match parameters"));
        }
        for (w, g) in self.params.iter_mut().zip(grads) {
            *w = be.sgd(w, g, step)?;
        }
        Ok(())
    }

    /// One SGD iteration on `(x, onehot)`; returns the logits of the batch.
    pub fn train_step<B: Backend<Tensor = T>>(&mut self, be: &mut B, x: &T, onehot: &T, step: f64) -> Result<T> {
        let (logits, trace) = self.forward(be, x, true)?;
        let probs = be.softmax(&logits)?;
        let g = be.sub(&probs, onehot)?;
        let grads = self.backward(be, &trace.expect("recorded"), &g)?;
        self.sgd_step(be, &grads, step)?;
        Ok(logits)
    }
}

/// Broadcast a per-channel vector over `outer` leading and `inner` trailing
/// positions: `out[(o, c, k)] = b[c]`.
pub(crate) fn expand_channels<E: Copy>(b: &[E], outer: usize, inner: usize) -> Vec<E> {
    let c = b.len();
    let mut out = Vec::with_capacity(outer * c * inner);
    for _ in 0..outer {
        for &v in b {
            out.extend(std::iter::repeat_n(v, inner));
        }
    }
    out
}

/// Adjoint of [`expand_channels`].
pub(crate) fn reduce_channels<E: crate::ring::Element>(x: &[E], outer: usize, c: usize, inner: usize) -> Vec<E> {
    let mut out = vec![E::default(); c];
    for o in 0..outer {
        for (ch, slot) in out.iter_mut().enumerate() {
            let base = (o * c + ch) * inner;
            for &v in &x[base..base + inner] {
                *slot = slot.acc(v);
            }
        }
    }
    out
}

/// Cross-entropy of row-wise logits against integer labels, in the clear.
pub fn cross_entropy(logits: &[f64], labels: &[u8], classes: usize) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.chunks(classes).zip(labels) {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        total += lse - row[y as usize];
    }
    total / labels.len().max(1) as f64
}

/// Index of the largest logit in each row.
pub fn argmax_rows(logits: &[f64], classes: usize) -> Vec<usize> {
    logits
        .chunks(classes)
        .map(|r| r.iter().enumerate().fold(0, |best, (i, v)| if *v > r[best] { i } else { best }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_expand_and_reduce_are_adjoint() {
        let b = [1u64, 2, 3];
        let e = expand_channels(&b, 2, 4);
        assert_eq!(e.len(), 24);
        assert_eq!(&e[..5], &[1, 1, 1, 1, 2]);
        assert_eq!(reduce_channels(&e, 2, 3, 4), vec![8, 16, 24]);
    }

    #[test]
    fn cross_entropy_of_uniform_logits_is_ln_classes() {
        let ce = cross_entropy(&[0.0; 20], &[3, 7], 10);
        assert!((ce - 10f64.ln()).abs() < 1e-12);
        assert_eq!(argmax_rows(&[0.0, 2.0, 1.0, 5.0, 0.0, 0.0], 3), vec![1, 0]);
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!((TrainConfig::default().step() - 0.1 / 128.0).abs() < 1e-15);
    }
}
