//! Secret-shared execution of models.

use crate::error::{Error, Result};
use crate::nn::plain::SGD_GUARD_BITS;
use crate::nn::{expand_channels, reduce_channels, Backend, LayerGrads, Model, ModelGraph};
use crate::party::Party;
use crate::protocols::approx::{softmax, ExpConfig, ReciprocalConfig};
use crate::protocols::arith::{input, mul, mul_public_real};
use crate::protocols::linear::{avgpool_shares, bilinear_shares, conv2d_shares, divide_public, matmul_shares};
use crate::protocols::nonlinear::relu_with_mask;
use crate::ring::{
    bilinear_exact, col2im, im2col, nchw_to_rows, BilinearOpSpec, ConvGeometry, PoolGeometry, RingTensor,
};
use crate::sharing::{ArithmeticShare, PartyId};

/// One party's view of private model evaluation.
pub struct PrivateBackend<'a> {
    pub party: &'a mut Party,
    pub exp: ExpConfig,
    pub recip: ReciprocalConfig,
}

impl<'a> PrivateBackend<'a> {
    pub fn new(party: &'a mut Party) -> Self {
        PrivateBackend { party, exp: ExpConfig::default(), recip: ReciprocalConfig::default() }
    }
}

fn ring(shape: Vec<usize>, data: Vec<u64>) -> Result<RingTensor> {
    RingTensor::new(shape, data)
}

impl Backend for PrivateBackend<'_> {
    type Tensor = ArithmeticShare;

    fn dims(t: &ArithmeticShare) -> Vec<usize> {
        t.shape().to_vec()
    }

    fn reshape(&mut self, t: &ArithmeticShare, shape: &[usize]) -> Result<ArithmeticShare> {
        t.reshape(shape)
    }

    fn fc(&mut self, x: &ArithmeticShare, w: &ArithmeticShare, b: &ArithmeticShare) -> Result<ArithmeticShare> {
        let [batch, _] = x.lo.dims2()?;
        let [out, _] = w.lo.dims2()?;
        if b.len() != out {
            return Err(Error::shape(format!("bias {:?} for {out} outputs", b.shape())));
        }
        let wt = w.map_linear(RingTensor::transpose)?;
        let y = matmul_shares(self.party, x, &wt)?;
        y.add(&b.map_linear(|t| ring(vec![batch, out], expand_channels(t.data(), batch, 1)))?)
    }

    fn fc_backward(
        &mut self,
        g: &ArithmeticShare,
        x: &ArithmeticShare,
        w: &ArithmeticShare,
        need_input: bool,
    ) -> Result<LayerGrads<ArithmeticShare>> {
        let [batch, out] = g.lo.dims2()?;
        let gt = g.map_linear(RingTensor::transpose)?;
        let weight = matmul_shares(self.party, &gt, x)?;
        let bias = g.map_linear(|t| ring(vec![out], reduce_channels(t.data(), batch, out, 1)))?;
        let input = need_input.then(|| matmul_shares(self.party, g, w)).transpose()?;
        Ok(LayerGrads { weight, bias, input })
    }

    fn conv(&mut self, x: &ArithmeticShare, w: &ArithmeticShare, b: &ArithmeticShare, geom: ConvGeometry) -> Result<ArithmeticShare> {
        if b.len() != geom.out_channels {
            return Err(Error::shape(format!("bias {:?} for {} channels", b.shape(), geom.out_channels)));
        }
        let y = conv2d_shares(self.party, x, w, geom)?;
        let shape = geom.output_shape();
        y.add(&b.map_linear(|t| ring(shape.to_vec(), expand_channels(t.data(), shape[0], shape[2] * shape[3])))?)
    }

    /// Weight gradient `G_rowsᵀ · im2col(X)` and input gradient
    /// `col2im(G_rows · W)`, where `G_rows` lists the output gradient one row
    /// per output position. `col2im` is applied to the local 3-of-3 products
    /// before resharing, so only the input-sized result is communicated.
    fn conv_backward(
        &mut self,
        g: &ArithmeticShare,
        x: &ArithmeticShare,
        w: &ArithmeticShare,
        geom: ConvGeometry,
        need_input: bool,
    ) -> Result<LayerGrads<ArithmeticShare>> {
        let [n, oc, oh, ow] = geom.output_shape();
        let (rows, taps) = (geom.col_rows(), geom.col_cols());
        let g_rows = g.map_linear(|t| ring(vec![rows, oc], nchw_to_rows(t.data(), n, oc, oh, ow)))?;
        let x_cols = x.map_linear(|t| ring(vec![rows, taps], im2col(t.data(), &geom)))?;
        let g_rows_t = g_rows.map_linear(RingTensor::transpose)?;
        let weight = matmul_shares(self.party, &g_rows_t, &x_cols)?.reshape(&geom.weight_shape())?;
        let bias = g.map_linear(|t| ring(vec![oc], reduce_channels(t.data(), n, oc, oh * ow)))?;
        let input = if need_input {
            let w_mat = w.reshape(&[oc, taps])?;
            let spec = BilinearOpSpec::matmul(rows, oc, taps);
            let scatter = |z: RingTensor| ring(geom.input_shape().to_vec(), col2im(z.data(), &geom));
            Some(bilinear_shares(self.party, &g_rows, &w_mat, |a, b| bilinear_exact(a, b, &spec), Some(&scatter))?)
        } else {
            None
        };
        Ok(LayerGrads { weight, bias, input })
    }

    fn avgpool(&mut self, x: &ArithmeticShare, geom: PoolGeometry) -> Result<ArithmeticShare> {
        avgpool_shares(self.party, x, geom)
    }

    /// Each window receives `grad / area` at every position it covers.
    fn avgpool_backward(&mut self, g: &ArithmeticShare, geom: PoolGeometry) -> Result<ArithmeticShare> {
        let area = geom.area();
        let d = divide_public(self.party, g, area)?;
        let conv = geom.as_depthwise_conv();
        d.map_linear(|t| {
            let spread: Vec<u64> = t.data().iter().flat_map(|&v| std::iter::repeat_n(v, area)).collect();
            ring(geom.input_shape().to_vec(), col2im(&spread, &conv))
        })
    }

    fn relu(&mut self, x: &ArithmeticShare) -> Result<(ArithmeticShare, ArithmeticShare)> {
        relu_with_mask(self.party, x)
    }

    /// The mask is an unscaled 0/1 sharing, so no truncation follows.
    fn relu_backward(&mut self, g: &ArithmeticShare, mask: &ArithmeticShare) -> Result<ArithmeticShare> {
        mul(self.party, g, mask)
    }

    fn softmax(&mut self, z: &ArithmeticShare) -> Result<ArithmeticShare> {
        softmax(self.party, z, self.exp, self.recip)
    }

    fn sub(&mut self, a: &ArithmeticShare, b: &ArithmeticShare) -> Result<ArithmeticShare> {
        a.sub(b)
    }

    fn sgd(&mut self, w: &ArithmeticShare, g: &ArithmeticShare, step: f64) -> Result<ArithmeticShare> {
        w.sub(&mul_public_real(self.party, g, step, SGD_GUARD_BITS)?)
    }
}

/// `softmax(logits) − y` without ever evaluating the loss itself.
pub fn loss_grad_output(
    be: &mut PrivateBackend<'_>,
    logits: &ArithmeticShare,
    onehot: &ArithmeticShare,
) -> Result<ArithmeticShare> {
    if logits.shape() != onehot.shape() {
        return Err(Error::shape(format!("logits {:?} vs labels {:?}", logits.shape(), onehot.shape())));
    }
    let probs = be.softmax(logits)?;
    probs.sub(onehot)
}

/// Secret-share a model whose parameters are held by `owner`.
///
/// The owner passes the ring-encoded parameters; the other parties pass
/// `None` and learn only the shapes from the graph.
pub fn share_model(
    p: &mut Party,
    graph: &ModelGraph,
    owner: PartyId,
    params: Option<&[RingTensor]>,
) -> Result<Model<ArithmeticShare>> {
    let shapes: Vec<Vec<usize>> = graph.param_shapes().into_iter().flat_map(|(w, b)| [w, b]).collect();
    if let Some(ps) = params {
        crate::nn::weights::check_shapes(graph, ps.iter().map(RingTensor::shape))?;
    }
    let shares = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| input(p, owner, params.map(|ps| &ps[i]), s))
        .collect::<Result<Vec<_>>>()?;
    Model::new(graph.clone(), shares)
}
