//! End-to-end workflows: private inference and training with one data owner,
//! and the matching plaintext runs used as references.
//!
//! In every private workflow P1 owns the model parameters and the data; it
//! secret-shares them at the start, and the parties open only the values the
//! caller asks for.

use crate::data::{onehot, Dataset, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nn::{share_model, FixedBackend, FloatBackend, FloatTensor, Model, ModelGraph, PrivateBackend, TrainConfig};
use crate::party::Party;
use crate::protocols::arith::{input, reveal};
use crate::ring::{FixedPointConfig, RingTensor};
use crate::sharing::PartyId;

pub const OWNER: PartyId = PartyId::P1;

/// What the data owner contributes; other parties pass `None`.
pub struct OwnerInputs<'a> {
    pub params: &'a [RingTensor],
    pub data: &'a Dataset,
}

fn image_batch(graph: &ModelGraph, data: &Dataset, start: usize, count: usize, fixed: FixedPointConfig) -> Result<(RingTensor, RingTensor, Vec<u8>)> {
    let (x, y) = data.batch(start, count);
    let images = fixed.encode_tensor(&graph.input_shape(count), &x)?;
    let labels = fixed.encode_tensor(&[count, graph.num_classes()], &onehot(&y, graph.num_classes()))?;
    Ok((images, labels, y))
}

fn check_graph(graph: &ModelGraph, data: Option<&Dataset>) -> Result<()> {
    if graph.num_classes() != NUM_CLASSES && data.is_some() {
        return Err(Error::Config(format!("dataset has {NUM_CLASSES} classes, model {}", graph.num_classes())));
    }
    if let Some(d) = data {
        if d.image_size() != graph.shapes[0].size() {
            return Err(Error::shape(format!("dataset images have {} pixels, model expects {}", d.image_size(), graph.shapes[0].size())));
        }
    }
    Ok(())
}

/// Private inference on `count` samples starting at `start`, in batches of
/// at most `batch`. Returns the opened logits, `[count, classes]`.
pub fn private_infer(
    p: &mut Party,
    graph: &ModelGraph,
    owner: Option<OwnerInputs<'_>>,
    start: usize,
    count: usize,
    batch: usize,
) -> Result<RingTensor> {
    check_graph(graph, owner.as_ref().map(|o| o.data))?;
    if batch == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let fixed = p.fixed();
    let model = share_model(p, graph, OWNER, owner.as_ref().map(|o| o.params))?;
    let classes = graph.num_classes();
    let mut out = Vec::with_capacity(count * classes);
    let mut done = 0;
    while done < count {
        let n = batch.min(count - done);
        let x = match &owner {
            Some(o) => Some(image_batch(graph, o.data, start + done, n, fixed)?.0),
            None => None,
        };
        let xs = input(p, OWNER, x.as_ref(), &graph.input_shape(n))?;
        let logits = model.infer(&mut PrivateBackend::new(p), &xs)?;
        out.extend_from_slice(reveal(p, &logits)?.data());
        done += n;
    }
    RingTensor::new(vec![count, classes], out)
}

/// Result of a training run: final parameters and per-iteration logits.
pub struct TrainOutcome {
    pub params: Vec<RingTensor>,
    /// Logits of each iteration's batch, with that batch's labels.
    pub history: Vec<(RingTensor, Vec<u8>)>,
}

/// Samples `(i · batch) mod n ..` form the batch of iteration `i`.
fn batch_start(cfg: &TrainConfig, i: usize, n: usize) -> usize {
    (i * cfg.batch_size) % n.max(1)
}

/// Private SGD. Weights and, when `open_logits` is set, each iteration's
/// logits are opened to every party at the end of the run.
pub fn private_train(
    p: &mut Party,
    graph: &ModelGraph,
    owner: Option<OwnerInputs<'_>>,
    cfg: &TrainConfig,
    open_logits: bool,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_graph(graph, owner.as_ref().map(|o| o.data))?;
    let fixed = p.fixed();
    let mut model = share_model(p, graph, OWNER, owner.as_ref().map(|o| o.params))?;
    let b = cfg.batch_size;
    let mut logits_shares = Vec::new();
    let mut labels = Vec::new();
    for i in 0..cfg.iterations {
        let (x, y, lab) = match &owner {
            Some(o) => {
                let (x, y, lab) = image_batch(graph, o.data, batch_start(cfg, i, o.data.len()), b, fixed)?;
                (Some(x), Some(y), lab)
            }
            None => (None, None, Vec::new()),
        };
        let xs = input(p, OWNER, x.as_ref(), &graph.input_shape(b))?;
        let ys = input(p, OWNER, y.as_ref(), &[b, graph.num_classes()])?;
        let logits = model.train_step(&mut PrivateBackend::new(p), &xs, &ys, cfg.step())?;
        log::debug!("{}: iteration {} done", p.id(), i + 1);
        if open_logits {
            logits_shares.push(logits);
            labels.push(lab);
        }
    }
    let params = model.params.iter().map(|w| reveal(p, w)).collect::<Result<Vec<_>>>()?;
    let history = logits_shares
        .iter()
        .zip(labels)
        .map(|(l, lab)| Ok((reveal(p, l)?, lab)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainOutcome { params, history })
}

/// The plaintext fixed-point run that [`private_train`] is compared against.
pub fn plain_fixed_train(graph: &ModelGraph, params: &[RingTensor], data: &Dataset, cfg: &TrainConfig, fixed: FixedPointConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_graph(graph, Some(data))?;
    let mut model = Model::from_ring(graph.clone(), params.to_vec())?;
    let mut be = FixedBackend::new(fixed);
    let mut history = Vec::with_capacity(cfg.iterations);
    for i in 0..cfg.iterations {
        let (x, y, lab) = image_batch(graph, data, batch_start(cfg, i, data.len()), cfg.batch_size, fixed)?;
        let logits = model.train_step(&mut be, &x, &y, cfg.step())?;
        history.push((logits, lab));
    }
    Ok(TrainOutcome { params: model.params, history })
}

/// Plaintext float SGD; returns the trained model and per-iteration
/// cross-entropy.
pub fn plain_float_train(model: &mut Model<FloatTensor>, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_graph(&model.graph, Some(data))?;
    let mut be = FloatBackend::default();
    let classes = model.graph.num_classes();
    let mut losses = Vec::with_capacity(cfg.iterations);
    for i in 0..cfg.iterations {
        let (x, lab) = data.batch(batch_start(cfg, i, data.len()), cfg.batch_size);
        let x = FloatTensor::new(model.graph.input_shape(cfg.batch_size), x)?;
        let y = FloatTensor::new(vec![cfg.batch_size, classes], onehot(&lab, classes))?;
        let logits = model.train_step(&mut be, &x, &y, cfg.step())?;
        losses.push(crate::nn::cross_entropy(logits.data(), &lab, classes));
    }
    Ok(losses)
}

/// Plaintext logits for `count` samples, in fixed point and in float.
pub fn plain_infer(
    graph: &ModelGraph,
    params: &[RingTensor],
    fixed: FixedPointConfig,
    data: &Dataset,
    start: usize,
    count: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_graph(graph, Some(data))?;
    let fixed_model = Model::from_ring(graph.clone(), params.to_vec())?;
    let float_model = Model::from_float(graph.clone(), &crate::nn::FloatParams::decode(params, fixed))?;
    let (images, _, _) = image_batch(graph, data, start, count, fixed)?;
    let z_fixed = fixed_model.infer(&mut FixedBackend::new(fixed), &images)?;
    let (x, _) = data.batch(start, count);
    let z_float = float_model.infer(&mut FloatBackend::default(), &FloatTensor::new(graph.input_shape(count), x)?)?;
    Ok((fixed.decode_tensor(&z_fixed), z_float.into_data()))
}

/// Mean over samples of `‖a − b‖ / ‖b‖` computed row by row.
pub fn mean_relative_error(a: &[f64], b: &[f64], classes: usize) -> f64 {
    let rows = a.len() / classes.max(1);
    if rows == 0 {
        return 0.0;
    }
    let total: f64 = a
        .chunks(classes)
        .zip(b.chunks(classes))
        .map(|(x, y)| {
            let num = x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            let den = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            num / den.max(f64::MIN_POSITIVE)
        })
        .sum();
    total / rows as f64
}
