//! The per-party routine behind every task.
//!
//! Simulate mode runs [`run_party`] on three threads; party mode runs it once
//! over TCP. Party 1 owns the model and the data in both modes, so the two
//! produce the same transcript for the same seed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use trinet::data::{load_mnist, Dataset, Split};
use trinet::nn::weights::{convert_precision, read_weights};
use trinet::nn::{argmax_rows, cross_entropy, write_weights, FloatParams, ModelGraph, TrainConfig};
use trinet::pipeline::{mean_relative_error, plain_infer, private_infer, private_train, OwnerInputs, OWNER};
use trinet::protocols::arith::input;
use trinet::protocols::linear::conv2d_shares;
use trinet::protocols::nonlinear::relu;
use trinet::ring::{ConvGeometry, FixedPointConfig, RingTensor};
use trinet::transport::CommStats;
use trinet::Party;

use crate::config::{RunConfig, Task};

/// Precisions visited by the sweep.
pub const SWEEP_BITS: [u32; 6] = [10, 12, 14, 16, 18, 20];

/// What party 1 brings to the computation.
pub struct OwnerAssets {
    /// Precision the parameters are encoded with.
    pub fixed: FixedPointConfig,
    pub params: Vec<RingTensor>,
    pub data: Option<Dataset>,
}

pub struct Job {
    pub cfg: RunConfig,
    pub graph: Option<ModelGraph>,
    pub owner: Option<OwnerAssets>,
}

fn default_weights(model: &Path) -> PathBuf {
    model.with_extension("weights")
}

impl Job {
    /// Load the public model structure and, for the owner, its private inputs.
    pub fn load(cfg: RunConfig) -> Result<Job, String> {
        let graph = match &cfg.model {
            Some(path) => Some(ModelGraph::load(path).map_err(|e| format!("{}: {e}", path.display()))?),
            None => None,
        };
        let owner = if cfg.is_owner_process() && cfg.task != Task::Bench {
            let graph = graph.as_ref().expect("validated: model present");
            let fixed = FixedPointConfig::new(cfg.frac_bits).map_err(|e| e.to_string())?;
            // Training starts from a fresh initialisation unless told otherwise.
            let weights_path = match cfg.task {
                Task::Train => cfg.weights.clone(),
                _ => cfg.weights.clone().or_else(|| cfg.model.as_deref().map(default_weights)),
            };
            let (wfixed, params) = match weights_path {
                Some(p) if p.exists() => read_weights(&p).map_err(|e| format!("{}: {e}", p.display()))?,
                Some(p) => return Err(format!("weight file {} not found", p.display())),
                None => {
                    let init = FloatParams::init(graph, cfg.seed);
                    (fixed, init.encode(fixed).map_err(|e| e.to_string())?)
                }
            };
            trinet::nn::weights::check_shapes(graph, params.iter().map(RingTensor::shape)).map_err(|e| e.to_string())?;
            let dir = cfg.data.as_ref().ok_or("party 1 needs --data for this task")?;
            let split = if cfg.task == Task::Train { Split::Train } else { Split::Test };
            let mut data = load_mnist(dir, split).map_err(|e| format!("{}: {e}", dir.display()))?;
            if let (Task::Train, Some(n)) = (cfg.task, cfg.train_samples) {
                if n > data.len() {
                    return Err(format!("--train-samples {n} exceeds the {} available samples", data.len()));
                }
                data = data.take(n);
            }
            if data.is_empty() {
                return Err(format!("dataset in {} is empty", dir.display()));
            }
            if cfg.task == Task::Infer || cfg.task == Task::Sweep {
                if cfg.count > data.len() {
                    return Err(format!("--count {} exceeds the {} available samples", cfg.count, data.len()));
                }
            }
            Some(OwnerAssets { fixed: wfixed, params, data: Some(data) })
        } else {
            None
        };
        Ok(Job { cfg, graph, owner })
    }
}

fn owner_of<'a>(p: &Party, job: &'a Job) -> Option<&'a OwnerAssets> {
    if p.id() == OWNER {
        job.owner.as_ref()
    } else {
        None
    }
}

fn inputs<'a>(owner: Option<&'a OwnerAssets>, params: &'a [RingTensor]) -> Option<OwnerInputs<'a>> {
    owner.map(|o| OwnerInputs { params, data: o.data.as_ref().expect("owner has data") })
}

fn params_at(owner: Option<&OwnerAssets>, fixed: FixedPointConfig) -> trinet::Result<Vec<RingTensor>> {
    match owner {
        Some(o) if o.fixed != fixed => convert_precision(&o.params, o.fixed, fixed),
        Some(o) => Ok(o.params.clone()),
        None => Ok(Vec::new()),
    }
}

fn metric_lines(p: &Party, task: Task, stats: &CommStats, elapsed_ms: f64) -> Vec<String> {
    let who = p.id();
    let mut lines = vec![format!(
        "metrics,party={who},task={},time_ms={elapsed_ms:.3},bytes_sent={},bytes_received={},messages_sent={},rounds={}",
        format!("{task:?}").to_lowercase(),
        stats.total_bytes_sent(),
        stats.total_bytes_received(),
        stats.total_messages_sent(),
        stats.rounds
    )];
    for (label, n) in &stats.rounds_by_label {
        lines.push(format!("rounds,party={who},label={label},count={n}"));
    }
    lines
}

/// Execute the configured task as party `p` and return its report lines.
pub fn run_party(p: &mut Party, job: &Job) -> trinet::Result<Vec<String>> {
    let start = Instant::now();
    let cfg = &job.cfg;
    let mut lines = match cfg.task {
        Task::Infer => infer(p, job)?,
        Task::Train => train(p, job)?,
        Task::Bench => bench(p, job)?,
        Task::Sweep => sweep(p, job)?,
    };
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let stats = p.stats().clone();
    lines.extend(metric_lines(p, cfg.task, &stats, elapsed));
    Ok(lines)
}

fn infer(p: &mut Party, job: &Job) -> trinet::Result<Vec<String>> {
    let graph = job.graph.as_ref().expect("validated");
    let owner = owner_of(p, job);
    let params = params_at(owner, p.fixed())?;
    let cfg = &job.cfg;
    log::info!("{}: private inference on {} samples", p.id(), cfg.count);
    let logits = private_infer(p, graph, inputs(owner, &params), 0, cfg.count, cfg.batch)?;
    let classes = graph.num_classes();
    let decoded = p.fixed().decode_tensor(&logits);
    let pred = argmax_rows(&decoded, classes);
    let labels = owner.and_then(|o| o.data.as_ref()).map(|d| d.labels());
    let who = p.id();
    let mut lines = Vec::new();
    for (i, (k, row)) in pred.iter().zip(logits.data().chunks(classes)).enumerate() {
        let label = labels.map_or("?".to_string(), |l| l[i].to_string());
        lines.push(format!("prediction,party={who},index={i},argmax={k},label={label}"));
        let raw: Vec<String> = row.iter().map(|&v| (v as i64).to_string()).collect();
        lines.push(format!("logits,party={who},index={i},values={}", raw.join(";")));
    }
    if let Some(l) = labels {
        let correct = pred.iter().zip(l).filter(|(a, b)| **a == **b as usize).count();
        lines.push(format!("accuracy,party={who},correct={correct},total={}", pred.len()));
    }
    Ok(lines)
}

fn train(p: &mut Party, job: &Job) -> trinet::Result<Vec<String>> {
    let graph = job.graph.as_ref().expect("validated");
    let owner = owner_of(p, job);
    let params = params_at(owner, p.fixed())?;
    let cfg = &job.cfg;
    let tc = TrainConfig { learning_rate: cfg.lr, batch_size: cfg.batch, iterations: cfg.iterations, seed: cfg.seed };
    log::info!("{}: private training, {} iterations of batch {}", p.id(), tc.iterations, tc.batch_size);
    let outcome = private_train(p, graph, inputs(owner, &params), &tc, cfg.report_loss)?;
    let who = p.id();
    let mut lines = Vec::new();
    if owner.is_some() {
        for (i, (logits, labels)) in outcome.history.iter().enumerate() {
            let loss = cross_entropy(&p.fixed().decode_tensor(logits), labels, graph.num_classes());
            lines.push(format!("train,party={who},iteration={},loss={loss:.6}", i + 1));
        }
        if let Some(out) = &cfg.out {
            write_weights(out, p.fixed(), &outcome.params)?;
            lines.push(format!("weights,party={who},path={}", out.display()));
        }
    }
    Ok(lines)
}

fn bench(p: &mut Party, job: &Job) -> trinet::Result<Vec<String>> {
    let cfg = &job.cfg;
    let fixed = p.fixed();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut random = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let who = p.id();
    let is_owner = who == OWNER;
    let mut lines = Vec::new();
    for &n in &cfg.conv_sizes {
        let geom = ConvGeometry {
            batch: 1,
            in_channels: 3,
            height: n,
            width: n,
            out_channels: 64,
            kernel_h: 11,
            kernel_w: 11,
            stride: 4,
            padding: 0,
        };
        geom.validate()?;
        let x = fixed.encode_tensor(&geom.input_shape(), &random(3 * n * n))?;
        let w = fixed.encode_tensor(&geom.weight_shape(), &random(64 * 3 * 121))?;
        let xs = input(p, OWNER, is_owner.then_some(&x), &geom.input_shape())?;
        let ws = input(p, OWNER, is_owner.then_some(&w), &geom.weight_shape())?;
        let before = p.stats().clone();
        let t0 = Instant::now();
        conv2d_shares(p, &xs, &ws, geom)?;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        let d = p.stats().since(&before);
        lines.push(format!("conv,n={n},time_ms={ms:.3},bytes={},rounds={},party={who}", d.total_bytes_sent(), d.rounds));
    }
    for &n in &cfg.relu_sizes {
        let x = fixed.encode_tensor(&[n], &random(n))?;
        let xs = input(p, OWNER, is_owner.then_some(&x), &[n])?;
        let before = p.stats().clone();
        let t0 = Instant::now();
        relu(p, &xs)?;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        let d = p.stats().since(&before);
        lines.push(format!("relu,n={n},time_ms={ms:.3},bytes={},rounds={},party={who}", d.total_bytes_sent(), d.rounds));
    }
    Ok(lines)
}

fn sweep(p: &mut Party, job: &Job) -> trinet::Result<Vec<String>> {
    let cfg = &job.cfg;
    if cfg.count == 0 {
        return Ok(Vec::new());
    }
    let graph = job.graph.as_ref().expect("validated");
    let owner = owner_of(p, job);
    let classes = graph.num_classes();
    let reference = match owner {
        Some(o) => {
            let data = o.data.as_ref().expect("owner has data");
            Some(plain_infer(graph, &o.params, o.fixed, data, 0, cfg.count)?.1)
        }
        None => None,
    };
    let original = p.fixed();
    let who = p.id();
    let mut lines = Vec::new();
    for t in SWEEP_BITS {
        let fixed = FixedPointConfig::new(t)?;
        p.set_fixed(fixed);
        let params = params_at(owner, fixed)?;
        log::info!("{who}: sweep at t = {t}");
        let logits = private_infer(p, graph, inputs(owner, &params), 0, cfg.count, cfg.batch)?;
        if let Some(r) = &reference {
            let err = mean_relative_error(&fixed.decode_tensor(&logits), r, classes);
            lines.push(format!("sweep,party={who},t={t},samples={},mean_rel_err={err:.6e}", cfg.count));
        }
    }
    p.set_fixed(original);
    Ok(lines)
}
