//! Regenerate `fixtures/models`: the model specs and a LeNet trained in
//! plaintext floating point on the bundled MNIST subset.
//!
//! ```text
//! cargo run --release -p trinet-core --example make_fixtures -- fixtures
//! ```

use std::path::PathBuf;

use trinet::data::{load_mnist, Split};
use trinet::nn::{alexnet_cifar, lenet, write_weights, FloatParams, Model, TrainConfig};
use trinet::pipeline::{plain_float_train, plain_infer};
use trinet::ring::FixedPointConfig;

fn main() -> trinet::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    let models = root.join("models");
    std::fs::create_dir_all(&models)?;
    for g in [lenet(), alexnet_cifar()] {
        std::fs::write(models.join(format!("{}.toml", g.spec.name)), g.to_toml_string()?)?;
    }

    let train = load_mnist(root.join("mnist"), Split::Train)?;
    let test = load_mnist(root.join("mnist"), Split::Test)?;
    let graph = lenet();
    let mut model = Model::from_float(graph.clone(), &FloatParams::init(&graph, 20210501))?;
    let per_epoch = train.len() / 32;
    for (epoch, lr) in [0.1, 0.1, 0.05, 0.05, 0.02, 0.02].into_iter().enumerate() {
        let cfg = TrainConfig { learning_rate: lr, batch_size: 32, iterations: per_epoch, seed: 0 };
        let losses = plain_float_train(&mut model, &train, &cfg)?;
        println!("epoch {}: mean loss {:.4}", epoch + 1, losses.iter().sum::<f64>() / losses.len() as f64);
    }

    let fixed = FixedPointConfig::default();
    let params = model.float_params().encode(fixed)?;
    write_weights(models.join("lenet.weights"), fixed, &params)?;

    let (_, logits) = plain_infer(&graph, &params, fixed, &test, 0, test.len())?;
    let pred = trinet::nn::argmax_rows(&logits, 10);
    let correct = pred.iter().zip(test.labels()).filter(|(p, l)| **p == **l as usize).count();
    println!("test accuracy {}/{}", correct, test.len());
    Ok(())
}
