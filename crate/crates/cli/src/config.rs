//! Command-line flags and their validation into a [`RunConfig`].

use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use trinet::sharing::PartyId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// All three parties in this process.
    Simulate,
    /// One party, talking to its peers over TCP.
    Party,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Infer,
    Train,
    Bench,
    Sweep,
}

#[derive(Debug, Parser)]
#[command(name = "trinet", version, about = "Three-party private CNN inference and training")]
pub struct Cli {
    #[arg(long, value_enum, default_value_t = Mode::Simulate)]
    pub mode: Mode,
    /// This process's party id (1, 2 or 3) in party mode.
    #[arg(long)]
    pub party: Option<u8>,
    /// The other two parties' addresses, in increasing party-id order.
    #[arg(long, value_delimiter = ',')]
    pub peers: Vec<String>,
    /// Address to accept peer connections on (party mode).
    #[arg(long)]
    pub listen: Option<String>,
    /// Session label; all three parties must agree. Defaults to one derived from the seed.
    #[arg(long)]
    pub session: Option<String>,
    /// Model spec (TOML).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Weight file. Inference defaults to the model path with a `.weights`
    /// extension; training starts from a seeded initialisation without it.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Directory with MNIST IDX files (read by party 1 only).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Fractional bits of the fixed-point encoding.
    #[arg(long = "t", default_value_t = 20)]
    pub frac_bits: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Task::Infer)]
    pub task: Task,
    /// Number of test images for infer and sweep.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// Train on only the first N training samples.
    #[arg(long)]
    pub train_samples: Option<usize>,
    /// Where party 1 writes trained weights.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Open each training iteration's logits and report the loss (testing aid).
    #[arg(long)]
    pub report_loss: bool,
    /// Input sizes n for the n×n×3 convolution benchmark.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
    pub conv_sizes: Vec<usize>,
    /// Element counts for the ReLU benchmark.
    #[arg(long, value_delimiter = ',', default_value = "50000,100000,200000,400000")]
    pub relu_sizes: Vec<usize>,
    /// Seconds to wait for peers in party mode.
    #[arg(long, default_value_t = 30)]
    pub timeout: u64,
    /// Write a structured log to this file.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

/// TCP endpoint settings for party mode.
#[derive(Clone, Debug)]
pub struct PartyEndpoint {
    pub id: PartyId,
    pub listen: String,
    /// Addresses indexed by party; this party's own entry is its listen address.
    pub addresses: [String; 3],
    pub timeout: Duration,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub endpoint: Option<PartyEndpoint>,
    pub session: Option<String>,
    pub model: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub frac_bits: u32,
    pub seed: u64,
    pub task: Task,
    pub count: usize,
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    pub train_samples: Option<usize>,
    pub out: Option<PathBuf>,
    pub report_loss: bool,
    pub conv_sizes: Vec<usize>,
    pub relu_sizes: Vec<usize>,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, String> {
        let endpoint = match cli.mode {
            Mode::Simulate => {
                if cli.party.is_some() || !cli.peers.is_empty() || cli.listen.is_some() {
                    return Err("--party, --peers and --listen only apply to --mode party".into());
                }
                None
            }
            Mode::Party => {
                let id = cli.party.ok_or("--mode party requires --party")?;
                let id = PartyId::new(id).map_err(|e| e.to_string())?;
                let listen = cli.listen.ok_or("--mode party requires --listen")?;
                let [a, b]: [String; 2] =
                    cli.peers.try_into().map_err(|_| "--peers needs exactly two addresses".to_string())?;
                let mut others = PartyId::ALL.into_iter().filter(|&q| q != id);
                let mut addresses: [String; 3] = Default::default();
                addresses[others.next().expect("two peers").index()] = a;
                addresses[others.next().expect("two peers").index()] = b;
                addresses[id.index()] = listen.clone();
                Some(PartyEndpoint { id, listen, addresses, timeout: Duration::from_secs(cli.timeout) })
            }
        };
        if !(1..=30).contains(&cli.frac_bits) {
            return Err(format!("--t must lie in 1..=30, got {}", cli.frac_bits));
        }
        if matches!(cli.task, Task::Infer | Task::Train | Task::Sweep) && cli.model.is_none() {
            return Err("this task needs --model".into());
        }
        if cli.batch == 0 {
            return Err("--batch must be at least 1".into());
        }
        if cli.task == Task::Train && !(cli.lr > 0.0 && cli.lr.is_finite()) {
            return Err("--lr must be positive".into());
        }
        if cli.train_samples == Some(0) {
            return Err("--train-samples must be at least 1".into());
        }
        if cli.task == Task::Infer && cli.count == 0 {
            return Err("--count must be at least 1 for inference".into());
        }
        Ok(RunConfig {
            endpoint,
            session: cli.session,
            model: cli.model,
            weights: cli.weights,
            data: cli.data,
            frac_bits: cli.frac_bits,
            seed: cli.seed,
            task: cli.task,
            count: cli.count,
            iterations: cli.iterations,
            batch: cli.batch,
            lr: cli.lr,
            train_samples: cli.train_samples,
            out: cli.out,
            report_loss: cli.report_loss,
            conv_sizes: cli.conv_sizes,
            relu_sizes: cli.relu_sizes,
        })
    }

    /// Party 1 owns the model and the data; in party mode only it loads them.
    pub fn is_owner_process(&self) -> bool {
        self.endpoint.as_ref().is_none_or(|e| e.id == PartyId::P1)
    }
}
