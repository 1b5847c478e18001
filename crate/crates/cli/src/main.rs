//! `trinet` — run a three-party computation in-process or as one TCP party.
//!
//! Reports are printed as comma-separated `key=value` lines on standard
//! output. Exit status is 0 on success, 2 for invalid invocations or inputs
//! and 1 when the protocol run itself fails.

mod config;
mod tasks;

use std::io::Write;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use trinet::ring::FixedPointConfig;
use trinet::transport::tcp::{TcpConfig, TcpTransport};
use trinet::{run_local, session_from_label, session_from_seed, Party};

use config::{Cli, RunConfig};
use tasks::{run_party, Job};

fn init_logging(path: Option<&std::path::Path>) -> anyhow::Result<()> {
    let level = if path.is_some() { "info" } else { "warn" };
    let mut builder = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level));
    if let Some(p) = path {
        let file = std::fs::File::create(p).with_context(|| format!("cannot create log file {}", p.display()))?;
        builder.target(env_logger::Target::Pipe(Box::new(file)));
    }
    builder.try_init()?;
    Ok(())
}

fn execute(job: &Job) -> anyhow::Result<Vec<String>> {
    let cfg = &job.cfg;
    let fixed = FixedPointConfig::new(cfg.frac_bits)?;
    match &cfg.endpoint {
        None => {
            let reports = run_local(cfg.seed, fixed, |p| run_party(p, job))?;
            Ok(reports.into_iter().flatten().collect())
        }
        Some(ep) => {
            let session = match &cfg.session {
                Some(label) => session_from_label(label),
                None => session_from_seed(cfg.seed),
            };
            let transport = TcpTransport::establish(TcpConfig {
                party: ep.id,
                listen: ep.listen.clone(),
                peers: ep.addresses.clone(),
                session,
                timeout: ep.timeout,
            })?;
            log::info!("{} connected", ep.id);
            let mut party = Party::setup(ep.id, Box::new(transport), cfg.seed, session, fixed)?;
            Ok(run_party(&mut party, job)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_logging(cli.log.as_deref()) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let job = match RunConfig::from_cli(cli).and_then(Job::load) {
        Ok(job) => job,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match execute(&job) {
        Ok(lines) => {
            let mut out = std::io::stdout().lock();
            for line in lines {
                // A closed pipe is not worth a failure status.
                if writeln!(out, "{line}").is_err() {
                    break;
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("run failed: {e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
