//! `transdiff --config <file> --out <dir>`: runs one experiment and writes
//! `report.json` plus CSV tables. Exit status 0 when every check passes, 2 when
//! a check fails, 1 on configuration or runtime errors.

mod config;
mod experiments;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::Parser;
use sha2::{Digest, Sha256};

use crate::config::Experiment;
use crate::report::Meta;

#[derive(Parser)]
#[command(name = "transdiff", version, about = "Transmission-diffusion experiments")]
struct Args {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

enum Status {
    Passed,
    Failed,
}

fn run(args: &Args) -> Result<Status> {
    let bytes = std::fs::read(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let text = std::str::from_utf8(&bytes).context("config is not UTF-8")?;
    let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    let mut exp = Experiment::parse(text)?;
    if let Some(seed) = args.seed {
        exp.set_seed(seed);
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| exp.output_dir().cloned())
        .ok_or_else(|| anyhow!("no output directory: pass --out or set output_dir"))?;
    if let Some(n) = args.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let outcome = experiments::run(&exp)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let meta = Meta {
        experiment: exp.kind().name(),
        config_sha256: &digest,
        seed: exp.seed(),
        threads: rayon::current_num_threads(),
    };
    report::write(&out_dir, &meta, &outcome)?;
    for c in &outcome.checks {
        let op = match c.comparison {
            report::Comparison::AtMost => "<=",
            report::Comparison::AtLeast => ">=",
        };
        println!("{} {}: {:e} {op} {:e}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    Ok(if outcome.pass() { Status::Passed } else { Status::Failed })
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(Status::Passed) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
