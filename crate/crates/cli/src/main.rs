//! `urbdiff`: command-line driver for the change-detection pipeline.
//!
//! Every subcommand prints a JSON summary on stdout and logs to stderr.
//! Settings resolve as flag, then `--config` file, then built-in default;
//! thread count additionally honours `URBDIFF_THREADS` between flag and file.
//! Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Run(String),
}

impl From<urbdiff_core::Error> for Failure {
    fn from(e: urbdiff_core::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "urbdiff", version, about = "Urban change detection from multispectral image pairs")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a catalog query and parse a recorded catalog response.
    Acquire(commands::AcquireArgs),
    /// Register a moving scene onto a reference scene.
    Coreg(commands::CoregArgs),
    /// SLIC superpixels and per-segment features.
    Segment(commands::SegmentArgs),
    /// Train a random forest on sample points and label every segment.
    Classify(commands::ClassifyArgs),
    /// Train the Siamese change network on a dataset manifest.
    Train(commands::TrainArgs),
    /// Predict a change map for a scene pair.
    Infer(commands::InferArgs),
    /// Score a change map against a reference map.
    Eval(commands::EvalArgs),
    /// Changed area of a binary change map.
    Area(commands::AreaArgs),
    /// Scan an OSCD-style directory tree into a dataset manifest.
    Manifest(commands::ManifestArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Acquire(_) => "acquire",
            Command::Coreg(_) => "coreg",
            Command::Segment(_) => "segment",
            Command::Classify(_) => "classify",
            Command::Train(_) => "train",
            Command::Infer(_) => "infer",
            Command::Eval(_) => "eval",
            Command::Area(_) => "area",
            Command::Manifest(_) => "manifest",
        }
    }
}

/// Flags that override configuration values.
pub trait Overrides: Args {
    fn apply(&self, _cfg: &mut RunConfig) {}
}

fn thread_count(flag: Option<usize>, cfg: &RunConfig) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("URBDIFF_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Failure::Usage(format!("URBDIFF_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(cfg.threads),
    }
}

fn run(cli: Cli) -> Result<serde_json::Value, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    match &cli.command {
        Command::Acquire(a) => a.apply(&mut cfg),
        Command::Coreg(a) => a.apply(&mut cfg),
        Command::Segment(a) => a.apply(&mut cfg),
        Command::Classify(a) => a.apply(&mut cfg),
        Command::Train(a) => a.apply(&mut cfg),
        Command::Infer(a) => a.apply(&mut cfg),
        Command::Eval(a) => a.apply(&mut cfg),
        Command::Area(a) => a.apply(&mut cfg),
        Command::Manifest(a) => a.apply(&mut cfg),
    }
    cfg.apply_seed();
    if cli.threads == Some(0) {
        return Err(Failure::Usage("--threads must be >= 1".into()));
    }
    cfg.threads = thread_count(cli.threads, &cfg)?;
    cfg.validate()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Run(format!("thread pool: {e}")))?;
    }
    let name = cli.command.name();
    log::info!("urbdiff {name} (seed {})", cfg.seed());
    match &cli.command {
        Command::Acquire(a) => commands::acquire(a, &cfg, name),
        Command::Coreg(a) => commands::coreg(a, &cfg, name),
        Command::Segment(a) => commands::segment(a, &mut cfg, name),
        Command::Classify(a) => commands::classify(a, &cfg, name),
        Command::Train(a) => commands::train(a, &cfg, name),
        Command::Infer(a) => commands::infer(a, &cfg, name),
        Command::Eval(a) => commands::eval(a, &cfg, name),
        Command::Area(a) => commands::area(a, &cfg, name),
        Command::Manifest(a) => commands::manifest(a, &cfg, name),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
