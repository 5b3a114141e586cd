//! `extagents`: run, evaluate, filter, benchmark and replay experiments.
//!
//! Exit status is 0 on success, 2 when some samples failed, and 1 on
//! configuration, input or schema errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{snake, token_count, Overrides};

#[derive(Parser, Debug)]
#[command(
    name = "extagents",
    version,
    about = "Question answering over knowledge larger than the context window"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Answer every sample of a dataset and write one result record each.
    Run(RunArgs),
    /// Score a method over repeated runs of a dataset.
    Evaluate(EvaluateArgs),
    /// Drop samples that a single window of their context already answers.
    Filter(FilterArgs),
    /// Critical-path rounds and modeled wall time over a grid of input lengths.
    BenchLatency(BenchArgs),
    /// Recompute totals from stored traces without calling any backend.
    Replay(ReplayArgs),
    /// Write a synthetic dataset and its oracle world.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
    /// Include the full call trace in each record.
    #[arg(long)]
    trace: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long, value_parser = token_count)]
    window: Option<usize>,
    /// Samples longer than this are kept without judging.
    #[arg(long, value_parser = token_count)]
    keep_over: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    half_stride: bool,
    /// Per-sample audit log.
    #[arg(long)]
    audit: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    common: Overrides,
    /// Comma-separated input lengths, e.g. 8k,16k,32k.
    #[arg(long, value_delimiter = ',', value_parser = token_count)]
    lengths: Vec<usize>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = |s: &str| s.parse::<extagents_core::Method>())]
    methods: Vec<extagents_core::Method>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// Trace document or result file.
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input price in dollars per million tokens.
    #[arg(long, requires = "output_price")]
    input_price: Option<f64>,
    /// Output price in dollars per million tokens.
    #[arg(long, requires = "input_price")]
    output_price: Option<f64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_parser = snake::<commands::SuiteKind>, default_value = "uniform")]
    suite: commands::SuiteKind,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Document length in 1k blocks, where the suite takes one.
    #[arg(long, default_value_t = 64)]
    blocks: usize,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    world: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(&a.common, a.trace),
        Command::Evaluate(a) => commands::evaluate(&a.common, a.runs),
        Command::Filter(a) => commands::filter(
            &a.common,
            commands::FilterFlags {
                window: a.window,
                keep_over: a.keep_over,
                threshold: a.threshold,
                half_stride: a.half_stride,
                audit: a.audit,
            },
        ),
        Command::BenchLatency(a) => commands::bench_latency(&a.common, a.lengths, a.methods),
        Command::Replay(a) => commands::replay(
            &a.input,
            a.config.as_deref(),
            a.input_price.zip(a.output_price),
            a.output.as_deref(),
        ),
        Command::Synth(a) => commands::synth(a.suite, a.count, a.seed, a.blocks, &a.dataset, &a.world),
    };
    match result {
        Ok(commands::Status::Complete) => ExitCode::SUCCESS,
        Ok(commands::Status::Partial(n)) => {
            eprintln!("warning: {n} sample(s) failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
