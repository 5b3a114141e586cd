//! The verbs. Each resolves its settings, validates them, and only then
//! touches datasets or backends.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use extagents_core::backend::{BackendKind, CostModel, TemplateLibrary, World};
use extagents_core::eval::{self, FilterDecision};
use extagents_core::knowledge::{format_token_count, read_dataset, Sample};
use extagents_core::orchestrator::{read_results, write_results, RESULT_SCHEMA};
use extagents_core::synth::{self, Generator, Placement, Suite, BLOCK_TOKENS};
use extagents_core::trace::{Totals, Trace, TRACE_SCHEMA};
use extagents_core::{Engine, Method};

use crate::config::{Overrides, Settings};

const LATENCY_SCHEMA: &str = "extagents.latency/v1";
const REPLAY_SCHEMA: &str = "extagents.replay/v1";

pub enum Status {
    Complete,
    /// Number of samples that failed.
    Partial(usize),
}

impl Status {
    fn from_failures(n: usize) -> Self {
        if n == 0 {
            Status::Complete
        } else {
            Status::Partial(n)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn settings(flags: &Overrides) -> Result<Settings> {
    let s = flags.resolve()?;
    s.run.validate().map_err(anyhow::Error::msg)?;
    Ok(s)
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .with_context(|| format!("missing --{flag} (or paths.{flag} in the config file)"))
}

fn uses_oracle(s: &Settings) -> bool {
    let r = &s.run.role_backends;
    [&r.seeking, &r.reasoning, r.rating()]
        .iter()
        .any(|b| b.kind == BackendKind::Oracle)
}

fn engine(s: &Settings, world: Option<World>) -> Result<Engine> {
    let templates = match &s.paths.templates {
        Some(dir) => TemplateLibrary::load_dir(dir).with_context(|| format!("templates in {}", dir.display()))?,
        None => TemplateLibrary::builtin(),
    };
    let world = match world {
        Some(w) => Some(w),
        None if uses_oracle(s) => {
            let p = require(&s.paths.world, "world").context("the oracle backend answers from a world file")?;
            Some(World::load(p)?)
        }
        None => None,
    };
    Ok(Engine::from_config(s.run.clone(), world, templates)?)
}

fn dataset(s: &Settings) -> Result<Vec<Sample>> {
    let p = require(&s.paths.dataset, "dataset")?;
    read_dataset(p).with_context(|| format!("dataset {}", p.display()))
}

pub fn run(flags: &Overrides, with_trace: bool) -> Result<Status> {
    let s = settings(flags)?;
    require(&s.paths.dataset, "dataset")?;
    let engine = engine(&s, None)?;
    let samples = dataset(&s)?;
    let records: Vec<_> = eval::run_samples(&engine, &samples, with_trace)
        .into_iter()
        .map(|(r, _)| r)
        .collect();
    write_results(output(s.paths.output.as_deref())?, &records)?;
    let failures = records.iter().filter(|r| r.is_failure()).count();
    let scores: Vec<f64> = records.iter().filter_map(|r| r.f1).collect();
    if !scores.is_empty() {
        log::info!(
            "mean F1 {:.4} over {} samples",
            scores.iter().sum::<f64>() / scores.len() as f64,
            scores.len()
        );
    }
    Ok(Status::from_failures(failures))
}

pub fn evaluate(flags: &Overrides, runs: Option<usize>) -> Result<Status> {
    let mut s = settings(flags)?;
    if let Some(r) = runs {
        s.evaluate.runs = r;
    }
    if s.evaluate.runs == 0 {
        bail!("runs must be at least 1");
    }
    require(&s.paths.dataset, "dataset")?;
    let engine = engine(&s, None)?;
    let samples = dataset(&s)?;
    let report = eval::evaluate(&engine, &samples, s.evaluate.runs)?;
    report.write_lines(output(s.paths.output.as_deref())?)?;
    eprintln!(
        "{}: median F1 {:.4} over {} run(s)",
        report.method,
        report.median_f1,
        report.runs.len()
    );
    Ok(Status::from_failures(
        report.rows.iter().filter(|r| r.error.is_some()).count(),
    ))
}

pub struct FilterFlags {
    pub window: Option<usize>,
    pub keep_over: Option<usize>,
    pub threshold: Option<f64>,
    pub half_stride: bool,
    pub audit: Option<PathBuf>,
}

pub fn filter(flags: &Overrides, f: FilterFlags) -> Result<Status> {
    let mut s = settings(flags)?;
    let cfg = &mut s.filter;
    if let Some(w) = f.window {
        cfg.window = w;
    }
    if let Some(k) = f.keep_over {
        cfg.keep_over = k;
    }
    if let Some(t) = f.threshold {
        cfg.threshold = t;
    }
    cfg.half_stride |= f.half_stride;
    if f.audit.is_some() {
        s.paths.audit = f.audit;
    }
    s.filter.validate()?;
    require(&s.paths.dataset, "dataset")?;
    let engine = engine(&s, None)?;
    let samples = dataset(&s)?;
    let forced = s.run.language;
    let outcome = engine.install(|| {
        eval::filter_benchmark(
            &samples,
            &s.filter,
            &engine.clients().reasoning,
            engine.templates(),
            |sample: &Sample| engine.counter_for(forced.unwrap_or(sample.language)),
        )
    })?;
    let mut out = output(s.paths.output.as_deref())?;
    for sample in &outcome.retained {
        writeln!(out, "{}", sample.to_json_line())?;
    }
    out.flush()?;
    if let Some(p) = &s.paths.audit {
        let mut w = output(Some(p))?;
        for entry in &outcome.audit {
            serde_json::to_writer(&mut w, entry)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    eprintln!("retained {} of {} samples", outcome.retained.len(), samples.len());
    let undetermined = outcome
        .audit
        .iter()
        .filter(|a| a.decision == FilterDecision::Undetermined)
        .count();
    Ok(Status::from_failures(undetermined))
}

#[derive(Serialize)]
struct LatencyRow {
    schema: &'static str,
    method: Method,
    input_length: usize,
    chunks: f64,
    rounds: f64,
    modeled_ms: f64,
    calls: f64,
    failures: usize,
}

/// One long document whose only required fact opens it, so every grid
/// length can answer.
fn latency_fixture(seed: u64, max_len: usize) -> Suite {
    let blocks = max_len.div_ceil(BLOCK_TOKENS).max(1);
    let mut g = Generator::new(seed);
    Suite {
        cases: vec![g.document_case("latency", blocks, &[Placement::required(0)])],
    }
}

/// Empty `lengths` or `methods` keep the configured grid.
pub fn bench_latency(flags: &Overrides, lengths: Vec<usize>, methods: Vec<Method>) -> Result<Status> {
    let mut s = settings(flags)?;
    if !lengths.is_empty() {
        s.bench.input_lengths = lengths;
    }
    if !methods.is_empty() {
        s.bench.methods = methods;
    }
    if s.bench.input_lengths.is_empty() || s.bench.methods.is_empty() {
        bail!("bench-latency needs at least one input length and one method");
    }
    let (samples, world) = match &s.paths.dataset {
        Some(_) => (dataset(&s)?, None),
        None => {
            let max = s.bench.input_lengths.iter().copied().max().unwrap_or(0);
            let suite = latency_fixture(s.run.seed, max);
            (suite.samples(), Some(suite.world()))
        }
    };
    let mut rows = Vec::new();
    let mut failures = 0;
    for &method in &s.bench.methods {
        for &len in &s.bench.input_lengths {
            let mut cell = s.clone();
            cell.run.method = method;
            cell.run.input_budget = len;
            if method != Method::Extagents {
                cell.run.interleaved = false;
            }
            let engine = engine(&cell, world.clone())?;
            let totals: Vec<(usize, Totals)> = samples
                .iter()
                .filter_map(|x| match engine.run_sample(x) {
                    Ok(r) => Some((r.chunks, r.totals)),
                    Err(e) => {
                        log::warn!("{method} at {}: sample {}: {e}", format_token_count(len), x.id);
                        None
                    }
                })
                .collect();
            failures += samples.len() - totals.len();
            let n = totals.len().max(1) as f64;
            let mean = |f: &dyn Fn(&(usize, Totals)) -> f64| totals.iter().map(f).sum::<f64>() / n;
            rows.push(LatencyRow {
                schema: LATENCY_SCHEMA,
                method,
                input_length: len,
                chunks: mean(&|t| t.0 as f64),
                rounds: mean(&|t| t.1.critical_path_rounds as f64),
                modeled_ms: mean(&|t| t.1.critical_path_us as f64 / 1000.0),
                calls: mean(&|t| t.1.calls as f64),
                failures: samples.len() - totals.len(),
            });
        }
    }
    let mut table = io::stdout().lock();
    writeln!(
        table,
        "{:<16} {:>7} {:>7} {:>7} {:>11} {:>7}",
        "method", "input", "chunks", "rounds", "modeled_ms", "calls"
    )?;
    for r in &rows {
        writeln!(
            table,
            "{:<16} {:>7} {:>7.1} {:>7.1} {:>11.1} {:>7.1}",
            r.method.as_str(),
            format_token_count(r.input_length),
            r.chunks,
            r.rounds,
            r.modeled_ms,
            r.calls
        )?;
    }
    if let Some(p) = &s.paths.output {
        let mut w = output(Some(p))?;
        for r in &rows {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(Status::from_failures(failures))
}

#[derive(Serialize)]
struct ReplayRow {
    schema: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_id: Option<String>,
    totals: Totals,
}

/// Traces in `path`: a single trace document, or every record of a result
/// file.
fn load_traces(path: &Path) -> Result<Vec<(Option<String>, Trace)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let Some(first) = text.lines().find(|l| !l.trim().is_empty()) else {
        return Ok(Vec::new());
    };
    #[derive(Deserialize)]
    struct Head {
        schema: String,
    }
    let head: Head = serde_json::from_str(first)
        .or_else(|_| serde_json::from_str(&text))
        .context("input has no schema field")?;
    match head.schema.as_str() {
        TRACE_SCHEMA => Ok(vec![(None, Trace::from_json(&text)?)]),
        RESULT_SCHEMA => read_results(BufReader::new(text.as_bytes()))
            .map_err(anyhow::Error::msg)?
            .into_iter()
            .map(|r| match r.trace {
                Some(t) => Ok((Some(r.sample_id), Trace::from_events(t.events().to_vec())?)),
                None => bail!("record {} has no trace; produce it with `run --trace`", r.sample_id),
            })
            .collect(),
        other => bail!("unsupported schema `{other}` (expected {TRACE_SCHEMA} or {RESULT_SCHEMA})"),
    }
}

pub fn replay(input: &Path, config: Option<&Path>, prices: Option<(f64, f64)>, out: Option<&Path>) -> Result<Status> {
    let model = match (prices, config) {
        (Some((i, o)), _) => CostModel::new(i, o).map_err(anyhow::Error::msg)?,
        (None, Some(p)) => Settings::load(p)?.run.cost_model,
        (None, None) => CostModel::default(),
    };
    let traces = load_traces(input)?;
    let mut w = output(out)?;
    let mut total_cost = 0.0;
    for (sample_id, trace) in &traces {
        let totals = trace.totals(&model)?;
        total_cost += totals.cost.dollars();
        serde_json::to_writer(
            &mut w,
            &ReplayRow {
                schema: REPLAY_SCHEMA,
                sample_id: sample_id.clone(),
                totals,
            },
        )?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    if !traces.is_empty() {
        eprintln!(
            "{} trace(s), mean cost ${:.6}",
            traces.len(),
            total_cost / traces.len() as f64
        );
    }
    Ok(Status::Complete)
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    /// 512-block documents with two facts at random blocks.
    Uniform,
    /// Facts at the two ends with distractors between them.
    FarApart,
    Cost,
    /// Retrieved corpora of up to `blocks` documents.
    Corpus,
    Filter,
}

pub fn synth(kind: SuiteKind, count: usize, seed: u64, blocks: usize, dataset: &Path, world: &Path) -> Result<Status> {
    if blocks == 0 {
        bail!("blocks must be positive");
    }
    let suite = match kind {
        SuiteKind::Uniform => synth::uniform_suite(seed, count),
        SuiteKind::FarApart => synth::far_apart_suite(seed, count, (blocks / 16).max(3), 16, 2),
        SuiteKind::Cost => synth::cost_suite(seed, count, blocks),
        SuiteKind::Corpus => synth::random_corpus_suite(seed, count, blocks),
        SuiteKind::Filter => synth::filter_suite(seed),
    };
    let mut out = output(Some(dataset))?;
    for sample in suite.samples() {
        writeln!(out, "{}", sample.to_json_line())?;
    }
    out.flush()?;
    std::fs::write(world, serde_json::to_string_pretty(&suite.world())?)
        .with_context(|| format!("writing {}", world.display()))?;
    eprintln!("wrote {} samples", suite.len());
    Ok(Status::Complete)
}
