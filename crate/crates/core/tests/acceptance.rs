//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Tolerances are pinned here.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use extagents_core::backend::{
    estimate_cost, BackendConfig, BackendError, Completion, CompletionBackend, CompletionUsage, CostModel, Fact,
    HttpBackend, ModelClient, OracleBackend, OracleConfig, RoleBackends, RoleClients, TaskFamily, TemplateLibrary,
    TemplateSet,
};
use extagents_core::eval::{best_f1, filter_benchmark, run_samples, token_f1, Bm25Index, FilterConfig, FilterDecision};
use extagents_core::knowledge::{KnowledgeChunk, Language, TokenCounter};
use extagents_core::orchestrator::{write_results, ResultRecord};
use extagents_core::reason::{attempt, build_schedule, build_schedule_with, ReasoningContext, ScheduleVariant};
use extagents_core::sync::{
    run_sync_timestep, select_top_k, AgentMessage, MessagePool, RankingMode, RelevanceScore, SyncError, SyncState,
};
use extagents_core::synth::{
    cost_suite, far_apart_suite, filter_suite, random_corpus_suite, uniform_suite, Generator, Placement, Suite,
    BLOCK_TOKENS,
};
use extagents_core::trace::Trace;
use extagents_core::{CallContext, Engine, Method, RunConfig};

const F1_TOLERANCE: f64 = 1e-6;
const BM25_TOLERANCE: f64 = 1e-6;
const TOPK_TIME_LIMIT: Duration = Duration::from_secs(10);
const SCALING_TIME_LIMIT: Duration = Duration::from_secs(120);
const COST_RANGE: (f64, f64) = (0.005, 0.10);

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_config(method: Method, chunk_tokens: usize) -> RunConfig {
    RunConfig {
        method,
        chunk_size: chunk_tokens,
        role_backends: RoleBackends::uniform(BackendConfig::oracle(136 * 1024)),
        ..RunConfig::default()
    }
}

fn engine(cfg: RunConfig, suite: &Suite) -> Engine {
    Engine::with_oracle(cfg, suite.world()).expect("engine")
}

fn accuracy(engine: &Engine, suite: &Suite) -> f64 {
    let rows = run_samples(engine, &suite.samples(), false);
    let total: f64 = rows.iter().map(|(_, f1)| f1.expect("run failed")).sum();
    total / rows.len() as f64
}

// 1. Top-k selection equals the brute-force best subset.
fn top_k_optimality() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1000 {
        let n = rng.random_range(1..=12);
        let scores: Vec<u32> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let live: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
        let k = rng.random_range(0..=n + 1);
        let pool = pool(&scores, &live);
        let got: Vec<usize> = select_top_k(&pool, k).iter().map(|m| m.agent_index).collect();
        let want = brute_force_top_k(&scores, &live, k);
        ensure(got == want, || {
            format!("case {case}: scores {scores:?} live {live:?} k {k}: {got:?} != {want:?}")
        })?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < TOPK_TIME_LIMIT, || format!("took {elapsed:?}"))?;
    Ok(format!("1000 pools in {elapsed:.2?}"))
}

fn pool(scores: &[u32], live: &[bool]) -> MessagePool {
    let messages = (0..scores.len())
        .map(|i| AgentMessage {
            agent_index: i,
            timestep: 1,
            text: if live[i] {
                format!("message {i}")
            } else {
                "NO INFORMATION".into()
            },
            token_len: 3,
            is_no_information: !live[i],
            sources_seen: vec![],
        })
        .collect();
    let scores = scores
        .iter()
        .enumerate()
        .map(|(i, &value)| RelevanceScore {
            agent_index: i,
            timestep: 1,
            value,
        })
        .collect();
    MessagePool::new(1, RankingMode::LlmRated, messages, scores).unwrap()
}

/// Every subset of live agents of size min(k, live); the largest total wins,
/// then the lexicographically smallest index set. Output best first.
fn brute_force_top_k(scores: &[u32], live: &[bool], k: usize) -> Vec<usize> {
    let candidates: Vec<usize> = (0..scores.len()).filter(|&i| live[i]).collect();
    let size = k.min(candidates.len());
    let mut best: Option<(u32, Vec<usize>)> = None;
    for mask in 0u32..(1 << candidates.len()) {
        if mask.count_ones() as usize != size {
            continue;
        }
        let set: Vec<usize> = (0..candidates.len())
            .filter(|b| mask >> b & 1 == 1)
            .map(|b| candidates[b])
            .collect();
        let total = set.iter().map(|&i| scores[i]).sum::<u32>();
        let better = match &best {
            None => true,
            Some((t, s)) => total > *t || (total == *t && set < *s),
        };
        if better {
            best = Some((total, set));
        }
    }
    let mut set = best.map(|b| b.1).unwrap_or_default();
    set.sort_by_key(|&i| (std::cmp::Reverse(scores[i]), i));
    set
}

/// Echo model for budget fuzzing; tracks the largest prompt it receives.
struct Echo {
    reply_tokens: usize,
    largest: AtomicUsize,
}

impl CompletionBackend for Echo {
    fn send(&self, _cfg: &BackendConfig, prompt: &str, counter: &TokenCounter) -> Result<Completion, BackendError> {
        self.largest.fetch_max(counter.count(prompt), Ordering::SeqCst);
        let text = if prompt.starts_with("Based on the extracted information and question, provide a score") {
            "Score: 50".to_string()
        } else {
            "y".repeat(4 * self.reply_tokens)
        };
        Ok(Completion {
            usage: CompletionUsage::new(counter.count(prompt) as u64, counter.count(&text) as u64),
            text,
            elapsed_us: 1,
        })
    }
}

// 2. No rendered prompt reaches the context length.
fn budget_safety() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let templates = TemplateSet::builtin(TaskFamily::LongDocument, Language::En);
    let counter = TokenCounter::default();
    let (mut violations, mut refused) = (0, 0);
    for case in 0..10_000 {
        let limit = rng.random_range(300..3000);
        let echo = Arc::new(Echo {
            reply_tokens: rng.random_range(1..limit / 2),
            largest: AtomicUsize::new(0),
        });
        let clients = RoleClients::uniform(ModelClient::new(BackendConfig::oracle(limit), echo.clone()));
        let n = rng.random_range(1..=6);
        let chunks: Vec<KnowledgeChunk> = (0..n)
            .map(|i| {
                let tokens = rng.random_range(1..limit);
                KnowledgeChunk {
                    index: i,
                    text: "a".repeat(4 * tokens),
                    token_len: tokens,
                    source_unit_ids: vec![],
                    retrieval_rank: None,
                }
            })
            .collect();
        let ctx = CallContext {
            question: "What is the budget?",
            templates: &templates,
            clients: &clients,
            counter: &counter,
        };
        let mut trace = Trace::new();
        let run = || -> Result<(), String> {
            let s0 = SyncState::new(Arc::from(chunks), RankingMode::LlmRated, false);
            let s1 = run_sync_timestep(&s0, &ctx, &mut trace).map_err(classify)?;
            let s2 = run_sync_timestep(&s1, &ctx, &mut trace).map_err(classify)?;
            for terminal in [false, true] {
                attempt(&ctx, &ReasoningContext::top(&s2.pool, n, 1), terminal).map_err(|e| match e {
                    extagents_core::reason::ReasonError::Backend(BackendError::Budget { .. }) => {
                        "violation".to_string()
                    }
                    other => other.to_string(),
                })?;
            }
            Ok(())
        };
        match run() {
            Ok(()) => {}
            Err(e) if e == "violation" => violations += 1,
            Err(e) if e == "infeasible" => refused += 1,
            Err(e) => return Err(format!("case {case}: unexpected error {e}")),
        }
        let largest = echo.largest.load(Ordering::SeqCst);
        if largest >= limit {
            violations += 1;
        }
    }
    ensure(violations == 0, || {
        format!("{violations} prompts reached the context length")
    })?;
    Ok(format!(
        "10000 configurations, 0 violations, {refused} infeasible chunks refused up front"
    ))
}

fn classify(e: SyncError) -> String {
    match e {
        SyncError::Agent {
            source: BackendError::Budget { .. },
            ..
        } => "violation".into(),
        SyncError::InfeasibleChunk { .. } => "infeasible".into(),
        other => other.to_string(),
    }
}

// 3. Schedule examples and laws.
fn schedule_law() -> Outcome {
    ensure(build_schedule(32, 5).sizes == [1, 2, 4, 8, 32], || {
        "schedule(32, 5)".into()
    })?;
    ensure(build_schedule(6, 5).sizes == [1, 2, 4, 6], || "schedule(6, 5)".into())?;
    ensure(build_schedule(1, 5).sizes == [1], || "schedule(1, 5)".into())?;
    for n in 1..=1024 {
        for cap in 1..=8 {
            for variant in [ScheduleVariant::FromOne, ScheduleVariant::FromTwo] {
                let s = build_schedule_with(n, cap, variant);
                ensure(s.sizes.windows(2).all(|w| w[0] < w[1]), || {
                    format!("not increasing: {n} {cap}")
                })?;
                ensure(s.last() == n && s.len() <= cap, || {
                    format!("bad end or length: {n} {cap}")
                })?;
            }
        }
    }
    Ok("examples and 16384 parameter pairs".into())
}

const SIZES: [usize; 3] = [4, 16, 64];

/// `n` one-block chunks, each holding a distractor, for a question whose
/// required fact is nowhere in the text.
fn unanswerable_case(n: usize) -> Suite {
    let mut g = Generator::new(n as u64);
    let mut p: Vec<Placement> = (0..n).map(|b| Placement::distractor(b, 1)).collect();
    p.push(Placement::required(n + 1));
    Suite {
        cases: vec![g.document_case(&format!("bw{n}"), n, &p)],
    }
}

// 4. Bandwidth of each orchestration.
fn bandwidth_accounting() -> Outcome {
    let fanin = 4;
    for n in SIZES {
        let suite = unanswerable_case(n);
        let sample = &suite.cases[0].sample;
        let mut cfgs = Vec::new();
        cfgs.push((Method::ChainOfAgents, 2));
        cfgs.push((Method::LlmMapreduce, fanin));
        cfgs.push((Method::Extagents, n));
        for (method, want) in cfgs {
            let mut cfg = oracle_config(method, BLOCK_TOKENS);
            cfg.max_timesteps = 2;
            cfg.baseline.group_fanin_cap = fanin;
            let r = engine(cfg, &suite).run_sample(sample).map_err(|e| e.to_string())?;
            ensure(r.chunks == n, || format!("{method}: {} chunks for {n}", r.chunks))?;
            ensure(r.totals.bandwidth == want, || {
                format!("{method} N={n}: bandwidth {} != {want}", r.totals.bandwidth)
            })?;
        }
    }
    Ok(format!("chain 2, map-reduce {fanin}, extagents N for N in {SIZES:?}"))
}

// 5. Critical-path lengths.
fn critical_path_laws() -> Outcome {
    for n in SIZES {
        let suite = unanswerable_case(n);
        let sample = &suite.cases[0].sample;
        for (method, want) in [(Method::Direct, 1), (Method::ChainOfAgents, n as u64 + 1)] {
            let mut cfg = oracle_config(method, BLOCK_TOKENS);
            cfg.input_budget = n * BLOCK_TOKENS;
            let r = engine(cfg, &suite).run_sample(sample).map_err(|e| e.to_string())?;
            ensure(r.totals.critical_path_rounds == want, || {
                format!("{method} N={n}: {} rounds, want {want}", r.totals.critical_path_rounds)
            })?;
        }
        let schedule = build_schedule(n, 5);
        for s in 1..=schedule.len().min(4) {
            // As many required facts, in separate chunks, as attempt s reads.
            let needed = schedule.sizes[s - 1];
            if s > 1 && needed == schedule.sizes[s - 2] {
                continue;
            }
            let mut g = Generator::new((n * 10 + s) as u64);
            let blocks: Vec<Placement> = (0..needed).map(|i| Placement::required(i * n / needed)).collect();
            let suite = Suite {
                cases: vec![g.document_case(&format!("cp{n}-{s}"), n, &blocks)],
            };
            let r = engine(oracle_config(Method::Extagents, BLOCK_TOKENS), &suite)
                .run_sample(&suite.cases[0].sample)
                .map_err(|e| e.to_string())?;
            ensure(r.outcome.timestep == 1 && r.outcome.iteration == s, || {
                format!(
                    "N={n}: answered at round {} iteration {}, want 1/{s}",
                    r.outcome.timestep, r.outcome.iteration
                )
            })?;
            ensure(r.totals.critical_path_rounds == 2 + s as u64, || {
                format!("N={n} s={s}: {} rounds", r.totals.critical_path_rounds)
            })?;
        }
    }
    Ok(format!("direct 1, chain N+1, extagents 2+s for N in {SIZES:?}"))
}

/// Replays the chain's summary trimming fact by fact and reports whether
/// every required fact reaches the final answer.
fn chain_survives(suite: &Suite, case: usize, chunk_blocks: usize, budget: usize) -> bool {
    let c = &suite.cases[case];
    let counter = TokenCounter::default();
    let blocks = c.placements.iter().map(|(_, b)| *b).max().unwrap_or(0) + 1;
    let chunks = blocks.div_ceil(chunk_blocks);
    let mut summary: Vec<&Fact> = Vec::new();
    for chunk in 0..chunks {
        let mut here: Vec<&Fact> = c
            .facts
            .iter()
            .filter(|f| c.block_of(&f.id).is_some_and(|b| b / chunk_blocks == chunk))
            .collect();
        here.sort_by_key(|f| c.block_of(&f.id));
        for f in here {
            if !summary.iter().any(|s| s.id == f.id) {
                summary.push(f);
            }
        }
        loop {
            let rendered: Vec<String> = summary.iter().map(|f| f.render()).collect();
            if summary.is_empty() || counter.count(&rendered.join("\n")) <= budget {
                break;
            }
            let lowest = summary.iter().map(|f| f.salience).min().unwrap();
            let pos = summary.iter().rposition(|f| f.salience == lowest).unwrap();
            summary.remove(pos);
        }
    }
    c.question.required.iter().all(|r| summary.iter().any(|f| &f.id == r))
}

// 6. Accuracy grows with input budget; the chain loses far-apart facts.
fn oracle_scaling() -> Outcome {
    let started = Instant::now();
    let suite = uniform_suite(6, 16);
    let budgets = [8, 16, 32, 64, 128, 256, 512];
    let mut curve = Vec::new();
    for b in budgets {
        let mut cfg = oracle_config(Method::Extagents, 8 * 1024);
        cfg.input_budget = b * 1024;
        curve.push(accuracy(&engine(cfg, &suite), &suite));
    }
    ensure(curve.windows(2).all(|w| w[0] <= w[1]), || {
        format!("not monotone: {curve:?}")
    })?;
    ensure(*curve.last().unwrap() == 1.0, || {
        format!("full coverage accuracy {curve:?}")
    })?;

    let far = far_apart_suite(7, 10, 8, 8, 4);
    let predicted = (0..far.len()).filter(|&i| chain_survives(&far, i, 8, 256)).count() as f64 / far.len() as f64;
    let chain = accuracy(&engine(oracle_config(Method::ChainOfAgents, 8 * 1024), &far), &far);
    let ours = accuracy(&engine(oracle_config(Method::Extagents, 8 * 1024), &far), &far);
    ensure(chain == predicted, || {
        format!("chain {chain} but simulation predicts {predicted}")
    })?;
    ensure(chain < 0.5, || format!("chain accuracy {chain}"))?;
    ensure(ours == 1.0, || format!("extagents accuracy {ours} on far-apart facts"))?;
    let elapsed = started.elapsed();
    ensure(elapsed < SCALING_TIME_LIMIT, || format!("took {elapsed:?}"))?;
    let curve: Vec<String> = curve.iter().map(|a| format!("{a:.3}")).collect();
    Ok(format!(
        "curve [{}], chain {chain:.2} vs extagents {ours:.2}, {elapsed:.1?}",
        curve.join(", ")
    ))
}

// 7. The pipelined first round changes nothing but the trace shape.
fn interleaved_equivalence() -> Outcome {
    let suite = random_corpus_suite(77, 200, 12);
    let mut seq = oracle_config(Method::Extagents, BLOCK_TOKENS);
    seq.ranking_mode = RankingMode::RetrievalPriority;
    seq.max_timesteps = 3;
    let mut inter = seq.clone();
    inter.interleaved = true;
    let a = engine(seq, &suite);
    let b = engine(inter, &suite);
    let mut wasted = 0;
    for c in &suite.cases {
        let x = a.run_sample(&c.sample).map_err(|e| e.to_string())?;
        let y = b.run_sample(&c.sample).map_err(|e| e.to_string())?;
        ensure(x.answer == y.answer && x.outcome == y.outcome, || {
            format!("{}: {:?} vs {:?}", c.sample.id, x.outcome, y.outcome)
        })?;
        wasted += y.totals.speculative.calls;
    }
    Ok(format!("200 worlds identical, {wasted} speculative seeks wasted"))
}

fn result_bytes(cfg: &RunConfig, suite: &Suite) -> Vec<u8> {
    let records: Vec<ResultRecord> = run_samples(&engine(cfg.clone(), suite), &suite.samples(), true)
        .into_iter()
        .map(|(r, _)| r)
        .collect();
    let mut out = Vec::new();
    write_results(&mut out, &records).unwrap();
    out
}

// 8. Worker count does not change the output.
fn determinism() -> Outcome {
    let mut suite = random_corpus_suite(8, 12, 10);
    suite.cases.extend(far_apart_suite(8, 3, 5, 2, 2).cases);
    let mut bytes = 0;
    for method in Method::ALL {
        let base = {
            let mut c = oracle_config(method, 2 * BLOCK_TOKENS);
            c.seed = 42;
            c
        };
        let runs: Vec<Vec<u8>> = [1, 4, 16]
            .iter()
            .map(|&w| {
                let mut c = base.clone();
                c.workers = w;
                result_bytes(&c, &suite)
            })
            .collect();
        ensure(runs.windows(2).all(|w| w[0] == w[1]), || {
            format!("{method}: outputs differ across worker counts")
        })?;
        bytes += runs[0].len();
    }
    Ok(format!("4 methods x 3 worker counts, {bytes} bytes compared"))
}

// 9. Price card arithmetic and replayed per-sample cost.
fn cost_model() -> Outcome {
    let card = CostModel::new(0.15, 0.60).map_err(|e| e.to_string())?;
    let c = estimate_cost(CompletionUsage::new(128_000, 500), &card);
    ensure(c.to_string() == "0.019500", || format!("estimate {c}"))?;
    let suite = cost_suite(9, 5, 190);
    let records = run_samples(
        &engine(oracle_config(Method::Extagents, 128 * 1024), &suite),
        &suite.samples(),
        true,
    );
    let mut costs = Vec::new();
    for (rec, _) in records {
        let line = serde_json::to_string(&rec).unwrap();
        let back: ResultRecord = serde_json::from_str(&line).unwrap();
        let trace = Trace::from_events(back.trace.unwrap().events().to_vec()).map_err(|e| e.to_string())?;
        let replay = trace.totals(&CostModel::GPT_4O_MINI).map_err(|e| e.to_string())?;
        ensure(replay == rec.totals, || format!("{}: replay differs", rec.sample_id))?;
        let dollars = replay.cost.dollars();
        ensure((COST_RANGE.0..=COST_RANGE.1).contains(&dollars), || {
            format!("{}: ${dollars}", rec.sample_id)
        })?;
        costs.push(dollars);
    }
    let mean = costs.iter().sum::<f64>() / costs.len() as f64;
    Ok(format!("0.019500 exact; replayed mean ${mean:.4} per sample"))
}

// 10. Filtering keeps exactly the samples no single window answers.
fn filter_pipeline() -> Outcome {
    let suite = filter_suite(10);
    let judge_window_blocks = 6;
    let oracle = OracleBackend::new(
        suite.world(),
        TemplateLibrary::builtin(),
        OracleConfig {
            reading_budget: Some(judge_window_blocks * BLOCK_TOKENS),
            ..OracleConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let judge = ModelClient::new(BackendConfig::oracle(136 * 1024), Arc::new(oracle));
    let samples = suite.samples();
    let mut counts = Vec::new();
    for window_k in [4, 8, 16, 32] {
        let cfg = FilterConfig {
            window: window_k * 1024,
            ..FilterConfig::default()
        };
        let out = filter_benchmark(&samples, &cfg, &judge, &TemplateLibrary::builtin(), |s| {
            TokenCounter::for_language(s.language)
        })
        .map_err(|e| e.to_string())?;
        for (c, a) in suite.cases.iter().zip(&out.audit) {
            let blocks: Vec<usize> = c.placements.iter().map(|(_, b)| *b).collect();
            let length = match &c.sample.body {
                extagents_core::knowledge::SampleBody::Context(t) => t.len() / 4,
                _ => unreachable!(),
            };
            let w = window_k;
            let convicting = (blocks[0] / w == blocks[1] / w && blocks.iter().all(|b| b % w < judge_window_blocks))
                .then_some(blocks[0] / w);
            let (decision, index) = if length > 128 * 1024 {
                (FilterDecision::RetainedLong, None)
            } else if convicting.is_some() {
                (FilterDecision::Discarded, convicting)
            } else {
                (FilterDecision::Retained, None)
            };
            ensure(a.decision == decision && a.window_index == index, || {
                format!(
                    "{}k {}: {:?}/{:?}, want {decision:?}/{index:?}",
                    window_k, a.sample_id, a.decision, a.window_index
                )
            })?;
        }
        counts.push(out.retained.len());
    }
    ensure(counts == [24, 26, 31, 36], || format!("retained counts {counts:?}"))?;
    ensure(counts.windows(2).all(|w| w[0] <= w[1]), || {
        format!("not increasing: {counts:?}")
    })?;
    Ok(format!("retained {counts:?} for 4k/8k/16k/32k windows"))
}

// 11. F1 and BM25 against hand-derived values.
fn metric_fidelity() -> Outcome {
    let pair = token_f1(
        "the Island of Brayan Annabel",
        "On the island of Brayan Annabel",
        Language::En,
    );
    let hand = 2.0 * 1.0 * 0.8 / 1.8;
    ensure((pair - hand).abs() < F1_TOLERANCE, || format!("pair F1 {pair}"))?;
    ensure(token_f1("14 million km", "14 million km", Language::En) == 1.0, || {
        "identity".into()
    })?;
    ensure(token_f1("red apple", "blue pear", Language::En) == 0.0, || {
        "disjoint".into()
    })?;
    ensure(token_f1("", "anything", Language::En) == 0.0, || {
        "empty prediction".into()
    })?;
    ensure(best_f1("x", &["y".into(), "x".into()], Language::En) == 1.0, || {
        "best of golds".into()
    })?;
    let idx = Bm25Index::new(&["cat cat dog", "cat bird", "fish fish fish fish"]);
    let want = [1.627_084_243_2, 0.544_214_728_6, 0.0];
    for (d, w) in want.iter().enumerate() {
        let got = idx.score("cat dog", d);
        ensure((got - w).abs() < BM25_TOLERANCE, || {
            format!("bm25 doc {d}: {got} vs {w}")
        })?;
    }
    Ok(format!("pair F1 {pair:.6}, BM25 within {BM25_TOLERANCE:e}"))
}

struct Captured {
    request_line: String,
    headers: Vec<String>,
    body: Vec<u8>,
}

fn serve_once(listener: TcpListener, reply: &'static str) -> std::thread::JoinHandle<Captured> {
    std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        reader.read_line(&mut request_line).unwrap();
        let mut headers = Vec::new();
        let mut length = 0;
        loop {
            let mut h = String::new();
            reader.read_line(&mut h).unwrap();
            let h = h.trim_end().to_string();
            if h.is_empty() {
                break;
            }
            if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap();
            }
            headers.push(h);
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body).unwrap();
        let mut w = stream;
        write!(
            w,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
            reply.len()
        )
        .unwrap();
        w.flush().unwrap();
        Captured {
            request_line: request_line.trim_end().to_string(),
            headers,
            body,
        }
    })
}

// 12. Request and reply bytes against a local stub server.
fn wire_protocol() -> Outcome {
    let counter = TokenCounter::default();
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().unwrap();
    let reply = r#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"Paris"}}],"usage":{"prompt_tokens":12,"completion_tokens":1}}"#;
    let server = serve_once(listener, reply);
    let mut cfg = BackendConfig::http(format!("http://{addr}/v1"), "gpt-4o-mini", 64);
    cfg.retry.max_attempts = 1;
    let backend = Arc::new(HttpBackend::with_api_key(&cfg, Some("secret".into())).map_err(|e| e.to_string())?);
    let client = ModelClient::new(cfg, backend.clone());
    let c = client
        .complete("What is the capital of France?", &counter)
        .map_err(|e| e.to_string())?;
    let got = server.join().unwrap();
    ensure(got.request_line == "POST /v1/chat/completions HTTP/1.1", || {
        got.request_line.clone()
    })?;
    let expected =
        br#"{"model":"gpt-4o-mini","temperature":0.0,"messages":[{"role":"user","content":"What is the capital of France?"}]}"#;
    ensure(got.body == expected, || {
        format!("body {}", String::from_utf8_lossy(&got.body))
    })?;
    ensure(
        got.headers
            .iter()
            .any(|h| h.eq_ignore_ascii_case("authorization: Bearer secret")),
        || format!("headers {:?}", got.headers),
    )?;
    ensure(c.text == "Paris" && c.usage == CompletionUsage::new(12, 1), || {
        format!("parsed {c:?}")
    })?;

    let silent = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    silent.set_nonblocking(true).unwrap();
    let mut cfg = BackendConfig::http(format!("http://{}/v1", silent.local_addr().unwrap()), "gpt-4o-mini", 64);
    cfg.retry.max_attempts = 1;
    let backend = Arc::new(HttpBackend::with_api_key(&cfg, None).map_err(|e| e.to_string())?);
    let client = ModelClient::new(cfg, backend.clone());
    let err = client.complete(&"word ".repeat(100), &counter).unwrap_err();
    ensure(matches!(err, BackendError::Budget { .. }), || format!("error {err}"))?;
    std::thread::sleep(Duration::from_millis(50));
    ensure(backend.attempts() == 0, || "request attempted".into())?;
    ensure(silent.accept().is_err(), || {
        "socket opened for an over-budget prompt".into()
    })?;
    Ok("request bytes, auth header, reply parse, pre-send budget refusal".into())
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 12] = [
        ("AC01 top-k optimality", top_k_optimality),
        ("AC02 budget safety", budget_safety),
        ("AC03 schedule law", schedule_law),
        ("AC04 bandwidth accounting", bandwidth_accounting),
        ("AC05 critical-path laws", critical_path_laws),
        ("AC06 oracle scaling trend", oracle_scaling),
        ("AC07 interleaved equivalence", interleaved_equivalence),
        ("AC08 determinism", determinism),
        ("AC09 cost model", cost_model),
        ("AC10 filter pipeline", filter_pipeline),
        ("AC11 metric fidelity", metric_fidelity),
        ("AC12 wire protocol", wire_protocol),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = started.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({took:.1?})"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} ({took:.1?})");
            }
        }
    }
    println!("{} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
