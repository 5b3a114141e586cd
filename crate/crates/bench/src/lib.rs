//! Fixtures shared by the benchmarks: synthetic documents with an oracle
//! world, engines over them, and retrieval corpora.

use extagents_core::backend::{BackendConfig, RoleBackends, World};
use extagents_core::knowledge::{Document, KnowledgeSource, Sample, SampleBody, TokenCounter};
use extagents_core::synth::{cost_suite, Generator, Placement};
use extagents_core::{Engine, Method, RunConfig};

/// One document of `kilotokens` 1k blocks with two facts and a few
/// distractors.
pub fn document(seed: u64, kilotokens: usize) -> (Sample, World) {
    let suite = cost_suite(seed, 1, kilotokens);
    (suite.cases[0].sample.clone(), suite.world())
}

pub fn source(sample: &Sample) -> KnowledgeSource {
    sample
        .to_source(&TokenCounter::default())
        .expect("synthetic samples are well formed")
}

/// Oracle engine with `chunk_kilotokens` chunks and a 136k context.
pub fn engine(method: Method, chunk_kilotokens: usize, world: World) -> Engine {
    let cfg = RunConfig {
        method,
        chunk_size: chunk_kilotokens * 1024,
        role_backends: RoleBackends::uniform(BackendConfig::default()),
        ..RunConfig::default()
    };
    Engine::with_oracle(cfg, world).expect("valid benchmark config")
}

/// `docs` one-block documents; the query names one fact of the corpus.
pub fn corpus(seed: u64, docs: usize) -> (Vec<Document>, String) {
    let mut g = Generator::new(seed);
    let case = g.corpus_case(
        "bench",
        docs,
        &[Placement::required(docs / 2), Placement::distractor(1, 1)],
    );
    let documents = match case.sample.body {
        SampleBody::Documents(d) => d,
        SampleBody::Context(_) => unreachable!("corpus cases hold documents"),
    };
    (documents, case.sample.question)
}
