//! Seeded synthetic samples with known fact placements, paired with the
//! oracle world that answers them.
//!
//! Documents are built from 1k-token blocks of English filler (4 characters
//! per token, so 4096 characters per block). Facts sit at the start of
//! their block, which makes every placement land at a known token offset.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::{Fact, World, WorldQuestion};
use crate::knowledge::{Document, Language, Sample, SampleBody};

/// Tokens per block.
pub const BLOCK_TOKENS: usize = 1024;
/// Characters per block under the English 4-chars-per-token rate.
pub const BLOCK_CHARS: usize = 4 * BLOCK_TOKENS;

const WORDS: &[&str] = &[
    "the", "river", "stone", "market", "north", "quiet", "window", "garden", "paper", "season", "village", "engine",
    "morning", "harbor", "letter", "silver", "road", "teacher", "winter", "bridge", "lantern", "orchard", "signal",
    "valley", "copper", "meadow", "station", "evening", "forest", "island", "cabinet", "ladder", "kettle", "meeting",
    "pocket", "ribbon", "saddle", "thunder", "velvet", "wagon", "anchor", "basket", "candle", "desert", "feather",
    "of", "and", "in", "a", "to", "was", "near", "under", "beside",
];
const COLORS: &[&str] = &[
    "amber", "cobalt", "crimson", "ivory", "jade", "ochre", "scarlet", "teal", "umber", "violet", "saffron", "indigo",
];
const CREATURES: &[&str] = &[
    "falcon", "otter", "heron", "lynx", "marten", "osprey", "badger", "ibex", "jackal", "kestrel", "puffin", "wren",
];

/// One generated sample and the facts/question that make it answerable.
#[derive(Clone, Debug)]
pub struct SynthCase {
    pub sample: Sample,
    pub facts: Vec<Fact>,
    pub question: WorldQuestion,
    /// Block index of every placed fact, by fact id.
    pub placements: Vec<(String, usize)>,
}

impl SynthCase {
    pub fn world(&self) -> World {
        World::new(self.facts.clone(), vec![self.question.clone()])
    }

    /// Block holding fact `id`.
    pub fn block_of(&self, id: &str) -> Option<usize> {
        self.placements.iter().find(|(f, _)| f == id).map(|&(_, b)| b)
    }
}

/// A set of cases sharing one oracle world.
#[derive(Clone, Debug, Default)]
pub struct Suite {
    pub cases: Vec<SynthCase>,
}

impl Suite {
    pub fn world(&self) -> World {
        let mut w = World::new(Vec::new(), Vec::new());
        for c in &self.cases {
            w.merge(c.world());
        }
        w
    }

    pub fn samples(&self) -> Vec<Sample> {
        self.cases.iter().map(|c| c.sample.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

/// Where one fact goes and how well it survives message trimming.
#[derive(Clone, Debug)]
pub struct Placement {
    pub block: usize,
    pub salience: u32,
    pub required: bool,
}

impl Placement {
    pub fn required(block: usize) -> Self {
        Self {
            block,
            salience: 0,
            required: true,
        }
    }

    pub fn distractor(block: usize, salience: u32) -> Self {
        Self {
            block,
            salience,
            required: false,
        }
    }
}

/// Builds cases from a seeded generator.
#[derive(Debug)]
pub struct Generator {
    rng: ChaCha8Rng,
}

impl Generator {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Exactly `chars` characters of filler ending in a space.
    pub fn filler(&mut self, chars: usize) -> String {
        let mut out = String::with_capacity(chars);
        while out.len() < chars {
            let w = WORDS[self.rng.random_range(0..WORDS.len())];
            if out.len() + w.len() + 1 > chars {
                break;
            }
            out.push_str(w);
            out.push(' ');
        }
        while out.len() < chars {
            out.push(' ');
        }
        out
    }

    fn block(&mut self, facts: &[&Fact]) -> String {
        let mut head: String = facts.iter().map(|f| format!("{} ", f.render())).collect();
        assert!(head.len() <= BLOCK_CHARS, "facts overflow a block");
        let rest = BLOCK_CHARS - head.len();
        head.push_str(&self.filler(rest));
        head
    }

    fn answer(&mut self) -> String {
        let c = COLORS[self.rng.random_range(0..COLORS.len())];
        let a = CREATURES[self.rng.random_range(0..CREATURES.len())];
        format!("{c} {a} {}", self.rng.random_range(10..100))
    }

    fn facts_for(&mut self, id: &str, answer: &str, placements: &[Placement]) -> Vec<Fact> {
        let mut distractor = 0;
        let mut part = 0;
        placements
            .iter()
            .map(|p| {
                if p.required {
                    part += 1;
                    Fact {
                        id: format!("{id}-r{part}"),
                        text: format!("Part {part} of the answer for record {id} mentions {answer}."),
                        salience: p.salience,
                    }
                } else {
                    distractor += 1;
                    let filler = self.filler(60);
                    Fact {
                        id: format!("{id}-d{distractor}"),
                        text: format!("Note {distractor} about record {id}: {}.", filler.trim_end()),
                        salience: p.salience,
                    }
                }
            })
            .collect()
    }

    fn question(id: &str, facts: &[Fact], placements: &[Placement], answer: &str) -> WorldQuestion {
        WorldQuestion {
            question: format!("Which code phrase belongs to record {id}?"),
            required: facts
                .iter()
                .zip(placements)
                .filter(|(_, p)| p.required)
                .map(|(f, _)| f.id.clone())
                .collect(),
            answer: answer.to_string(),
            guess: None,
        }
    }

    /// A long document of `blocks` blocks.
    pub fn document_case(&mut self, id: &str, blocks: usize, placements: &[Placement]) -> SynthCase {
        let answer = self.answer();
        let facts = self.facts_for(id, &answer, placements);
        let text: String = (0..blocks)
            .map(|b| {
                let here: Vec<&Fact> = facts
                    .iter()
                    .zip(placements)
                    .filter(|(_, p)| p.block == b)
                    .map(|(f, _)| f)
                    .collect();
                self.block(&here)
            })
            .collect();
        let question = Self::question(id, &facts, placements, &answer);
        SynthCase {
            sample: Sample {
                id: id.to_string(),
                question: question.question.clone(),
                gold_answers: vec![answer],
                body: SampleBody::Context(text),
                language: Language::En,
            },
            placements: facts
                .iter()
                .zip(placements)
                .map(|(f, p)| (f.id.clone(), p.block))
                .collect(),
            facts,
            question,
        }
    }

    /// A retrieved corpus of `units` one-block documents with shuffled
    /// retrieval ranks. Placement blocks index units.
    pub fn corpus_case(&mut self, id: &str, units: usize, placements: &[Placement]) -> SynthCase {
        let mut case = self.document_case(id, units, placements);
        let SampleBody::Context(text) = &case.sample.body else {
            unreachable!()
        };
        let mut ranks: Vec<u32> = (1..=units as u32).collect();
        ranks.shuffle(&mut self.rng);
        let docs = (0..units)
            .map(|u| Document {
                id: Some(format!("{id}-u{u}")),
                text: text[u * BLOCK_CHARS..(u + 1) * BLOCK_CHARS].to_string(),
                rank: Some(ranks[u]),
            })
            .collect();
        case.sample.body = SampleBody::Documents(docs);
        case
    }
}

/// `count` documents of 512 blocks with two required facts at uniformly
/// random blocks.
pub fn uniform_suite(seed: u64, count: usize) -> Suite {
    let mut g = Generator::new(seed);
    let cases = (0..count)
        .map(|i| {
            let a = g.rng().random_range(0..512);
            let b = g.rng().random_range(0..512);
            g.document_case(
                &format!("uni{i}"),
                512,
                &[Placement::required(a), Placement::required(b)],
            )
        })
        .collect();
    Suite { cases }
}

/// Documents of `chunks` chunks of `chunk_blocks` blocks. One required fact
/// opens the first chunk and one opens the last; every chunk in between
/// carries `per_chunk` high-salience distractors.
pub fn far_apart_suite(seed: u64, count: usize, chunks: usize, chunk_blocks: usize, per_chunk: usize) -> Suite {
    assert!(chunks >= 3, "need room for distractors between the two facts");
    let mut g = Generator::new(seed);
    let cases = (0..count)
        .map(|i| {
            let mut p = vec![Placement::required(0)];
            for c in 1..chunks - 1 {
                for d in 0..per_chunk {
                    p.push(Placement::distractor(c * chunk_blocks + d, 10));
                }
            }
            p.push(Placement::required((chunks - 1) * chunk_blocks));
            g.document_case(&format!("far{i}"), chunks * chunk_blocks, &p)
        })
        .collect();
    Suite { cases }
}

/// Documents of `blocks` blocks with two required facts at random blocks
/// and a few distractors, for cost replay.
pub fn cost_suite(seed: u64, count: usize, blocks: usize) -> Suite {
    let mut g = Generator::new(seed);
    let cases = (0..count)
        .map(|i| {
            let mut p: Vec<Placement> = (0..2)
                .map(|_| Placement::required(g.rng().random_range(0..blocks)))
                .collect();
            for _ in 0..4 {
                let b = g.rng().random_range(0..blocks);
                p.push(Placement::distractor(b, 1));
            }
            g.document_case(&format!("cost{i}"), blocks, &p)
        })
        .collect();
    Suite { cases }
}

/// Random retrieved corpora for comparing execution strategies: 2 to
/// `max_units` units, 1 to 3 required facts (some possibly absent), and
/// distractors of random salience.
pub fn random_corpus_suite(seed: u64, count: usize, max_units: usize) -> Suite {
    let mut g = Generator::new(seed);
    let cases = (0..count)
        .map(|i| {
            let units = g.rng().random_range(2..=max_units.max(2));
            let required = g.rng().random_range(1..=3);
            let mut p = Vec::new();
            for _ in 0..required {
                // Occasionally the fact is missing from the corpus entirely.
                let block = if g.rng().random_bool(0.1) {
                    units + 1
                } else {
                    g.rng().random_range(0..units)
                };
                p.push(Placement::required(block));
            }
            for _ in 0..g.rng().random_range(0..6) {
                let b = g.rng().random_range(0..units);
                let s = g.rng().random_range(0..4);
                p.push(Placement::distractor(b, s));
            }
            g.corpus_case(&format!("rnd{i}"), units, &p)
        })
        .collect();
    Suite { cases }
}

/// Sample groups of the filter suite: (label, count, blocks, fact blocks).
pub const FILTER_GROUPS: &[(&str, usize, usize, [usize; 2])] = &[
    ("long", 10, 130, [1, 120]),
    ("near_start", 8, 64, [0, 1]),
    ("far_apart", 8, 64, [2, 52]),
    ("pair_6", 8, 64, [6, 7]),
    ("pair_12", 5, 64, [12, 13]),
    ("pair_16", 5, 64, [16, 17]),
    ("pair_3", 6, 64, [3, 4]),
];

/// Fifty samples with fact pairs at fixed blocks, for benchmark filtering.
pub fn filter_suite(seed: u64) -> Suite {
    let mut g = Generator::new(seed);
    let mut cases = Vec::new();
    for &(label, count, blocks, [a, b]) in FILTER_GROUPS {
        for i in 0..count {
            cases.push(g.document_case(
                &format!("{label}-{i}"),
                blocks,
                &[Placement::required(a), Placement::required(b)],
            ));
        }
    }
    Suite { cases }
}
