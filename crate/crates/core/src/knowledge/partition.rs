//! Splitting a knowledge source into agent-sized chunks.
//!
//! Long documents are cut into contiguous slices of at most `chunk_size`
//! tokens with no overlap. Retrieved corpora are packed greedily: whole units
//! are appended in retrieval order while the packed text still fits, and a
//! unit that is larger than a chunk on its own is split in place.

use serde::{Deserialize, Serialize};

use super::{KnowledgeError, KnowledgeSource, SourceKind, TokenCounter};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeChunk {
    pub index: usize,
    pub text: String,
    pub token_len: usize,
    pub source_unit_ids: Vec<String>,
    /// Best (lowest) retrieval rank among the contributing units.
    pub retrieval_rank: Option<u32>,
}

/// Partitions `source` into chunks of at most `chunk_size` tokens.
///
/// `max_context` is the model context length `L`; chunks must stay strictly
/// below it, so `chunk_size >= max_context` is rejected.
pub fn partition(
    source: &KnowledgeSource,
    chunk_size: usize,
    max_context: usize,
    counter: &TokenCounter,
) -> Result<Vec<KnowledgeChunk>, KnowledgeError> {
    if chunk_size == 0 {
        return Err(KnowledgeError::Config("chunk_size must be positive".into()));
    }
    if chunk_size >= max_context {
        return Err(KnowledgeError::Config(format!(
            "chunk_size must be < max_context ({chunk_size} >= {max_context})"
        )));
    }
    if source.is_empty() {
        return Ok(Vec::new());
    }
    match source.kind() {
        SourceKind::LongDocument => split_document(source, chunk_size, counter),
        SourceKind::RetrievedCorpus => pack_units(source, chunk_size, counter),
    }
}

fn split_document(
    source: &KnowledgeSource,
    chunk_size: usize,
    counter: &TokenCounter,
) -> Result<Vec<KnowledgeChunk>, KnowledgeError> {
    let text = source.document_text();
    // Byte span of every unit inside the concatenated text.
    let mut spans = Vec::with_capacity(source.units().len());
    let mut at = 0usize;
    for u in source.units() {
        spans.push((at, at + u.text.len(), u.id.as_str()));
        at += u.text.len();
    }

    let mut chunks = Vec::new();
    let mut start = 0usize;
    while start < text.len() {
        let rest = &text[start..];
        let len = counter.prefix_within(rest, chunk_size);
        if len == 0 {
            return Err(KnowledgeError::Config(format!(
                "chunk_size {chunk_size} cannot hold a single character"
            )));
        }
        let end = start + len;
        let piece = &text[start..end];
        let source_unit_ids = spans
            .iter()
            .filter(|(s, e, _)| *s < end && *e > start)
            .map(|(_, _, id)| id.to_string())
            .collect();
        chunks.push(KnowledgeChunk {
            index: chunks.len(),
            text: piece.to_string(),
            token_len: counter.count(piece),
            source_unit_ids,
            retrieval_rank: None,
        });
        start = end;
    }
    Ok(chunks)
}

#[derive(Default)]
struct Packing {
    text: String,
    ids: Vec<String>,
    rank: Option<u32>,
}

impl Packing {
    fn add(&mut self, text: &str, id: &str, rank: Option<u32>) {
        self.text.push_str(text);
        self.ids.push(id.to_string());
        self.rank = best_rank(self.rank, rank);
    }
}

fn best_rank(a: Option<u32>, b: Option<u32>) -> Option<u32> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn pack_units(
    source: &KnowledgeSource,
    chunk_size: usize,
    counter: &TokenCounter,
) -> Result<Vec<KnowledgeChunk>, KnowledgeError> {
    let mut chunks: Vec<KnowledgeChunk> = Vec::new();
    let mut current = Packing::default();

    let flush = |current: &mut Packing, chunks: &mut Vec<KnowledgeChunk>| {
        if current.ids.is_empty() {
            return;
        }
        let p = std::mem::take(current);
        chunks.push(KnowledgeChunk {
            index: chunks.len(),
            token_len: counter.count(&p.text),
            text: p.text,
            source_unit_ids: p.ids,
            retrieval_rank: p.rank,
        });
    };

    for unit in source.units() {
        if unit.text.is_empty() {
            continue;
        }
        if unit.tokens > chunk_size {
            flush(&mut current, &mut chunks);
            let mut rest = unit.text.as_str();
            while !rest.is_empty() {
                let len = counter.prefix_within(rest, chunk_size);
                if len == 0 {
                    return Err(KnowledgeError::Config(format!(
                        "chunk_size {chunk_size} cannot hold a single character"
                    )));
                }
                current.add(&rest[..len], &unit.id, unit.rank);
                flush(&mut current, &mut chunks);
                rest = &rest[len..];
            }
            continue;
        }
        if !current.ids.is_empty() {
            let mut candidate = String::with_capacity(current.text.len() + unit.text.len());
            candidate.push_str(&current.text);
            candidate.push_str(&unit.text);
            if counter.count(&candidate) > chunk_size {
                flush(&mut current, &mut chunks);
            }
        }
        current.add(&unit.text, &unit.id, unit.rank);
    }
    flush(&mut current, &mut chunks);
    Ok(chunks)
}
