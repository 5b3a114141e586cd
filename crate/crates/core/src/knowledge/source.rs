use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{KnowledgeError, TokenCounter};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// A single long document attached to the query.
    LongDocument,
    /// Ordered pieces retrieved from a larger corpus.
    RetrievedCorpus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextUnit {
    pub id: String,
    pub text: String,
    pub tokens: usize,
    /// 1-based retrieval rank, retrieved corpora only.
    pub rank: Option<u32>,
}

/// External knowledge for one query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeSource {
    kind: SourceKind,
    units: Vec<TextUnit>,
    total_tokens: usize,
}

impl KnowledgeSource {
    /// Builds a source, counting every unit. Unit ids must be unique.
    pub fn new(
        kind: SourceKind,
        units: impl IntoIterator<Item = (String, String, Option<u32>)>,
        counter: &TokenCounter,
    ) -> Result<Self, KnowledgeError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (id, text, rank) in units {
            if !seen.insert(id.clone()) {
                return Err(KnowledgeError::DuplicateUnit(id));
            }
            let tokens = counter.count(&text);
            out.push(TextUnit { id, text, tokens, rank });
        }
        Ok(Self::from_counted(kind, out))
    }

    pub fn long_document(text: impl Into<String>, counter: &TokenCounter) -> Self {
        Self::new(
            SourceKind::LongDocument,
            [("doc".to_string(), text.into(), None)],
            counter,
        )
        .expect("single unit cannot collide")
    }

    fn from_counted(kind: SourceKind, units: Vec<TextUnit>) -> Self {
        let total_tokens = units.iter().map(|u| u.tokens).sum();
        Self {
            kind,
            units,
            total_tokens,
        }
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    pub fn units(&self) -> &[TextUnit] {
        &self.units
    }

    pub fn total_tokens(&self) -> usize {
        self.total_tokens
    }

    pub fn is_empty(&self) -> bool {
        self.units.iter().all(|u| u.text.is_empty())
    }

    /// Concatenated text of a long document (units joined verbatim).
    pub fn document_text(&self) -> String {
        self.units.iter().map(|u| u.text.as_str()).collect()
    }
}

/// Keeps the longest prefix of units that fits `max_tokens`.
///
/// For a long document the first unit that does not fit is cut at the
/// largest fitting prefix; for a retrieved corpus it is dropped whole.
/// Everything after the boundary unit is dropped.
pub fn truncate_to_budget(source: &KnowledgeSource, max_tokens: usize, counter: &TokenCounter) -> KnowledgeSource {
    if source.total_tokens <= max_tokens {
        return source.clone();
    }
    let mut used = 0usize;
    let mut kept = Vec::new();
    for unit in &source.units {
        if used + unit.tokens <= max_tokens {
            used += unit.tokens;
            kept.push(unit.clone());
            continue;
        }
        if source.kind == SourceKind::LongDocument {
            let end = counter.prefix_within(&unit.text, max_tokens - used);
            if end > 0 {
                let text = unit.text[..end].to_string();
                let tokens = counter.count(&text);
                kept.push(TextUnit {
                    id: unit.id.clone(),
                    text,
                    tokens,
                    rank: unit.rank,
                });
            }
        }
        break;
    }
    KnowledgeSource::from_counted(source.kind, kept)
}
