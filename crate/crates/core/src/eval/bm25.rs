//! Okapi BM25 ranking for building retrieved corpora.

use std::collections::HashMap;

use crate::knowledge::{is_cjk, Document, TokenCounter};

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

/// Lowercased alphanumeric runs; CJK characters are single terms.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(c.to_string());
        } else if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Term statistics of a fixed corpus.
#[derive(Clone, Debug)]
pub struct Bm25Index {
    term_freqs: Vec<HashMap<String, usize>>,
    lengths: Vec<usize>,
    doc_freq: HashMap<String, usize>,
    avg_len: f64,
}

impl Bm25Index {
    pub fn new<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut term_freqs = Vec::with_capacity(docs.len());
        let mut lengths = Vec::with_capacity(docs.len());
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for d in docs {
            let terms = tokenize(d.as_ref());
            lengths.push(terms.len());
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in terms {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let avg_len = if docs.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / docs.len() as f64
        };
        Self {
            term_freqs,
            lengths,
            doc_freq,
            avg_len,
        }
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Score of document `d` for `query`. Repeated query terms count once
    /// per occurrence.
    pub fn score(&self, query: &str, d: usize) -> f64 {
        self.score_terms(&tokenize(query), d)
    }

    fn score_terms(&self, terms: &[String], d: usize) -> f64 {
        let len_norm = if self.avg_len > 0.0 {
            self.lengths[d] as f64 / self.avg_len
        } else {
            0.0
        };
        terms
            .iter()
            .map(|t| {
                let tf = self.term_freqs[d].get(t).copied().unwrap_or(0) as f64;
                if tf == 0.0 {
                    return 0.0;
                }
                self.idf(t) * tf * (K1 + 1.0) / (tf + K1 * (1.0 - B + B * len_norm))
            })
            .sum()
    }

    pub fn scores(&self, query: &str) -> Vec<f64> {
        let terms = tokenize(query);
        (0..self.len()).map(|d| self.score_terms(&terms, d)).collect()
    }

    /// Document indices by descending score; ties keep corpus order.
    /// Scores are compared at 1e-9 resolution so that mathematically equal
    /// scores reached by different float paths tie.
    pub fn ranking(&self, query: &str) -> Vec<usize> {
        let keys: Vec<i64> = self.scores(query).iter().map(|s| (s * 1e9).round() as i64).collect();
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&d| (std::cmp::Reverse(keys[d]), d));
        order
    }
}

/// Best-scoring documents that fit `budget` tokens together, ranked 1..n.
///
/// Documents are taken whole in score order, stopping at the first that no
/// longer fits. If even the top document is too large it is cut to the
/// budget.
pub fn bm25_retrieve(question: &str, corpus: &[Document], budget: usize, counter: &TokenCounter) -> Vec<Document> {
    if corpus.is_empty() || budget == 0 {
        return Vec::new();
    }
    let index = Bm25Index::new(&corpus.iter().map(|d| d.text.as_str()).collect::<Vec<_>>());
    let mut out: Vec<Document> = Vec::new();
    let mut used = 0;
    for d in index.ranking(question) {
        let doc = &corpus[d];
        let tokens = counter.count(&doc.text);
        if used + tokens > budget {
            if out.is_empty() {
                let end = counter.prefix_within(&doc.text, budget);
                out.push(Document {
                    id: doc.id.clone(),
                    text: doc.text[..end].to_string(),
                    rank: None,
                });
            }
            break;
        }
        used += tokens;
        out.push(doc.clone());
    }
    for (i, d) in out.iter_mut().enumerate() {
        d.rank = Some(i as u32 + 1);
    }
    out
}
