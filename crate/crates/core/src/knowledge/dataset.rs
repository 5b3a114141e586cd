//! Line-delimited dataset records.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id": "q1", "question": "...", "answers": ["..."], "context": "..."}
//! {"id": "q2", "question": "...", "answer": "...", "documents": [{"text": "...", "rank": 1}]}
//! ```
//!
//! `answer` is accepted as an alias of `answers` and may be a single string.
//! Exactly one of `context` or `documents` must be present. `language` is
//! optional and detected from the text when absent.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KnowledgeError, KnowledgeSource, Language, SourceKind, TokenCounter};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SampleBody {
    Context(String),
    Documents(Vec<Document>),
}

/// One evaluation sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub body: SampleBody,
    pub language: Language,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Str(String),
    Num(i64),
}

#[derive(Deserialize)]
struct RawSample {
    id: RawId,
    question: String,
    #[serde(alias = "answer")]
    answers: OneOrMany,
    #[serde(default)]
    context: Option<String>,
    #[serde(default)]
    documents: Option<Vec<Document>>,
    #[serde(default)]
    language: Option<Language>,
}

#[derive(Serialize)]
struct SampleRecord<'a> {
    id: &'a str,
    question: &'a str,
    answers: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    context: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    documents: Option<&'a [Document]>,
    language: Language,
}

impl Sample {
    pub fn from_json_line(line: &str, line_no: usize) -> Result<Sample, KnowledgeError> {
        let bad = |field: &str, message: String| KnowledgeError::Dataset {
            line: line_no,
            field: field.to_string(),
            message,
        };
        let raw: RawSample = serde_json::from_str(line).map_err(|e| {
            let msg = e.to_string();
            let field = ["id", "question", "answers", "context", "documents", "language"]
                .into_iter()
                .find(|f| msg.contains(&format!("`{f}`")))
                .unwrap_or("record");
            bad(field, msg)
        })?;
        let id = match raw.id {
            RawId::Str(s) => s,
            RawId::Num(n) => n.to_string(),
        };
        let gold_answers = match raw.answers {
            OneOrMany::One(a) => vec![a],
            OneOrMany::Many(v) => v,
        };
        if gold_answers.is_empty() {
            return Err(bad("answers", "at least one gold answer is required".into()));
        }
        let body = match (raw.context, raw.documents) {
            (Some(c), None) => SampleBody::Context(c),
            (None, Some(d)) => SampleBody::Documents(d),
            (Some(_), Some(_)) => return Err(bad("context", "exactly one of `context` or `documents` allowed".into())),
            (None, None) => return Err(bad("context", "one of `context` or `documents` is required".into())),
        };
        let language = raw.language.unwrap_or_else(|| {
            let probe = match &body {
                SampleBody::Context(c) => c.chars().take(4096).collect::<String>(),
                SampleBody::Documents(d) => d.iter().take(4).map(|d| d.text.as_str()).collect(),
            };
            Language::detect(&format!("{} {}", raw.question, probe))
        });
        Ok(Sample {
            id,
            question: raw.question,
            gold_answers,
            body,
            language,
        })
    }

    pub fn to_json_line(&self) -> String {
        let (context, documents) = match &self.body {
            SampleBody::Context(c) => (Some(c.as_str()), None),
            SampleBody::Documents(d) => (None, Some(d.as_slice())),
        };
        serde_json::to_string(&SampleRecord {
            id: &self.id,
            question: &self.question,
            answers: &self.gold_answers,
            context,
            documents,
            language: self.language,
        })
        .expect("sample serializes")
    }

    /// Knowledge source for this sample. Documents keep their file order;
    /// missing ranks default to the 1-based position.
    pub fn to_source(&self, counter: &TokenCounter) -> Result<KnowledgeSource, KnowledgeError> {
        match &self.body {
            SampleBody::Context(c) => Ok(KnowledgeSource::long_document(c.clone(), counter)),
            SampleBody::Documents(docs) => {
                let units = docs.iter().enumerate().map(|(i, d)| {
                    let id = d.id.clone().unwrap_or_else(|| format!("d{}", i + 1));
                    (id, d.text.clone(), Some(d.rank.unwrap_or(i as u32 + 1)))
                });
                KnowledgeSource::new(SourceKind::RetrievedCorpus, units, counter)
            }
        }
    }

    /// Token length of the full (untruncated) knowledge.
    pub fn knowledge_tokens(&self, counter: &TokenCounter) -> usize {
        match &self.body {
            SampleBody::Context(c) => counter.count(c),
            SampleBody::Documents(d) => d.iter().map(|d| counter.count(&d.text)).sum(),
        }
    }
}

pub fn parse_dataset(reader: impl BufRead) -> Result<Vec<Sample>, KnowledgeError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(KnowledgeError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(Sample::from_json_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Sample>, KnowledgeError> {
    let file = std::fs::File::open(path.as_ref()).map_err(KnowledgeError::Io)?;
    parse_dataset(std::io::BufReader::new(file))
}
