//! Knowledge sources: token accounting, truncation, partitioning and dataset IO.

mod dataset;
mod partition;
mod source;
mod tokens;

pub use dataset::{parse_dataset, read_dataset, Document, Sample, SampleBody};
pub use partition::{partition, KnowledgeChunk};
pub use source::{truncate_to_budget, KnowledgeSource, SourceKind, TextUnit};
pub use tokens::{
    count_tokens, format_token_count, parse_token_count, CharsPerToken, CounterMode, Language, TokenCounter,
    TokenizerPlugin,
};

pub(crate) use tokens::is_cjk;

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("duplicate unit id `{0}`")]
    DuplicateUnit(String),
    #[error("dataset line {line}: field `{field}`: {message}")]
    Dataset {
        line: usize,
        field: String,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
