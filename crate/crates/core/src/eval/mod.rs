//! Answer scoring, BM25 retrieval, benchmark filtering and evaluation reports.

mod bm25;
mod f1;
mod filter;
mod report;

pub use bm25::{bm25_retrieve, tokenize, Bm25Index};
pub use f1::{best_f1, is_punct, normalize_answer, token_f1};
pub use filter::{filter_benchmark, windows, AuditEntry, FilterConfig, FilterDecision, FilterOutcome, AUDIT_SCHEMA};
pub use report::{evaluate, median, run_samples, EvalReport, EvalRow, RunSummary, REPORT_SCHEMA};

use crate::backend::{BackendError, TemplateError};
use crate::knowledge::KnowledgeError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}
