//! Global knowledge synchronization.
//!
//! At every timestep each seeking agent re-reads its chunk together with the
//! best-scored messages of the other agents from the previous timestep, as
//! many as its context window allows. New messages are then scored, either
//! by a rating call or from retrieval ranks.

mod budget;
mod pool;
mod step;

pub use budget::{fixed_prompt_tokens, max_k_fitting, max_k_under_budget, MESSAGE_SEPARATOR};
pub use pool::{
    retrieval_order, retrieval_scores, select_top_k, AgentMessage, MessagePool, RankingMode, RelevanceScore,
};
pub use step::{parse_score, rate, run_sync_timestep, seek, seek_batch, SeekOutcome, SyncState, EXCLUSION_STREAK};

use crate::backend::{BackendError, TemplateError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SyncError {
    #[error("agent {agent}: {source}")]
    Agent {
        agent: usize,
        #[source]
        source: BackendError,
    },
    #[error("chunk {chunk} cannot fit a prompt: needs {needed} tokens, context length is {limit}")]
    InfeasibleChunk { chunk: usize, needed: usize, limit: usize },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("malformed message pool: {0}")]
    Pool(String),
    #[error("no score found in reply `{0}`")]
    Score(String),
}
