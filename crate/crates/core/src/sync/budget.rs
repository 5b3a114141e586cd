use super::{MessagePool, SyncError};
use crate::backend::PromptTemplate;
use crate::knowledge::{KnowledgeChunk, TokenCounter};

/// Largest `k` such that `fixed + sum(lens[..k]) + k * separator < limit`.
///
/// `lens` must already be in selection order.
pub fn max_k_fitting(fixed: usize, separator: usize, lens: &[usize], limit: usize) -> usize {
    let mut total = fixed;
    let mut k = 0;
    for &len in lens {
        total += len + separator;
        if total >= limit {
            break;
        }
        k += 1;
    }
    k
}

/// Tokens an update prompt for `chunk` needs before any message is added.
pub fn fixed_prompt_tokens(
    question: &str,
    chunk: &KnowledgeChunk,
    template: &PromptTemplate,
    iteration_label: &str,
    counter: &TokenCounter,
) -> usize {
    counter.count(question) + chunk.token_len + template.overhead_tokens(counter) + counter.count(iteration_label)
}

/// How many of the best pool messages fit in `chunk`'s update prompt under
/// context length `limit`. `skip` leaves one agent (the caller) out.
#[allow(clippy::too_many_arguments)]
pub fn max_k_under_budget(
    question: &str,
    chunk: &KnowledgeChunk,
    pool: &MessagePool,
    skip: Option<usize>,
    template: &PromptTemplate,
    iteration_label: &str,
    limit: usize,
    counter: &TokenCounter,
) -> Result<usize, SyncError> {
    let fixed = fixed_prompt_tokens(question, chunk, template, iteration_label, counter);
    if fixed >= limit {
        return Err(SyncError::InfeasibleChunk {
            chunk: chunk.index,
            needed: fixed,
            limit,
        });
    }
    let lens: Vec<usize> = pool
        .ranked_excluding(skip)
        .into_iter()
        .map(|i| pool.message(i).token_len)
        .collect();
    Ok(max_k_fitting(fixed, counter.count(MESSAGE_SEPARATOR), &lens, limit))
}

/// Joins selected messages inside a prompt.
pub const MESSAGE_SEPARATOR: &str = "\n\n";
