use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;

use super::budget::{max_k_under_budget, MESSAGE_SEPARATOR};
use super::{retrieval_scores, AgentMessage, MessagePool, RankingMode, RelevanceScore, SyncError};
use crate::backend::template::{CONTEXT, EXTRACTED_INFORMATION, ITERATION, QUESTION};
use crate::backend::{is_no_information, iteration_label, Bindings, Completion, TemplateKind};
use crate::context::CallContext;
use crate::knowledge::KnowledgeChunk;
use crate::trace::{EventId, EventKind, EventSpec, Trace};

/// Consecutive no-information replies after which an agent is excluded.
pub const EXCLUSION_STREAK: u32 = 2;

/// Synchronization state after some number of timesteps.
#[derive(Clone, Debug)]
pub struct SyncState {
    pub chunks: Arc<[KnowledgeChunk]>,
    pub pool: MessagePool,
    pub timestep: usize,
    pub excluded: BTreeSet<usize>,
    pub chunk_exclusion: bool,
    pub(crate) no_info_streak: Vec<u32>,
    pub(crate) seek_events: Vec<Option<EventId>>,
    pub(crate) rate_events: Vec<EventId>,
    pub(crate) gate: Option<EventId>,
}

impl SyncState {
    pub fn new(chunks: Arc<[KnowledgeChunk]>, ranking_mode: RankingMode, chunk_exclusion: bool) -> Self {
        let n = chunks.len();
        Self {
            chunks,
            pool: MessagePool::empty(ranking_mode),
            timestep: 0,
            excluded: BTreeSet::new(),
            chunk_exclusion,
            no_info_streak: vec![0; n],
            seek_events: vec![None; n],
            rate_events: Vec::new(),
            gate: None,
        }
    }

    pub fn n(&self) -> usize {
        self.chunks.len()
    }

    /// Event the next timestep has to wait for (the last reasoning attempt).
    pub fn set_gate(&mut self, event: Option<EventId>) {
        self.gate = event;
    }

    /// Seek event that produced agent `i`'s current message.
    pub fn seek_event(&self, i: usize) -> Option<EventId> {
        self.seek_events[i]
    }

    /// Rating events of the current timestep.
    pub fn rate_events(&self) -> &[EventId] {
        &self.rate_events
    }

    fn ranks(&self) -> Vec<Option<u32>> {
        self.chunks.iter().map(|c| c.retrieval_rank).collect()
    }
}

/// A finished seek with the agents whose messages it read.
#[derive(Clone, Debug)]
pub struct SeekOutcome {
    pub message: AgentMessage,
    pub completion: Completion,
}

fn join_messages<'m>(messages: impl IntoIterator<Item = &'m AgentMessage>) -> String {
    messages
        .into_iter()
        .map(|m| m.text.as_str())
        .collect::<Vec<_>>()
        .join(MESSAGE_SEPARATOR)
}

fn seek_prompt(
    ctx: &CallContext<'_>,
    chunk: &KnowledgeChunk,
    prior_context: &[&AgentMessage],
    timestep: usize,
) -> Result<String, SyncError> {
    let b = Bindings::new()
        .with(QUESTION, ctx.question)
        .with(CONTEXT, chunk.text.as_str());
    let (kind, b) = if timestep <= 1 {
        (TemplateKind::SeekFirst, b)
    } else {
        let b = b
            .with(ITERATION, iteration_label(timestep, ctx.language()))
            .with(EXTRACTED_INFORMATION, join_messages(prior_context.iter().copied()));
        (TemplateKind::SeekUpdate, b)
    };
    Ok(ctx.templates.get(kind).render(&b)?)
}

/// One seeking call. Timestep 1 uses the first-pass template; later
/// timesteps pass `prior_context` (best first) with the update template.
pub fn seek(
    ctx: &CallContext<'_>,
    chunk: &KnowledgeChunk,
    prior_context: &[&AgentMessage],
    timestep: usize,
) -> Result<SeekOutcome, SyncError> {
    let prompt = seek_prompt(ctx, chunk, prior_context, timestep)?;
    let (needed, limit) = (ctx.counter.count(&prompt), ctx.clients.seeking.max_context());
    if needed >= limit {
        return Err(SyncError::InfeasibleChunk {
            chunk: chunk.index,
            needed,
            limit,
        });
    }
    let completion = ctx
        .clients
        .seeking
        .complete(&prompt, ctx.counter)
        .map_err(|source| SyncError::Agent {
            agent: chunk.index,
            source,
        })?;
    let no_info = is_no_information(&completion.text);
    let message = AgentMessage {
        agent_index: chunk.index,
        timestep: timestep.max(1),
        token_len: ctx.counter.count(&completion.text),
        text: completion.text.clone(),
        is_no_information: no_info,
        sources_seen: prior_context.iter().map(|m| m.agent_index).collect(),
    };
    Ok(SeekOutcome { message, completion })
}

/// Parses the first integer after `Score:` (any case, ASCII or fullwidth
/// colon) and clamps it to 0..=100.
pub fn parse_score(reply: &str) -> Result<u32, SyncError> {
    for line in reply.lines() {
        let lower = line.to_lowercase();
        let mut from = 0;
        while let Some(at) = lower[from..].find("score") {
            let rest = lower[from + at + "score".len()..].trim_start();
            let rest = rest.strip_prefix(':').or_else(|| rest.strip_prefix('：'));
            if let Some(rest) = rest {
                if let Some(v) = first_integer(rest) {
                    return Ok(v.clamp(0, 100) as u32);
                }
            }
            from += at + "score".len();
        }
    }
    Err(SyncError::Score(reply.chars().take(120).collect()))
}

fn first_integer(s: &str) -> Option<i64> {
    let start = s.find(|c: char| c.is_ascii_digit())?;
    let digits: String = s[start..].chars().take_while(char::is_ascii_digit).collect();
    let negative = s[..start].ends_with('-');
    let v = digits.parse::<i64>().unwrap_or(i64::MAX);
    Some(if negative { -v } else { v })
}

/// Rates one message. Sentinels score 0 without a call; an unparsable reply
/// scores 0 and is logged.
pub fn rate(ctx: &CallContext<'_>, message: &AgentMessage) -> Result<(RelevanceScore, Option<Completion>), SyncError> {
    let score = |value| RelevanceScore {
        agent_index: message.agent_index,
        timestep: message.timestep,
        value,
    };
    if message.is_no_information {
        return Ok((score(0), None));
    }
    let template = ctx.templates.get(TemplateKind::Rate);
    let limit = ctx.clients.rating.max_context();
    let mut text = message.text.as_str();
    let room = limit
        .saturating_sub(1)
        .saturating_sub(template.overhead_tokens(ctx.counter) + ctx.counter.count(ctx.question));
    if ctx.counter.count(text) > room {
        log::warn!("agent {}: message cut to {room} tokens for rating", message.agent_index);
        text = &text[..ctx.counter.prefix_within(text, room)];
    }
    let prompt = template.render(
        &Bindings::new()
            .with(QUESTION, ctx.question)
            .with(EXTRACTED_INFORMATION, text),
    )?;
    let completion = ctx
        .clients
        .rating
        .complete(&prompt, ctx.counter)
        .map_err(|source| SyncError::Agent {
            agent: message.agent_index,
            source,
        })?;
    let value = parse_score(&completion.text).unwrap_or_else(|e| {
        log::warn!("agent {}: {e}; using 0", message.agent_index);
        0
    });
    Ok((score(value), Some(completion)))
}

/// Context for agent `i`'s update: the best other messages that fit its
/// prompt. Returned best first.
fn plan_context<'p>(
    ctx: &CallContext<'_>,
    state: &'p SyncState,
    i: usize,
    timestep: usize,
) -> Result<Vec<&'p AgentMessage>, SyncError> {
    if timestep <= 1 || state.pool.is_empty() {
        return Ok(Vec::new());
    }
    let chunk = &state.chunks[i];
    let limit = ctx.clients.seeking.max_context();
    let template = ctx.templates.get(TemplateKind::SeekUpdate);
    let label = iteration_label(timestep, ctx.language());
    let mut k = max_k_under_budget(
        ctx.question,
        chunk,
        &state.pool,
        Some(i),
        template,
        &label,
        limit,
        ctx.counter,
    )?;
    let ranked = state.pool.ranked_excluding(Some(i));
    loop {
        let chosen: Vec<&AgentMessage> = ranked[..k.min(ranked.len())]
            .iter()
            .map(|&j| state.pool.message(j))
            .collect();
        let prompt = seek_prompt(ctx, chunk, &chosen, timestep)?;
        let needed = ctx.counter.count(&prompt);
        if needed < limit {
            return Ok(chosen);
        }
        if k == 0 {
            return Err(SyncError::InfeasibleChunk {
                chunk: i,
                needed,
                limit,
            });
        }
        k -= 1;
    }
}

/// Seeks for `agents` in parallel at the state's next timestep. Results are
/// in the order of `agents`.
pub fn seek_batch(ctx: &CallContext<'_>, state: &SyncState, agents: &[usize]) -> Vec<Result<SeekOutcome, SyncError>> {
    let t = state.timestep + 1;
    agents
        .par_iter()
        .map(|&i| {
            let prior = plan_context(ctx, state, i, t)?;
            seek(ctx, &state.chunks[i], &prior, t)
        })
        .collect()
}

/// Dependencies of agent `i`'s seek at the next timestep.
fn seek_dependencies(state: &SyncState, i: usize, sources: &[usize]) -> Vec<EventId> {
    let mut deps: Vec<EventId> = state.seek_events[i].into_iter().collect();
    deps.extend(sources.iter().filter_map(|&j| state.seek_events[j]));
    deps.extend(state.rate_events.iter().copied());
    deps.extend(state.gate);
    deps
}

/// Advances synchronization by one timestep: every active agent seeks with
/// its best-fitting context, then new messages are scored.
pub fn run_sync_timestep(state: &SyncState, ctx: &CallContext<'_>, trace: &mut Trace) -> Result<SyncState, SyncError> {
    let n = state.n();
    let t = state.timestep + 1;
    let active: Vec<usize> = (0..n).filter(|i| !state.excluded.contains(i)).collect();
    let results = seek_batch(ctx, state, &active);

    let mut next = state.clone();
    next.timestep = t;
    let mut messages: Vec<Option<AgentMessage>> = if state.pool.is_empty() {
        vec![None; n]
    } else {
        state.pool.messages().iter().cloned().map(Some).collect()
    };
    let mut first_error = None;
    for (&i, r) in active.iter().zip(results) {
        match r {
            Ok(out) => {
                let deps = seek_dependencies(state, i, &out.message.sources_seen);
                let id = trace.push(
                    EventSpec::new(EventKind::Seek, t)
                        .agent(i)
                        .after(deps)
                        .call(out.completion.usage, out.completion.elapsed_us),
                );
                next.seek_events[i] = Some(id);
                next.no_info_streak[i] = if out.message.is_no_information {
                    next.no_info_streak[i] + 1
                } else {
                    0
                };
                messages[i] = Some(out.message);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    let messages: Vec<AgentMessage> = messages
        .into_iter()
        .map(|m| m.expect("every agent has spoken"))
        .collect();

    let mut values = vec![0u32; n];
    next.rate_events.clear();
    match state.pool.ranking_mode {
        RankingMode::RetrievalPriority => {
            let surrogate = retrieval_scores(&state.ranks());
            for &i in &active {
                values[i] = surrogate[i];
            }
        }
        RankingMode::LlmRated => {
            let to_rate: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&i| !messages[i].is_no_information)
                .collect();
            let rated: Vec<_> = to_rate.par_iter().map(|&i| rate(ctx, &messages[i])).collect();
            let mut first_error = None;
            for (&i, r) in to_rate.iter().zip(rated) {
                match r {
                    Ok((score, completion)) => {
                        values[i] = score.value;
                        if let Some(c) = completion {
                            let id = trace.push(
                                EventSpec::new(EventKind::Rate, t)
                                    .agent(i)
                                    .after(next.seek_events[i])
                                    .call(c.usage, c.elapsed_us),
                            );
                            next.rate_events.push(id);
                        }
                    }
                    Err(e) => {
                        first_error.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_error {
                return Err(e);
            }
        }
    }

    if state.chunk_exclusion {
        for &i in &active {
            if next.no_info_streak[i] >= EXCLUSION_STREAK {
                log::debug!("agent {i} excluded after {} empty timesteps", next.no_info_streak[i]);
                next.excluded.insert(i);
            }
        }
    }
    for &i in &next.excluded {
        values[i] = 0;
    }
    let scores = values
        .iter()
        .enumerate()
        .map(|(i, &value)| RelevanceScore {
            agent_index: i,
            timestep: messages[i].timestep,
            value,
        })
        .collect();
    next.pool = MessagePool::new(t, state.pool.ranking_mode, messages, scores)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_parsing() {
        assert_eq!(parse_score("Score: 90").unwrap(), 90);
        assert_eq!(parse_score("Score: 90.0").unwrap(), 90);
        assert_eq!(parse_score("I think Score: 250").unwrap(), 100);
        assert_eq!(parse_score("reasoning...\nscore：-3").unwrap(), 0);
        assert_eq!(parse_score("The score is high.\nScore: 42 out of 100").unwrap(), 42);
        assert!(parse_score("no number here").is_err());
        assert!(parse_score("Score: n/a").is_err());
    }
}
