//! The synchronize-then-reason loop.

use std::sync::Arc;

use rayon::prelude::*;

use super::{RunConfig, RunFailure};
use crate::backend::NO_INFORMATION;
use crate::context::CallContext;
use crate::knowledge::{partition, truncate_to_budget, KnowledgeChunk, KnowledgeSource};
use crate::reason::{
    attempt, build_schedule_with, run_reasoning_round, OutcomeStatus, ReasoningContext, ReasoningOutcome, Schedule,
};
use crate::sync::{
    retrieval_order, retrieval_scores, run_sync_timestep, seek, AgentMessage, MessagePool, RankingMode, RelevanceScore,
    SyncError, SyncState,
};
use crate::trace::{EventId, EventKind, EventSpec, Trace};

/// Truncates the source to the input budget and partitions it for the
/// seeking model.
pub(crate) fn prepare_chunks(
    ctx: &CallContext<'_>,
    source: &KnowledgeSource,
    cfg: &RunConfig,
) -> Result<Vec<KnowledgeChunk>, RunFailure> {
    let truncated = truncate_to_budget(source, cfg.input_budget, ctx.counter);
    Ok(partition(
        &truncated,
        cfg.chunk_size,
        ctx.clients.seeking.max_context(),
        ctx.counter,
    )?)
}

fn events_since(trace: &Trace, before: usize) -> Vec<EventId> {
    (before as EventId..trace.len() as EventId).collect()
}

/// Forced answer over the whole pool after every round refused.
fn terminal_attempt(
    ctx: &CallContext<'_>,
    pool: &MessagePool,
    iteration: usize,
    gate: Option<EventId>,
    trace: &mut Trace,
) -> Result<ReasoningOutcome, RunFailure> {
    let context = ReasoningContext::top(pool, pool.len(), iteration);
    let r = attempt(ctx, &context, true)?;
    trace.push(
        EventSpec::new(EventKind::Reason, pool.timestep)
            .iteration(iteration)
            .after(gate)
            .call(r.completion.usage, r.completion.elapsed_us),
    );
    Ok(r.outcome)
}

fn round_sizes(schedule: &Schedule, cfg: &RunConfig, t: usize) -> Vec<usize> {
    if t == 1 || cfg.accumulate_every_round {
        schedule.sizes.clone()
    } else {
        vec![schedule.last()]
    }
}

/// Runs timesteps `state.timestep + 1 ..= T`, reasoning after each, then a
/// forced attempt if every round refused.
fn continue_rounds(
    ctx: &CallContext<'_>,
    mut state: SyncState,
    schedule: &Schedule,
    cfg: &RunConfig,
    mut last_attempts: usize,
    trace: &mut Trace,
) -> Result<ReasoningOutcome, RunFailure> {
    while state.timestep < cfg.max_timesteps {
        let before = trace.len();
        state = run_sync_timestep(&state, ctx, trace)?;
        let deps = events_since(trace, before);
        let sizes = round_sizes(schedule, cfg, state.timestep);
        let round = run_reasoning_round(ctx, &state.pool, &sizes, &deps, state.gate, trace)?;
        state.set_gate(round.last_event);
        last_attempts = round.attempts;
        if round.outcome.status == OutcomeStatus::Answered {
            return Ok(round.outcome);
        }
    }
    terminal_attempt(ctx, &state.pool, last_attempts + 1, state.gate, trace)
}

fn empty_knowledge(ctx: &CallContext<'_>, cfg: &RunConfig, trace: &mut Trace) -> Result<ReasoningOutcome, RunFailure> {
    log::warn!("knowledge is empty; answering without context");
    terminal_attempt(ctx, &MessagePool::empty(cfg.ranking_mode), 1, None, trace)
}

/// Sequential run: synchronize all agents, reason, repeat up to `T` times.
pub fn run_extagents(
    ctx: &CallContext<'_>,
    source: &KnowledgeSource,
    cfg: &RunConfig,
    trace: &mut Trace,
) -> Result<(ReasoningOutcome, usize), RunFailure> {
    let chunks = prepare_chunks(ctx, source, cfg)?;
    let n = chunks.len();
    if n == 0 {
        return Ok((empty_knowledge(ctx, cfg, trace)?, 0));
    }
    let schedule = build_schedule_with(n, cfg.schedule_cap, cfg.schedule_variant);
    let state = SyncState::new(Arc::from(chunks), cfg.ranking_mode, cfg.chunk_exclusion);
    Ok((continue_rounds(ctx, state, &schedule, cfg, 0, trace)?, n))
}

fn placeholder(i: usize) -> AgentMessage {
    AgentMessage {
        agent_index: i,
        timestep: 1,
        text: NO_INFORMATION.to_string(),
        token_len: 0,
        is_no_information: true,
        sources_seen: Vec::new(),
    }
}

/// Round-one seeking in retrieval order.
struct RankedSeeker<'c> {
    chunks: &'c [KnowledgeChunk],
    order: Vec<usize>,
    surrogate: Vec<u32>,
    next: usize,
    live: usize,
    messages: Vec<Option<AgentMessage>>,
    seek_events: Vec<Option<EventId>>,
}

impl<'c> RankedSeeker<'c> {
    fn new(chunks: &'c [KnowledgeChunk]) -> Self {
        let ranks: Vec<Option<u32>> = chunks.iter().map(|c| c.retrieval_rank).collect();
        let n = chunks.len();
        Self {
            chunks,
            order: retrieval_order(&ranks),
            surrogate: retrieval_scores(&ranks),
            next: 0,
            live: 0,
            messages: vec![None; n],
            seek_events: vec![None; n],
        }
    }

    fn exhausted(&self) -> bool {
        self.next >= self.chunks.len()
    }

    /// Seeks the next `count` agents in parallel and returns their events.
    fn seek_next(
        &mut self,
        ctx: &CallContext<'_>,
        count: usize,
        trace: &mut Trace,
    ) -> Result<Vec<EventId>, RunFailure> {
        let end = (self.next + count).min(self.chunks.len());
        let batch: Vec<usize> = self.order[self.next..end].to_vec();
        self.next = end;
        let chunks = self.chunks;
        let results: Vec<_> = batch.par_iter().map(|&i| seek(ctx, &chunks[i], &[], 1)).collect();
        let mut ids = Vec::with_capacity(batch.len());
        let mut first_error: Option<SyncError> = None;
        for (&i, r) in batch.iter().zip(results) {
            match r {
                Ok(out) => {
                    let id = trace.push(
                        EventSpec::new(EventKind::Seek, 1)
                            .agent(i)
                            .call(out.completion.usage, out.completion.elapsed_us),
                    );
                    self.seek_events[i] = Some(id);
                    ids.push(id);
                    if !out.message.is_no_information {
                        self.live += 1;
                    }
                    self.messages[i] = Some(out.message);
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        match first_error {
            Some(e) => Err(e.into()),
            None => Ok(ids),
        }
    }

    /// Seeks until `size` live messages exist or every agent has spoken.
    fn fill(&mut self, ctx: &CallContext<'_>, size: usize, trace: &mut Trace) -> Result<(), RunFailure> {
        while self.live < size && !self.exhausted() {
            self.seek_next(ctx, size - self.live, trace)?;
        }
        Ok(())
    }

    /// Pool over the agents seen so far; the rest count as empty. Since
    /// agents speak in score order, its top `live` equal the full pool's.
    fn pool(&self) -> Result<MessagePool, RunFailure> {
        let messages: Vec<AgentMessage> = self
            .messages
            .iter()
            .enumerate()
            .map(|(i, m)| m.clone().unwrap_or_else(|| placeholder(i)))
            .collect();
        let scores = self
            .surrogate
            .iter()
            .enumerate()
            .map(|(i, &value)| RelevanceScore {
                agent_index: i,
                timestep: 1,
                value,
            })
            .collect();
        Ok(MessagePool::new(1, RankingMode::RetrievalPriority, messages, scores)?)
    }

    /// Synchronization state equal to the one a full first timestep leaves.
    fn into_state(self, chunk_exclusion: bool, gate: Option<EventId>) -> Result<SyncState, RunFailure> {
        debug_assert!(self.exhausted());
        let pool = self.pool()?;
        let mut state = SyncState::new(
            Arc::from(self.chunks.to_vec()),
            RankingMode::RetrievalPriority,
            chunk_exclusion,
        );
        state.timestep = 1;
        state.no_info_streak = pool.messages().iter().map(|m| u32::from(m.is_no_information)).collect();
        state.pool = pool;
        state.seek_events = self.seek_events;
        state.set_gate(gate);
        Ok(state)
    }
}

/// First-round pipeline: agents seek in retrieval order, and the agents
/// needed by the next reasoning attempt seek while the current attempt runs.
/// Answers and outcomes match [`run_extagents`]; only the dependency shape
/// differs. Seeks that an earlier answer made unnecessary are marked wasted.
pub fn run_interleaved(
    ctx: &CallContext<'_>,
    source: &KnowledgeSource,
    cfg: &RunConfig,
    trace: &mut Trace,
) -> Result<(ReasoningOutcome, usize), RunFailure> {
    if cfg.ranking_mode != RankingMode::RetrievalPriority {
        return Err(RunFailure::Config(
            "interleaved needs ranking_mode = retrieval_priority".into(),
        ));
    }
    let chunks = prepare_chunks(ctx, source, cfg)?;
    let n = chunks.len();
    if n == 0 {
        return Ok((empty_knowledge(ctx, cfg, trace)?, 0));
    }
    let schedule = build_schedule_with(n, cfg.schedule_cap, cfg.schedule_variant);
    let mut seeker = RankedSeeker::new(&chunks);
    let mut prev_reason: Option<EventId> = None;
    for (s, &size) in schedule.sizes.iter().enumerate() {
        seeker.fill(ctx, size, trace)?;
        let pool = seeker.pool()?;
        let speculative = match schedule.sizes.get(s + 1) {
            Some(&next_size) if next_size > seeker.live && !seeker.exhausted() => {
                seeker.seek_next(ctx, next_size - seeker.live, trace)?
            }
            _ => Vec::new(),
        };
        let context = ReasoningContext::top(&pool, size, s + 1);
        let r = attempt(ctx, &context, false)?;
        let deps: Vec<EventId> = r.used_agents.iter().filter_map(|&i| seeker.seek_events[i]).collect();
        let id = trace.push(
            EventSpec::new(EventKind::Reason, 1)
                .iteration(s + 1)
                .after(deps.into_iter().chain(prev_reason))
                .call(r.completion.usage, r.completion.elapsed_us),
        );
        prev_reason = Some(id);
        if r.outcome.status == OutcomeStatus::Answered {
            for e in speculative {
                trace.mark_wasted(e);
            }
            return Ok((r.outcome, n));
        }
    }
    let attempts = schedule.len();
    let state = seeker.into_state(cfg.chunk_exclusion, prev_reason)?;
    Ok((continue_rounds(ctx, state, &schedule, cfg, attempts, trace)?, n))
}
