//! Comparison methods: direct input, a sequential chain of agents, and a
//! map-reduce tree. They share the backends, templates and trace format of
//! the main engine.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::template::{CONTEXT, EXTRACTED_INFORMATION, QUESTION};
use crate::backend::{Bindings, ModelClient, TemplateKind};
use crate::context::CallContext;
use crate::knowledge::{truncate_to_budget, KnowledgeSource};
use crate::orchestrator::{prepare_chunks, RunConfig, RunFailure};
use crate::reason::{OutcomeStatus, ReasoningOutcome};
use crate::sync::{seek, SyncError, MESSAGE_SEPARATOR};
use crate::trace::{EventId, EventKind, EventSpec, Trace};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Assumed size of one mapped message when sizing reduce groups.
    pub expected_message_len: usize,
    /// Upper bound on how many messages one reduce call merges.
    pub group_fanin_cap: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            expected_message_len: 500,
            group_fanin_cap: 16,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.expected_message_len == 0 {
            return Err("baseline.expected_message_len must be positive".into());
        }
        if self.group_fanin_cap < 2 {
            return Err("baseline.group_fanin_cap must be at least 2".into());
        }
        Ok(())
    }
}

fn forced(answer: String, timestep: usize, context_size: usize) -> ReasoningOutcome {
    ReasoningOutcome {
        status: OutcomeStatus::Forced,
        answer: Some(answer.trim().to_string()),
        iteration: 1,
        timestep,
        context_size,
    }
}

/// Renders `kind` with `text` in `slot`, cutting `text` until the prompt is
/// under the client's context length.
fn render_fitting(
    ctx: &CallContext<'_>,
    client: &ModelClient,
    kind: TemplateKind,
    slot: &str,
    text: &str,
    extra: Bindings,
) -> Result<String, RunFailure> {
    let template = ctx.templates.get(kind);
    let limit = client.max_context();
    let render = |t: &str| {
        let mut b = extra.clone().with(QUESTION, ctx.question);
        b.set(slot, t);
        template.render(&b)
    };
    let mut prompt = render(text)?;
    let mut keep = text.len();
    loop {
        let needed = ctx.counter.count(&prompt);
        if needed < limit {
            return Ok(prompt);
        }
        if keep == 0 {
            return Err(RunFailure::Config(format!(
                "{} prompt needs {needed} tokens with no knowledge, context length is {limit}",
                kind.file_stem()
            )));
        }
        let over = needed + 1 - limit;
        let current = ctx.counter.count(&text[..keep]);
        keep = ctx.counter.prefix_within(text, current.saturating_sub(over));
        prompt = render(&text[..keep])?;
    }
}

/// One call with the whole (truncated) knowledge in the prompt.
pub fn run_direct(
    ctx: &CallContext<'_>,
    source: &KnowledgeSource,
    cfg: &RunConfig,
    trace: &mut Trace,
) -> Result<(ReasoningOutcome, usize), RunFailure> {
    let client = &ctx.clients.reasoning;
    let template = ctx.templates.get(TemplateKind::Direct);
    let room = client
        .max_context()
        .saturating_sub(1 + template.overhead_tokens(ctx.counter) + ctx.counter.count(ctx.question));
    let budget = cfg.input_budget.min(room);
    let text = truncate_to_budget(source, budget, ctx.counter).document_text();
    let prompt = render_fitting(ctx, client, TemplateKind::Direct, CONTEXT, &text, Bindings::new())?;
    let c = client.complete(&prompt, ctx.counter)?;
    trace.push(
        EventSpec::new(EventKind::BaselineStep, 1)
            .agent(0)
            .call(c.usage, c.elapsed_us),
    );
    Ok((forced(c.text, 1, 1), 1))
}

/// Agents read the chunks in order, each passing an updated summary to the
/// next; the last summary is answered by the reasoning model.
pub fn run_chain_of_agents(
    ctx: &CallContext<'_>,
    source: &KnowledgeSource,
    cfg: &RunConfig,
    trace: &mut Trace,
) -> Result<(ReasoningOutcome, usize), RunFailure> {
    let chunks = prepare_chunks(ctx, source, cfg)?;
    let client = &ctx.clients.seeking;
    let template = ctx.templates.get(TemplateKind::ChainStep);
    let limit = client.max_context();
    let mut summary = String::new();
    let mut prev: Option<EventId> = None;
    for chunk in &chunks {
        let base = template.render(
            &Bindings::new()
                .with(QUESTION, ctx.question)
                .with(CONTEXT, chunk.text.as_str())
                .with(EXTRACTED_INFORMATION, ""),
        )?;
        let needed = ctx.counter.count(&base);
        if needed >= limit {
            return Err(SyncError::InfeasibleChunk {
                chunk: chunk.index,
                needed,
                limit,
            }
            .into());
        }
        let extra = Bindings::new().with(CONTEXT, chunk.text.as_str());
        let prompt = render_fitting(
            ctx,
            client,
            TemplateKind::ChainStep,
            EXTRACTED_INFORMATION,
            &summary,
            extra,
        )?;
        let c = client
            .complete(&prompt, ctx.counter)
            .map_err(|source| SyncError::Agent {
                agent: chunk.index,
                source,
            })?;
        prev = Some(
            trace.push(
                EventSpec::new(EventKind::BaselineStep, 1)
                    .agent(chunk.index)
                    .after(prev)
                    .call(c.usage, c.elapsed_us),
            ),
        );
        summary = c.text;
    }
    let reasoning = &ctx.clients.reasoning;
    let prompt = render_fitting(
        ctx,
        reasoning,
        TemplateKind::ReasonForced,
        EXTRACTED_INFORMATION,
        &summary,
        Bindings::new(),
    )?;
    let c = reasoning.complete(&prompt, ctx.counter)?;
    trace.push(
        EventSpec::new(EventKind::Reason, 1)
            .iteration(1)
            .after(prev)
            .call(c.usage, c.elapsed_us),
    );
    Ok((forced(c.text, 1, usize::from(!chunks.is_empty())), chunks.len()))
}

/// Reduce group size for a reasoning model of context length `limit`.
pub fn reduce_fanin(ctx: &CallContext<'_>, cfg: &RunConfig) -> usize {
    let template = ctx.templates.get(TemplateKind::Reduce);
    let fixed = template.overhead_tokens(ctx.counter) + ctx.counter.count(ctx.question);
    let room = ctx.clients.reasoning.max_context().saturating_sub(fixed);
    let per = cfg.baseline.expected_message_len + ctx.counter.count(MESSAGE_SEPARATOR);
    (room / per).clamp(2, cfg.baseline.group_fanin_cap.max(2))
}

/// Every chunk is summarized independently; summaries are merged in groups
/// until one group remains, which is answered.
pub fn run_llm_mapreduce(
    ctx: &CallContext<'_>,
    source: &KnowledgeSource,
    cfg: &RunConfig,
    trace: &mut Trace,
) -> Result<(ReasoningOutcome, usize), RunFailure> {
    let chunks = prepare_chunks(ctx, source, cfg)?;
    let mapped: Vec<_> = chunks.par_iter().map(|c| seek(ctx, c, &[], 1)).collect();
    let mut level: Vec<(String, EventId)> = Vec::with_capacity(chunks.len());
    for (chunk, r) in chunks.iter().zip(mapped) {
        let out = r?;
        let id = trace.push(
            EventSpec::new(EventKind::BaselineStep, 1)
                .agent(chunk.index)
                .call(out.completion.usage, out.completion.elapsed_us),
        );
        level.push((out.message.text, id));
    }

    let fanin = reduce_fanin(ctx, cfg);
    let reasoning = &ctx.clients.reasoning;
    let mut depth = 1;
    while level.len() > fanin {
        depth += 1;
        let groups: Vec<&[(String, EventId)]> = level.chunks(fanin).collect();
        let merged: Vec<_> = groups
            .par_iter()
            .map(|g| {
                let joined = join(g);
                let prompt = render_fitting(
                    ctx,
                    reasoning,
                    TemplateKind::Reduce,
                    EXTRACTED_INFORMATION,
                    &joined,
                    Bindings::new(),
                )?;
                Ok::<_, RunFailure>(reasoning.complete(&prompt, ctx.counter)?)
            })
            .collect();
        let mut next = Vec::with_capacity(groups.len());
        for (g, r) in groups.iter().zip(merged) {
            let c = r?;
            let id = trace.push(
                EventSpec::new(EventKind::Reduce, depth)
                    .after(g.iter().map(|(_, e)| *e))
                    .call(c.usage, c.elapsed_us),
            );
            next.push((c.text, id));
        }
        level = next;
    }

    let joined = join(&level);
    let prompt = render_fitting(
        ctx,
        reasoning,
        TemplateKind::ReasonForced,
        EXTRACTED_INFORMATION,
        &joined,
        Bindings::new(),
    )?;
    let c = reasoning.complete(&prompt, ctx.counter)?;
    trace.push(
        EventSpec::new(EventKind::Reduce, depth + 1)
            .after(level.iter().map(|(_, e)| *e))
            .call(c.usage, c.elapsed_us),
    );
    Ok((forced(c.text, 1, level.len()), chunks.len()))
}

fn join(messages: &[(String, EventId)]) -> String {
    messages
        .iter()
        .map(|(m, _)| m.as_str())
        .collect::<Vec<_>>()
        .join(MESSAGE_SEPARATOR)
}
