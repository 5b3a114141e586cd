//! Knowledge-accumulating reasoning.
//!
//! The reasoning agent answers from growing rank-prefixes of the message
//! pool (top 1, 2, 4, ... then all). Each attempt may refuse with
//! `NO ANSWER`; the first answer ends the round.

use serde::{Deserialize, Serialize};

use crate::backend::template::{EXTRACTED_INFORMATION, QUESTION};
use crate::backend::{is_no_answer, BackendError, Bindings, Completion, TemplateError, TemplateKind};
use crate::context::CallContext;
use crate::sync::{max_k_fitting, select_top_k, AgentMessage, MessagePool, MESSAGE_SEPARATOR};
use crate::trace::{EventId, EventKind, EventSpec, Trace};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleVariant {
    /// 1, 2, 4, ..., N.
    #[default]
    FromOne,
    /// 2, 4, 8, ..., N.
    FromTwo,
}

/// Context sizes for successive reasoning attempts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub sizes: Vec<usize>,
    pub cap: usize,
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn last(&self) -> usize {
        *self.sizes.last().expect("schedules are never empty")
    }
}

/// Powers of two below `n`, at most `cap - 1` of them, followed by `n`.
pub fn build_schedule(n: usize, cap: usize) -> Schedule {
    build_schedule_with(n, cap, ScheduleVariant::FromOne)
}

pub fn build_schedule_with(n: usize, cap: usize, variant: ScheduleVariant) -> Schedule {
    let n = n.max(1);
    let cap = cap.max(1);
    let first_exp = match variant {
        ScheduleVariant::FromOne => 0,
        ScheduleVariant::FromTwo => 1,
    };
    let mut sizes: Vec<usize> = (first_exp..)
        .map(|e: u32| 1usize.checked_shl(e).unwrap_or(usize::MAX))
        .take_while(|&p| p < n)
        .take(cap - 1)
        .collect();
    sizes.push(n);
    Schedule { sizes, cap }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Answered,
    Refused,
    Forced,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningOutcome {
    pub status: OutcomeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    /// 1-based attempt index within the round.
    pub iteration: usize,
    /// Timestep of the pool the attempt read.
    pub timestep: usize,
    /// Messages actually placed in the prompt.
    pub context_size: usize,
}

/// Messages for one attempt, best first.
#[derive(Clone, Debug)]
pub struct ReasoningContext<'p> {
    pub iteration: usize,
    pub source_timestep: usize,
    pub messages: Vec<&'p AgentMessage>,
}

impl<'p> ReasoningContext<'p> {
    /// The top `size` live messages of `pool`.
    pub fn top(pool: &'p MessagePool, size: usize, iteration: usize) -> Self {
        Self {
            iteration,
            source_timestep: pool.timestep,
            messages: select_top_k(pool, size),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReasonError {
    #[error("reasoning: {0}")]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Clone, Debug)]
pub struct AttemptResult {
    pub outcome: ReasoningOutcome,
    pub completion: Completion,
    /// Agents whose messages made it into the prompt.
    pub used_agents: Vec<usize>,
}

/// One reasoning call. The open template may refuse; the terminal template
/// always produces a forced answer. Messages that do not fit the reasoning
/// context are dropped from the end.
pub fn attempt(
    ctx: &CallContext<'_>,
    context: &ReasoningContext<'_>,
    terminal: bool,
) -> Result<AttemptResult, ReasonError> {
    let kind = if terminal {
        TemplateKind::ReasonForced
    } else {
        TemplateKind::ReasonOpen
    };
    let template = ctx.templates.get(kind);
    let limit = ctx.clients.reasoning.max_context();
    let fixed = ctx.counter.count(ctx.question) + template.overhead_tokens(ctx.counter);
    let lens: Vec<usize> = context.messages.iter().map(|m| m.token_len).collect();
    let sep = ctx.counter.count(MESSAGE_SEPARATOR);
    let mut k = max_k_fitting(fixed, sep, &lens, limit);
    let prompt = loop {
        let info = context.messages[..k]
            .iter()
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join(MESSAGE_SEPARATOR);
        let p = template.render(
            &Bindings::new()
                .with(QUESTION, ctx.question)
                .with(EXTRACTED_INFORMATION, info),
        )?;
        if k == 0 || ctx.counter.count(&p) < limit {
            break p;
        }
        k -= 1;
    };
    if k < context.messages.len() {
        log::warn!(
            "reasoning iteration {}: kept {k} of {} messages to fit {limit} tokens",
            context.iteration,
            context.messages.len()
        );
    }
    let completion = ctx.clients.reasoning.complete(&prompt, ctx.counter)?;
    let answer = completion.text.trim().to_string();
    let (status, answer) = if terminal {
        (OutcomeStatus::Forced, Some(answer))
    } else if is_no_answer(&answer) {
        (OutcomeStatus::Refused, None)
    } else {
        (OutcomeStatus::Answered, Some(answer))
    };
    Ok(AttemptResult {
        outcome: ReasoningOutcome {
            status,
            answer,
            iteration: context.iteration,
            timestep: context.source_timestep,
            context_size: k,
        },
        completion,
        used_agents: context.messages[..k].iter().map(|m| m.agent_index).collect(),
    })
}

#[derive(Clone, Debug)]
pub struct RoundResult {
    pub outcome: ReasoningOutcome,
    /// Last reasoning event of the round.
    pub last_event: Option<EventId>,
    pub attempts: usize,
}

/// Tries each size in `sizes` in order until one attempt answers. Every
/// attempt depends on `deps` and on the previous attempt (or `gate`).
pub fn run_reasoning_round(
    ctx: &CallContext<'_>,
    pool: &MessagePool,
    sizes: &[usize],
    deps: &[EventId],
    gate: Option<EventId>,
    trace: &mut Trace,
) -> Result<RoundResult, ReasonError> {
    let mut prev = gate;
    let mut last = None;
    for (s, &size) in sizes.iter().enumerate() {
        let context = ReasoningContext::top(pool, size, s + 1);
        let r = attempt(ctx, &context, false)?;
        let id = trace.push(
            EventSpec::new(EventKind::Reason, pool.timestep)
                .iteration(s + 1)
                .after(deps.iter().copied().chain(prev))
                .call(r.completion.usage, r.completion.elapsed_us),
        );
        prev = Some(id);
        let answered = r.outcome.status == OutcomeStatus::Answered;
        last = Some(r.outcome);
        if answered {
            break;
        }
    }
    let outcome = last.expect("schedules are never empty");
    Ok(RoundResult {
        attempts: outcome.iteration,
        outcome,
        last_event: prev,
    })
}
