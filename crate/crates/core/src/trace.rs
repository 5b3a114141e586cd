//! Append-only log of agent calls and the dependencies between them.
//!
//! Event ids are dense and assigned in append order, and an event may only
//! depend on earlier ids, so every trace is a DAG in topological order.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::backend::{estimate_cost, CompletionUsage, Cost, CostModel};

pub const TRACE_SCHEMA: &str = "extagents.trace/v1";

pub type EventId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Seek,
    Rate,
    Reason,
    Reduce,
    BaselineStep,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub id: EventId,
    pub kind: EventKind,
    pub depends_on: Vec<EventId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_index: Option<usize>,
    pub timestep: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
    pub usage: CompletionUsage,
    pub wall_time_us: u64,
    /// Speculative work whose result was never used.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub wasted: bool,
}

/// An event before it gets an id.
#[derive(Clone, Debug)]
pub struct EventSpec {
    pub kind: EventKind,
    pub depends_on: Vec<EventId>,
    pub agent_index: Option<usize>,
    pub timestep: usize,
    pub iteration: Option<usize>,
    pub usage: CompletionUsage,
    pub wall_time_us: u64,
}

impl EventSpec {
    pub fn new(kind: EventKind, timestep: usize) -> Self {
        Self {
            kind,
            depends_on: Vec::new(),
            agent_index: None,
            timestep,
            iteration: None,
            usage: CompletionUsage::default(),
            wall_time_us: 0,
        }
    }

    pub fn agent(mut self, i: usize) -> Self {
        self.agent_index = Some(i);
        self
    }

    pub fn iteration(mut self, s: usize) -> Self {
        self.iteration = Some(s);
        self
    }

    pub fn after(mut self, deps: impl IntoIterator<Item = EventId>) -> Self {
        self.depends_on.extend(deps);
        self
    }

    pub fn call(mut self, usage: CompletionUsage, wall_time_us: u64) -> Self {
        self.usage = usage;
        self.wall_time_us = wall_time_us;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("trace corrupted: event {event} depends on {dependency}, which is not an earlier event")]
    Corrupt { event: EventId, dependency: EventId },
    #[error("trace corrupted: event at position {position} has id {id}")]
    BadId { position: usize, id: EventId },
    #[error("trace file: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: Cost,
}

impl UsageTotals {
    fn add(&mut self, e: &TraceEvent, model: &CostModel) {
        self.calls += 1;
        self.input_tokens += e.usage.input_tokens;
        self.output_tokens += e.usage.output_tokens;
        self.cost += estimate_cost(e.usage, model);
    }
}

/// Aggregates of one trace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: Cost,
    pub critical_path_rounds: u64,
    /// Sum of wall times along the slowest dependency chain.
    pub critical_path_us: u64,
    pub bandwidth: usize,
    /// Wasted speculative calls, excluded from the fields above.
    pub speculative: UsageTotals,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a trace from stored events, checking ids and edges.
    pub fn from_events(events: Vec<TraceEvent>) -> Result<Self, TraceError> {
        let t = Self { events };
        t.validate()?;
        Ok(t)
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn push(&mut self, spec: EventSpec) -> EventId {
        let id = self.events.len() as EventId;
        let mut deps = spec.depends_on;
        deps.sort_unstable();
        deps.dedup();
        debug_assert!(deps.iter().all(|&d| d < id), "dependency on a later event");
        self.events.push(TraceEvent {
            id,
            kind: spec.kind,
            depends_on: deps,
            agent_index: spec.agent_index,
            timestep: spec.timestep,
            iteration: spec.iteration,
            usage: spec.usage,
            wall_time_us: spec.wall_time_us,
            wasted: false,
        });
        id
    }

    pub fn mark_wasted(&mut self, id: EventId) {
        if let Some(e) = self.events.get_mut(id as usize) {
            e.wasted = true;
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        for (pos, e) in self.events.iter().enumerate() {
            if e.id != pos as EventId {
                return Err(TraceError::BadId {
                    position: pos,
                    id: e.id,
                });
            }
            if let Some(&d) = e.depends_on.iter().find(|&&d| d >= e.id) {
                return Err(TraceError::Corrupt {
                    event: e.id,
                    dependency: d,
                });
            }
        }
        Ok(())
    }

    /// Longest dependency chain, counted in calls and in summed wall time.
    fn longest_chain(&self) -> Result<(u64, u64), TraceError> {
        self.validate()?;
        let mut rounds = vec![0u64; self.events.len()];
        let mut micros = vec![0u64; self.events.len()];
        for e in &self.events {
            let i = e.id as usize;
            let (r, m) = e
                .depends_on
                .iter()
                .map(|&d| (rounds[d as usize], micros[d as usize]))
                .fold((0, 0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
            rounds[i] = r + 1;
            micros[i] = m + e.wall_time_us;
        }
        Ok((
            rounds.iter().copied().max().unwrap_or(0),
            micros.iter().copied().max().unwrap_or(0),
        ))
    }

    /// Number of sequential calls on the longest dependency chain.
    pub fn critical_path_rounds(&self) -> Result<u64, TraceError> {
        self.longest_chain().map(|(r, _)| r)
    }

    /// Largest number of distinct agents whose output one synchronization
    /// call consumed, counting the caller itself. Reduce inputs count once
    /// per child call.
    pub fn bandwidth(&self) -> usize {
        let mut best = 0;
        for e in &self.events {
            if !matches!(e.kind, EventKind::Seek | EventKind::BaselineStep | EventKind::Reduce) {
                continue;
            }
            let mut sources: BTreeSet<(u8, u64)> = BTreeSet::new();
            if let Some(a) = e.agent_index {
                sources.insert((0, a as u64));
            }
            for &d in &e.depends_on {
                let dep = &self.events[d as usize];
                match (dep.kind, dep.agent_index) {
                    (EventKind::Seek | EventKind::BaselineStep, Some(a)) => {
                        sources.insert((0, a as u64));
                    }
                    (EventKind::Reduce, _) => {
                        sources.insert((1, dep.id));
                    }
                    _ => {}
                }
            }
            best = best.max(sources.len());
        }
        best
    }

    pub fn totals(&self, model: &CostModel) -> Result<Totals, TraceError> {
        let (critical_path_rounds, critical_path_us) = self.longest_chain()?;
        let mut committed = UsageTotals::default();
        let mut speculative = UsageTotals::default();
        for e in &self.events {
            if e.wasted {
                speculative.add(e, model);
            } else {
                committed.add(e, model);
            }
        }
        Ok(Totals {
            calls: committed.calls,
            input_tokens: committed.input_tokens,
            output_tokens: committed.output_tokens,
            cost: committed.cost,
            critical_path_rounds,
            critical_path_us,
            bandwidth: self.bandwidth(),
            speculative,
        })
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Standalone trace document tagged with [`TRACE_SCHEMA`].
    pub fn to_json(&self) -> String {
        serde_json::json!({ "schema": TRACE_SCHEMA, "events": self.events }).to_string()
    }

    pub fn from_json(text: &str) -> Result<Self, TraceError> {
        #[derive(Deserialize)]
        struct Doc {
            schema: String,
            events: Vec<TraceEvent>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| TraceError::Format(e.to_string()))?;
        if doc.schema != TRACE_SCHEMA {
            return Err(TraceError::Format(format!(
                "unsupported schema `{}` (expected {TRACE_SCHEMA})",
                doc.schema
            )));
        }
        Self::from_events(doc.events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: EventKind, agent: Option<usize>, deps: &[EventId]) -> EventSpec {
        let mut s = EventSpec::new(kind, 1)
            .after(deps.iter().copied())
            .call(CompletionUsage::new(10, 1), 5);
        s.agent_index = agent;
        s
    }

    #[test]
    fn empty_trace_totals_are_zero() {
        let t = Trace::new().totals(&CostModel::GPT_4O_MINI).unwrap();
        assert_eq!(t, Totals::default());
    }

    #[test]
    fn chain_critical_path_and_bandwidth() {
        let mut t = Trace::new();
        let mut prev = None;
        for i in 0..5 {
            prev = Some(t.push(ev(EventKind::BaselineStep, Some(i), prev.as_slice())));
        }
        t.push(ev(EventKind::Reason, None, prev.as_slice()));
        assert_eq!(t.critical_path_rounds().unwrap(), 6);
        assert_eq!(t.bandwidth(), 2);
        let tot = t.totals(&CostModel::FREE).unwrap();
        assert_eq!((tot.calls, tot.input_tokens, tot.critical_path_us), (6, 60, 30));
    }

    #[test]
    fn corruption_detected() {
        let mut events = {
            let mut t = Trace::new();
            t.push(ev(EventKind::Seek, Some(0), &[]));
            t.push(ev(EventKind::Seek, Some(1), &[0]));
            t.events
        };
        events[0].depends_on = vec![1];
        assert_eq!(
            Trace::from_events(events.clone()),
            Err(TraceError::Corrupt {
                event: 0,
                dependency: 1
            })
        );
        events[0].depends_on.clear();
        events[1].id = 7;
        assert!(matches!(Trace::from_events(events), Err(TraceError::BadId { .. })));
    }

    #[test]
    fn wasted_events_reported_separately() {
        let mut t = Trace::new();
        t.push(ev(EventKind::Seek, Some(0), &[]));
        let w = t.push(ev(EventKind::Seek, Some(1), &[]));
        t.mark_wasted(w);
        let tot = t.totals(&CostModel::FREE).unwrap();
        assert_eq!((tot.calls, tot.speculative.calls), (1, 1));
    }

    #[test]
    fn reduce_children_count_once_each() {
        let mut t = Trace::new();
        let maps: Vec<_> = (0..4)
            .map(|i| t.push(ev(EventKind::BaselineStep, Some(i), &[])))
            .collect();
        let r1 = t.push(ev(EventKind::Reduce, None, &maps[..2]));
        let r2 = t.push(ev(EventKind::Reduce, None, &maps[2..]));
        t.push(ev(EventKind::Reduce, None, &[r1, r2]));
        assert_eq!(t.bandwidth(), 2);
        assert_eq!(t.critical_path_rounds().unwrap(), 3);
    }

    #[test]
    fn document_round_trip_and_schema_check() {
        let mut t = Trace::new();
        let a = t.push(ev(EventKind::Seek, Some(0), &[]));
        t.push(ev(EventKind::Reason, None, &[a]));
        assert_eq!(Trace::from_json(&t.to_json()).unwrap(), t);
        let other = t.to_json().replace(TRACE_SCHEMA, "extagents.trace/v0");
        assert!(matches!(Trace::from_json(&other), Err(TraceError::Format(_))));
    }
}
