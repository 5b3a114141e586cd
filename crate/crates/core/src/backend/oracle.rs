//! Deterministic scripted backend.
//!
//! A world lists atomic facts and questions. Knowledge text carries facts as
//! `[[fact:<id>]]` markers; the oracle recovers the template bindings from a
//! prompt and answers from the facts it can see:
//!
//! * seeking prompts list the facts found in the chunk (minus those already
//!   extracted, for update prompts), trimmed to the message budget by dropping
//!   the least salient facts first;
//! * rating prompts reply `Score: v` with v the rounded percentage of the
//!   question's required facts present in the message;
//! * open reasoning prompts answer when every required fact is present and
//!   reply `NO ANSWER` otherwise; forced and direct prompts fall back to the
//!   question's guess.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::template::{CONTEXT, EXTRACTED_INFORMATION, QUESTION};
use super::{
    BackendConfig, BackendError, Completion, CompletionBackend, CompletionUsage, TemplateKind, TemplateLibrary,
    NO_ANSWER, NO_INFORMATION,
};
use crate::knowledge::TokenCounter;

pub const WORLD_SCHEMA: &str = "extagents.world/v1";
const MARKER_OPEN: &str = "[[fact:";
const MARKER_CLOSE: &str = "]]";

/// The marker that embeds fact `id` in text.
pub fn fact_marker(id: &str) -> String {
    format!("{MARKER_OPEN}{id}{MARKER_CLOSE}")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub id: String,
    pub text: String,
    /// Higher survives budget trimming longer.
    #[serde(default)]
    pub salience: u32,
}

impl Fact {
    /// Marker plus text, as the fact appears in knowledge and in replies.
    pub fn render(&self) -> String {
        format!("{} {}", fact_marker(&self.id), self.text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldQuestion {
    pub question: String,
    pub required: Vec<String>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guess: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct World {
    #[serde(default = "world_schema")]
    pub schema: String,
    pub facts: Vec<Fact>,
    pub questions: Vec<WorldQuestion>,
}

fn world_schema() -> String {
    WORLD_SCHEMA.to_string()
}

pub const DEFAULT_GUESS: &str = "unknown";

impl World {
    pub fn new(facts: Vec<Fact>, questions: Vec<WorldQuestion>) -> Self {
        Self {
            schema: world_schema(),
            facts,
            questions,
        }
    }

    pub fn fact(&self, id: &str) -> Option<&Fact> {
        self.facts.iter().find(|f| f.id == id)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.schema != WORLD_SCHEMA {
            return Err(BackendError::Config(format!(
                "world schema `{}` is not supported (expected {WORLD_SCHEMA})",
                self.schema
            )));
        }
        let mut ids = HashSet::new();
        for f in &self.facts {
            if f.id.is_empty() || f.id.contains(MARKER_CLOSE) {
                return Err(BackendError::Config(format!("invalid fact id `{}`", f.id)));
            }
            if !ids.insert(f.id.as_str()) {
                return Err(BackendError::Config(format!("duplicate fact id `{}`", f.id)));
            }
        }
        let mut qs = HashSet::new();
        for q in &self.questions {
            if !qs.insert(q.question.trim()) {
                return Err(BackendError::Config(format!("duplicate question `{}`", q.question)));
            }
            if let Some(r) = q.required.iter().find(|r| !ids.contains(r.as_str())) {
                return Err(BackendError::Config(format!(
                    "question `{}` requires unknown fact `{r}`",
                    q.question
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let w: World = serde_json::from_str(text).map_err(|e| BackendError::Config(format!("world file: {e}")))?;
        w.validate()?;
        Ok(w)
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("reading world {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn merge(&mut self, other: World) {
        self.facts.extend(other.facts);
        self.questions.extend(other.questions);
    }
}

/// Modeled call latency: `base + per_ktok * k + per_ktok2 * k^2` microseconds
/// for `k` thousand tokens of input plus output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub base_us: u64,
    pub per_ktok_us: u64,
    pub per_ktok2_us: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            base_us: 200_000,
            per_ktok_us: 2_000,
            per_ktok2_us: 20,
        }
    }
}

impl LatencyModel {
    pub fn micros(&self, tokens: u64) -> u64 {
        let t = u128::from(tokens);
        let v = u128::from(self.base_us)
            + u128::from(self.per_ktok_us) * t / 1000
            + u128::from(self.per_ktok2_us) * t * t / 1_000_000;
        v.min(u128::from(u64::MAX)) as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Largest reply (in tokens) for seeking, chain and reduce prompts.
    pub message_budget: usize,
    /// When set, reasoning and direct prompts only see this many leading
    /// tokens of their knowledge binding.
    pub reading_budget: Option<usize>,
    pub latency: LatencyModel,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            message_budget: 256,
            reading_budget: None,
            latency: LatencyModel::default(),
        }
    }
}

pub struct OracleBackend {
    world: World,
    by_id: HashMap<String, usize>,
    by_question: HashMap<String, usize>,
    templates: TemplateLibrary,
    config: OracleConfig,
}

impl OracleBackend {
    pub fn new(world: World, templates: TemplateLibrary, config: OracleConfig) -> Result<Self, BackendError> {
        world.validate()?;
        let by_id = world.facts.iter().enumerate().map(|(i, f)| (f.id.clone(), i)).collect();
        let by_question = world
            .questions
            .iter()
            .enumerate()
            .map(|(i, q)| (q.question.trim().to_string(), i))
            .collect();
        Ok(Self {
            world,
            by_id,
            by_question,
            templates,
            config,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    /// Known fact indices in order of first appearance.
    pub fn facts_in(&self, text: &str) -> Vec<usize> {
        let mut out = Vec::new();
        let mut rest = text;
        while let Some(at) = rest.find(MARKER_OPEN) {
            let after = &rest[at + MARKER_OPEN.len()..];
            let Some(end) = after.find(MARKER_CLOSE) else { break };
            if let Some(&i) = self.by_id.get(&after[..end]) {
                if !out.contains(&i) {
                    out.push(i);
                }
            }
            rest = &after[end + MARKER_CLOSE.len()..];
        }
        out
    }

    fn classify<'p>(&self, prompt: &'p str) -> Option<(TemplateKind, HashMap<String, &'p str>)> {
        self.templates
            .sets()
            .flat_map(|s| s.iter())
            .find_map(|(kind, t)| t.match_rendered(prompt).map(|b| (kind, b)))
    }

    fn render_facts(&self, facts: &[usize]) -> String {
        facts
            .iter()
            .map(|&i| self.world.facts[i].render())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Drops least-salient facts (latest first among equals) until the
    /// rendered message fits the budget.
    fn trim(&self, mut facts: Vec<usize>, counter: &TokenCounter) -> Vec<usize> {
        while !facts.is_empty() && counter.count(&self.render_facts(&facts)) > self.config.message_budget {
            let (pos, _) = facts
                .iter()
                .enumerate()
                .min_by_key(|&(p, &i)| (self.world.facts[i].salience, std::cmp::Reverse(p)))
                .expect("non-empty");
            facts.remove(pos);
        }
        facts
    }

    fn message(&self, facts: Vec<usize>, counter: &TokenCounter) -> String {
        let kept = self.trim(facts, counter);
        if kept.is_empty() {
            NO_INFORMATION.to_string()
        } else {
            self.render_facts(&kept)
        }
    }

    fn read<'t>(&self, text: &'t str, counter: &TokenCounter) -> &'t str {
        match self.config.reading_budget {
            Some(b) => &text[..counter.prefix_within(text, b)],
            None => text,
        }
    }

    fn required(&self, q: &WorldQuestion) -> Vec<usize> {
        q.required.iter().map(|r| self.by_id[r]).collect()
    }

    /// The oracle's reply to `prompt`.
    pub fn reply(&self, prompt: &str, counter: &TokenCounter) -> Result<String, BackendError> {
        let (kind, b) = self
            .classify(prompt)
            .ok_or_else(|| BackendError::Oracle("prompt matches no known template".into()))?;
        let get = |name: &str| b.get(name).copied().unwrap_or("");
        let question = get(QUESTION);
        let q = self
            .by_question
            .get(question.trim())
            .map(|&i| &self.world.questions[i])
            .ok_or_else(|| BackendError::Oracle(format!("unknown question `{question}`")))?;
        let required = self.required(q);
        let covered = |text: &str| {
            let seen = self.facts_in(text);
            required.iter().all(|r| seen.contains(r))
        };
        let guess = || q.guess.clone().unwrap_or_else(|| DEFAULT_GUESS.to_string());

        let reply = match kind {
            TemplateKind::SeekFirst => self.message(self.facts_in(get(CONTEXT)), counter),
            TemplateKind::SeekUpdate => {
                let known = self.facts_in(get(EXTRACTED_INFORMATION));
                let fresh = self
                    .facts_in(get(CONTEXT))
                    .into_iter()
                    .filter(|f| !known.contains(f))
                    .collect();
                self.message(fresh, counter)
            }
            TemplateKind::ChainStep => {
                let mut facts = self.facts_in(get(EXTRACTED_INFORMATION));
                for f in self.facts_in(get(CONTEXT)) {
                    if !facts.contains(&f) {
                        facts.push(f);
                    }
                }
                self.message(facts, counter)
            }
            TemplateKind::Reduce => self.message(self.facts_in(get(EXTRACTED_INFORMATION)), counter),
            TemplateKind::Rate => {
                let seen = self.facts_in(get(EXTRACTED_INFORMATION));
                let score = if required.is_empty() {
                    0
                } else {
                    let hit = required.iter().filter(|r| seen.contains(r)).count();
                    (200 * hit + required.len()) / (2 * required.len())
                };
                format!("Score: {score}")
            }
            TemplateKind::ReasonOpen => {
                if covered(self.read(get(EXTRACTED_INFORMATION), counter)) {
                    q.answer.clone()
                } else {
                    NO_ANSWER.to_string()
                }
            }
            TemplateKind::ReasonForced => {
                if covered(self.read(get(EXTRACTED_INFORMATION), counter)) {
                    q.answer.clone()
                } else {
                    guess()
                }
            }
            TemplateKind::Direct => {
                if covered(self.read(get(CONTEXT), counter)) {
                    q.answer.clone()
                } else {
                    guess()
                }
            }
        };
        Ok(reply)
    }
}

impl CompletionBackend for OracleBackend {
    fn send(&self, _cfg: &BackendConfig, prompt: &str, counter: &TokenCounter) -> Result<Completion, BackendError> {
        let text = self.reply(prompt, counter)?;
        let usage = CompletionUsage::new(counter.count(prompt) as u64, counter.count(&text) as u64);
        Ok(Completion {
            elapsed_us: self.config.latency.micros(usage.total()),
            text,
            usage,
        })
    }
}
