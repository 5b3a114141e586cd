//! Prompt templates with `{name}` placeholders.
//!
//! Rendering is a single pass of exact substitution: bound values are copied
//! verbatim and never re-scanned for placeholders.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::knowledge::{Language, TokenCounter};

pub const QUESTION: &str = "question";
pub const CONTEXT: &str = "context";
pub const ITERATION: &str = "iteration";
pub const EXTRACTED_INFORMATION: &str = "extracted_information";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template `{template}`: missing binding for placeholder `{{{placeholder}}}`")]
    MissingBinding { template: String, placeholder: String },
    #[error("template set {task}/{language} has no `{kind}` template")]
    MissingKind {
        task: String,
        language: String,
        kind: String,
    },
    #[error("reading template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    language: Language,
    body: String,
    segments: Vec<Segment>,
}

fn is_slot_char(c: u8) -> bool {
    c.is_ascii_lowercase() || c == b'_' || c.is_ascii_digit()
}

impl PromptTemplate {
    /// Parses `body`. A placeholder is `{` + `[a-z0-9_]+` + `}`; any other
    /// brace is literal text.
    pub fn new(name: impl Into<String>, language: Language, body: impl Into<String>) -> Result<Self, TemplateError> {
        let name = name.into();
        let body = body.into();
        let bytes = body.as_bytes();
        let mut segments = Vec::new();
        let mut lit_start = 0usize;
        let mut i = 0usize;
        while i < bytes.len() {
            if bytes[i] == b'{' {
                let mut j = i + 1;
                while j < bytes.len() && is_slot_char(bytes[j]) {
                    j += 1;
                }
                if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                    if lit_start < i {
                        segments.push(Segment::Literal(body[lit_start..i].to_string()));
                    }
                    segments.push(Segment::Slot(body[i + 1..j].to_string()));
                    i = j + 1;
                    lit_start = i;
                    continue;
                }
            }
            i += 1;
        }
        if lit_start < body.len() {
            segments.push(Segment::Literal(body[lit_start..].to_string()));
        }
        Ok(Self {
            name,
            language,
            body,
            segments,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for s in &self.segments {
            if let Segment::Slot(n) = s {
                if !out.contains(&n.as_str()) {
                    out.push(n);
                }
            }
        }
        out
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len() + bindings.value_bytes());
        for s in &self.segments {
            match s {
                Segment::Literal(l) => out.push_str(l),
                Segment::Slot(n) => {
                    let v = bindings.get(n).ok_or_else(|| TemplateError::MissingBinding {
                        template: self.name.clone(),
                        placeholder: n.clone(),
                    })?;
                    out.push_str(v);
                }
            }
        }
        Ok(out)
    }

    /// Upper bound on the tokens contributed by the literal text. Exact for
    /// the approximate counter up to rounding, which only overestimates.
    pub fn overhead_tokens(&self, counter: &TokenCounter) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Literal(l) => counter.count(l),
                Segment::Slot(_) => 0,
            })
            .sum()
    }

    /// Recovers the bindings from a string rendered with this template.
    ///
    /// Each placeholder takes the shortest text up to the next literal; the
    /// final literal is anchored at the end. Returns `None` when `text` does
    /// not have this template's shape.
    pub fn match_rendered<'t>(&self, text: &'t str) -> Option<HashMap<String, &'t str>> {
        let mut out = HashMap::new();
        let mut pos = 0usize;
        let segs = &self.segments;
        let mut i = 0usize;
        while i < segs.len() {
            match &segs[i] {
                Segment::Literal(l) => {
                    if !text[pos..].starts_with(l.as_str()) {
                        return None;
                    }
                    pos += l.len();
                    i += 1;
                }
                Segment::Slot(name) => {
                    let end = match segs.get(i + 1) {
                        None => text.len(),
                        Some(Segment::Literal(next)) => {
                            if i + 2 == segs.len() {
                                // trailing literal: anchor at the end
                                if !text.ends_with(next.as_str()) || text.len() - next.len() < pos {
                                    return None;
                                }
                                text.len() - next.len()
                            } else {
                                pos + text[pos..].find(next.as_str())?
                            }
                        }
                        // adjacent slots are ambiguous; give the first one nothing
                        Some(Segment::Slot(_)) => pos,
                    };
                    let value = &text[pos..end];
                    if let Some(prev) = out.insert(name.clone(), value) {
                        if prev != value {
                            return None;
                        }
                    }
                    pos = end;
                    i += 1;
                }
            }
        }
        (pos == text.len()).then_some(out)
    }
}

/// Placeholder values for [`PromptTemplate::render`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<String>) -> Self {
        self.0.insert(name.to_string(), value.into());
        self
    }

    pub fn set(&mut self, name: &str, value: impl Into<String>) {
        self.0.insert(name.to_string(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    fn value_bytes(&self) -> usize {
        self.0.values().map(String::len).sum()
    }
}

/// Free-function form of [`PromptTemplate::render`].
pub fn render(template: &PromptTemplate, bindings: &Bindings) -> Result<String, TemplateError> {
    template.render(bindings)
}

/// The role a template plays in an orchestration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// Seeking agent, first timestep.
    SeekFirst,
    /// Seeking agent, later timesteps, with prior messages.
    SeekUpdate,
    /// Relevance rating of one message.
    Rate,
    /// Reasoning with the answerability gate.
    ReasonOpen,
    /// Terminal reasoning: answer unconditionally.
    ReasonForced,
    /// One worker of a sequential chain.
    ChainStep,
    /// Intermediate reduce of a map-reduce tree.
    Reduce,
    /// Whole (truncated) context straight to the model.
    Direct,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 8] = [
        TemplateKind::SeekFirst,
        TemplateKind::SeekUpdate,
        TemplateKind::Rate,
        TemplateKind::ReasonOpen,
        TemplateKind::ReasonForced,
        TemplateKind::ChainStep,
        TemplateKind::Reduce,
        TemplateKind::Direct,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            TemplateKind::SeekFirst => "seek_first",
            TemplateKind::SeekUpdate => "seek_update",
            TemplateKind::Rate => "rate",
            TemplateKind::ReasonOpen => "reason_open",
            TemplateKind::ReasonForced => "reason_forced",
            TemplateKind::ChainStep => "chain_step",
            TemplateKind::Reduce => "reduce",
            TemplateKind::Direct => "direct",
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

/// Template family: attached long documents or retrieved open-domain pieces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    LongDocument,
    OpenDomain,
}

impl TaskFamily {
    pub fn dir_name(self) -> &'static str {
        match self {
            TaskFamily::LongDocument => "long_document",
            TaskFamily::OpenDomain => "open_domain",
        }
    }
}

macro_rules! builtin {
    ($task:literal, $lang:literal) => {
        [
            include_str!(concat!("../../templates/", $task, "/", $lang, "/seek_first.txt")),
            include_str!(concat!("../../templates/", $task, "/", $lang, "/seek_update.txt")),
            include_str!(concat!("../../templates/", $task, "/", $lang, "/rate.txt")),
            include_str!(concat!("../../templates/", $task, "/", $lang, "/reason_open.txt")),
            include_str!(concat!("../../templates/", $task, "/", $lang, "/reason_forced.txt")),
            include_str!(concat!("../../templates/", $task, "/", $lang, "/chain_step.txt")),
            include_str!(concat!("../../templates/", $task, "/", $lang, "/reduce.txt")),
            include_str!(concat!("../../templates/", $task, "/", $lang, "/direct.txt")),
        ]
    };
}

fn builtin_bodies(task: TaskFamily, lang: Language) -> [&'static str; 8] {
    match (task, lang) {
        (TaskFamily::LongDocument, Language::En) => builtin!("long_document", "en"),
        (TaskFamily::LongDocument, Language::Zh) => builtin!("long_document", "zh"),
        (TaskFamily::OpenDomain, Language::En) => builtin!("open_domain", "en"),
        (TaskFamily::OpenDomain, Language::Zh) => builtin!("open_domain", "zh"),
    }
}

fn strip_final_newline(s: &str) -> &str {
    s.strip_suffix("\r\n").or_else(|| s.strip_suffix('\n')).unwrap_or(s)
}

/// All templates for one (task, language) pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateSet {
    task: TaskFamily,
    language: Language,
    templates: BTreeMap<TemplateKind, PromptTemplate>,
}

impl TemplateSet {
    pub fn builtin(task: TaskFamily, language: Language) -> Self {
        let templates = TemplateKind::ALL
            .into_iter()
            .zip(builtin_bodies(task, language))
            .map(|(kind, body)| {
                let name = format!("{}/{}/{}", task.dir_name(), language, kind);
                let t =
                    PromptTemplate::new(name, language, strip_final_newline(body)).expect("builtin templates parse");
                (kind, t)
            })
            .collect();
        Self {
            task,
            language,
            templates,
        }
    }

    /// Loads `<dir>/<task>/<lang>/<kind>.txt`; kinds without a file keep the
    /// built-in template.
    pub fn load_dir(dir: &Path, task: TaskFamily, language: Language) -> Result<Self, TemplateError> {
        let mut set = Self::builtin(task, language);
        let base = dir.join(task.dir_name()).join(language.as_str());
        for kind in TemplateKind::ALL {
            let path = base.join(format!("{}.txt", kind.file_stem()));
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let name = format!("{}/{}/{}", task.dir_name(), language, kind);
            set.templates
                .insert(kind, PromptTemplate::new(name, language, strip_final_newline(&body))?);
        }
        Ok(set)
    }

    pub fn task(&self) -> TaskFamily {
        self.task
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn get(&self, kind: TemplateKind) -> &PromptTemplate {
        &self.templates[&kind]
    }

    pub fn iter(&self) -> impl Iterator<Item = (TemplateKind, &PromptTemplate)> {
        self.templates.iter().map(|(k, t)| (*k, t))
    }
}

/// Every template set an engine may use, keyed by task and language.
#[derive(Clone, Debug)]
pub struct TemplateLibrary {
    sets: BTreeMap<(TaskFamily, Language), TemplateSet>,
}

impl Default for TemplateLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateLibrary {
    pub fn builtin() -> Self {
        let mut sets = BTreeMap::new();
        for task in [TaskFamily::LongDocument, TaskFamily::OpenDomain] {
            for lang in [Language::En, Language::Zh] {
                sets.insert((task, lang), TemplateSet::builtin(task, lang));
            }
        }
        Self { sets }
    }

    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut sets = BTreeMap::new();
        for task in [TaskFamily::LongDocument, TaskFamily::OpenDomain] {
            for lang in [Language::En, Language::Zh] {
                sets.insert((task, lang), TemplateSet::load_dir(dir, task, lang)?);
            }
        }
        Ok(Self { sets })
    }

    pub fn get(&self, task: TaskFamily, language: Language) -> &TemplateSet {
        &self.sets[&(task, language)]
    }

    pub fn sets(&self) -> impl Iterator<Item = &TemplateSet> {
        self.sets.values()
    }
}

/// Text bound to `{iteration}`: an English ordinal or a bare numeral for Chinese.
pub fn iteration_label(iteration: usize, language: Language) -> String {
    match language {
        Language::Zh => iteration.to_string(),
        Language::En => {
            let suffix = match (iteration % 10, iteration % 100) {
                (_, 11..=13) => "th",
                (1, _) => "st",
                (2, _) => "nd",
                (3, _) => "rd",
                _ => "th",
            };
            format!("{iteration}{suffix}")
        }
    }
}
