//! Benchmark filtering: drop samples that a single window of their context
//! already answers, keep long samples unconditionally.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{best_f1, EvalError};
use crate::backend::template::{CONTEXT, QUESTION};
use crate::backend::{Bindings, ModelClient, TaskFamily, TemplateKind, TemplateLibrary};
use crate::knowledge::{partition, Sample, SourceKind, TokenCounter};

pub const AUDIT_SCHEMA: &str = "extagents.audit/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Window size in tokens.
    pub window: usize,
    /// Samples longer than this are kept without judging.
    pub keep_over: usize,
    /// Judge F1 at or above which a window counts as answering.
    pub threshold: f64,
    /// Also judge windows starting at every half-window offset.
    pub half_stride: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            window: 8 * 1024,
            keep_over: 128 * 1024,
            threshold: 0.5,
            half_stride: false,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.window == 0 {
            return Err(EvalError::Config("window must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(EvalError::Config(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterDecision {
    /// Some window answered the question.
    Discarded,
    /// No window answered.
    Retained,
    /// Longer than `keep_over`; not judged.
    RetainedLong,
    /// The judge failed; kept.
    Undetermined,
}

impl FilterDecision {
    pub fn is_retained(self) -> bool {
        self != FilterDecision::Discarded
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub schema: String,
    pub sample_id: String,
    pub decision: FilterDecision,
    /// The convicting window for discarded samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_index: Option<usize>,
    /// Best judge F1 over the windows that were judged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_f1: Option<f64>,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct FilterOutcome {
    pub retained: Vec<Sample>,
    /// One entry per input sample, in input order.
    pub audit: Vec<AuditEntry>,
}

/// Window texts of `sample` in order.
pub fn windows(sample: &Sample, cfg: &FilterConfig, counter: &TokenCounter) -> Result<Vec<String>, EvalError> {
    let source = sample.to_source(counter)?;
    if !cfg.half_stride || cfg.window < 2 {
        return Ok(partition(&source, cfg.window, usize::MAX, counter)?
            .into_iter()
            .map(|c| c.text)
            .collect());
    }
    let halves: Vec<String> = partition(&source, cfg.window / 2, usize::MAX, counter)?
        .into_iter()
        .map(|c| c.text)
        .collect();
    if halves.len() < 2 {
        return Ok(halves);
    }
    Ok(halves.windows(2).map(|w| format!("{}{}", w[0], w[1])).collect())
}

fn judge_sample(
    sample: &Sample,
    cfg: &FilterConfig,
    judge: &ModelClient,
    templates: &TemplateLibrary,
    counter: &TokenCounter,
) -> AuditEntry {
    let entry = |decision, window_index, judge_f1, error| AuditEntry {
        schema: AUDIT_SCHEMA.into(),
        sample_id: sample.id.clone(),
        decision,
        window_index,
        judge_f1,
        threshold: cfg.threshold,
        error,
    };
    if sample.knowledge_tokens(counter) > cfg.keep_over {
        return entry(FilterDecision::RetainedLong, None, None, None);
    }
    let run = || -> Result<AuditEntry, EvalError> {
        let family = match sample.to_source(counter)?.kind() {
            SourceKind::LongDocument => TaskFamily::LongDocument,
            SourceKind::RetrievedCorpus => TaskFamily::OpenDomain,
        };
        let template = templates.get(family, sample.language).get(TemplateKind::Direct);
        let mut best: Option<f64> = None;
        for (w, text) in windows(sample, cfg, counter)?.iter().enumerate() {
            let prompt = template.render(
                &Bindings::new()
                    .with(QUESTION, sample.question.as_str())
                    .with(CONTEXT, text.as_str()),
            )?;
            let reply = judge.complete(&prompt, counter)?;
            let f1 = best_f1(&reply.text, &sample.gold_answers, sample.language);
            best = Some(best.map_or(f1, |b: f64| b.max(f1)));
            if f1 >= cfg.threshold {
                return Ok(entry(FilterDecision::Discarded, Some(w), Some(f1), None));
            }
        }
        Ok(entry(FilterDecision::Retained, None, best, None))
    };
    run().unwrap_or_else(|e| {
        log::warn!("sample {}: judge failed, keeping it: {e}", sample.id);
        entry(FilterDecision::Undetermined, None, None, Some(e.to_string()))
    })
}

/// Judges every sample window by window. Runs on the current rayon pool;
/// output order follows the input.
pub fn filter_benchmark(
    samples: &[Sample],
    cfg: &FilterConfig,
    judge: &ModelClient,
    templates: &TemplateLibrary,
    counter_for: impl Fn(&Sample) -> TokenCounter + Sync,
) -> Result<FilterOutcome, EvalError> {
    cfg.validate()?;
    let audit: Vec<AuditEntry> = samples
        .par_iter()
        .map(|s| judge_sample(s, cfg, judge, templates, &counter_for(s)))
        .collect();
    let retained = samples
        .iter()
        .zip(&audit)
        .filter(|(_, a)| a.decision.is_retained())
        .map(|(s, _)| s.clone())
        .collect();
    Ok(FilterOutcome { retained, audit })
}
