//! One JSON line per evaluated sample.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Method, RunError, RunResult};
use crate::backend::CostModel;
use crate::reason::OutcomeStatus;
use crate::trace::{Totals, Trace};

pub const RESULT_SCHEMA: &str = "extagents.result/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema: String,
    pub sample_id: String,
    pub method: Method,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    pub chunks: usize,
    pub totals: Totals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn from_result(sample_id: &str, question: &str, result: &RunResult, f1: Option<f64>, with_trace: bool) -> Self {
        Self {
            schema: RESULT_SCHEMA.into(),
            sample_id: sample_id.into(),
            method: result.method,
            question: question.into(),
            answer: result.answer.clone(),
            outcome: Some(result.outcome.status),
            f1,
            chunks: result.chunks,
            totals: result.totals,
            trace: with_trace.then(|| result.trace.clone()),
            error: None,
        }
    }

    /// Record for a failed run; totals cover the partial trace.
    pub fn from_error(
        sample_id: &str,
        question: &str,
        method: Method,
        err: &RunError,
        cost_model: &CostModel,
        with_trace: bool,
    ) -> Self {
        let totals = err.partial_trace.totals(cost_model).unwrap_or_default();
        Self {
            schema: RESULT_SCHEMA.into(),
            sample_id: sample_id.into(),
            method,
            question: question.into(),
            answer: String::new(),
            outcome: None,
            f1: None,
            chunks: 0,
            totals,
            trace: with_trace.then(|| err.partial_trace.clone()),
            error: Some(err.to_string()),
        }
    }

    pub fn is_failure(&self) -> bool {
        self.error.is_some()
    }
}

pub fn write_results(mut out: impl Write, records: &[ResultRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_results(input: impl BufRead) -> Result<Vec<ResultRecord>, String> {
    let mut out = Vec::new();
    for (no, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ResultRecord = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", no + 1))?;
        if r.schema != RESULT_SCHEMA {
            return Err(format!("line {}: unsupported schema `{}`", no + 1, r.schema));
        }
        out.push(r);
    }
    Ok(out)
}
