//! Repeated runs over a dataset and their aggregate report.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{best_f1, EvalError};
use crate::backend::Cost;
use crate::knowledge::Sample;
use crate::orchestrator::{Engine, Method, ResultRecord};
use crate::reason::OutcomeStatus;

pub const REPORT_SCHEMA: &str = "extagents.report/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub run: usize,
    pub sample_id: String,
    pub prediction: String,
    /// Absent when the run failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeStatus>,
    pub cost: Cost,
    pub calls: u64,
    pub critical_path_rounds: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    /// Mean F1 over the samples that did not fail.
    pub mean_f1: f64,
    pub scored: usize,
    pub failures: usize,
    pub cost: Cost,
    pub calls: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub method: Method,
    pub rows: Vec<EvalRow>,
    pub runs: Vec<RunSummary>,
    /// Median of the per-run mean F1.
    pub median_f1: f64,
}

impl EvalReport {
    /// Recomputes the run summaries from the rows.
    pub fn summarize(rows: &[EvalRow], runs: usize, base_seed: u64) -> (Vec<RunSummary>, f64) {
        let summaries: Vec<RunSummary> = (0..runs)
            .map(|r| {
                let mine: Vec<&EvalRow> = rows.iter().filter(|x| x.run == r).collect();
                let scores: Vec<f64> = mine.iter().filter_map(|x| x.f1).collect();
                RunSummary {
                    run: r,
                    seed: base_seed + r as u64,
                    mean_f1: if scores.is_empty() {
                        0.0
                    } else {
                        scores.iter().sum::<f64>() / scores.len() as f64
                    },
                    scored: scores.len(),
                    failures: mine.len() - scores.len(),
                    cost: mine.iter().map(|x| x.cost).sum(),
                    calls: mine.iter().map(|x| x.calls).sum(),
                }
            })
            .collect();
        let median = median(summaries.iter().map(|s| s.mean_f1).collect());
        (summaries, median)
    }

    /// Rows as JSON lines followed by one summary line.
    pub fn write_lines(&self, mut out: impl Write) -> std::io::Result<()> {
        for row in &self.rows {
            let mut v = serde_json::to_value(row)?;
            v["schema"] = REPORT_SCHEMA.into();
            v["kind"] = "row".into();
            serde_json::to_writer(&mut out, &v)?;
            out.write_all(b"\n")?;
        }
        let summary = serde_json::json!({
            "schema": REPORT_SCHEMA,
            "kind": "summary",
            "method": self.method,
            "runs": self.runs,
            "median_f1": self.median_f1,
        });
        serde_json::to_writer(&mut out, &summary)?;
        out.write_all(b"\n")?;
        out.flush()
    }
}

/// Median; the mean of the two middle values for even counts.
pub fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

/// Runs every sample once, in parallel on the engine's pool. Records are in
/// sample order.
pub fn run_samples(engine: &Engine, samples: &[Sample], with_trace: bool) -> Vec<(ResultRecord, Option<f64>)> {
    engine.install(|| {
        samples
            .par_iter()
            .map(|s| match engine.run_sample(s) {
                Ok(r) => {
                    let f1 = best_f1(&r.answer, &s.gold_answers, s.language);
                    (
                        ResultRecord::from_result(&s.id, &s.question, &r, Some(f1), with_trace),
                        Some(f1),
                    )
                }
                Err(e) => {
                    log::warn!("sample {}: {e}", s.id);
                    let rec = ResultRecord::from_error(
                        &s.id,
                        &s.question,
                        engine.config().method,
                        &e,
                        &engine.config().cost_model,
                        with_trace,
                    );
                    (rec, None)
                }
            })
            .collect()
    })
}

/// Runs the dataset `runs` times and reports per-run means and their median.
pub fn evaluate(engine: &Engine, samples: &[Sample], runs: usize) -> Result<EvalReport, EvalError> {
    if runs == 0 {
        return Err(EvalError::Config("runs must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(samples.len() * runs);
    for run in 0..runs {
        for (rec, f1) in run_samples(engine, samples, false) {
            rows.push(EvalRow {
                run,
                sample_id: rec.sample_id,
                prediction: rec.answer,
                f1,
                outcome: rec.outcome,
                cost: rec.totals.cost,
                calls: rec.totals.calls,
                critical_path_rounds: rec.totals.critical_path_rounds,
                error: rec.error,
            });
        }
    }
    let (summaries, median_f1) = EvalReport::summarize(&rows, runs, engine.config().seed);
    Ok(EvalReport {
        schema: REPORT_SCHEMA.into(),
        method: engine.config().method,
        rows,
        runs: summaries,
        median_f1,
    })
}
