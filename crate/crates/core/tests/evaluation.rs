use std::sync::Arc;

use extagents_core::backend::{BackendConfig, ModelClient, OracleBackend, OracleConfig, RoleBackends, TemplateLibrary};
use extagents_core::eval::{evaluate, filter_benchmark, FilterConfig, FilterDecision, REPORT_SCHEMA};
use extagents_core::knowledge::TokenCounter;
use extagents_core::reason::OutcomeStatus;
use extagents_core::synth::{Generator, Placement, Suite};
use extagents_core::{Engine, Method, RunConfig};

fn suite(solvable: usize, unsolvable: usize) -> Suite {
    let mut g = Generator::new(11);
    let mut cases = Vec::new();
    for i in 0..solvable {
        cases.push(g.document_case(&format!("ok{i}"), 16, &[Placement::required(2), Placement::required(9)]));
    }
    for i in 0..unsolvable {
        // The second fact lies past the end of the text.
        cases.push(g.document_case(
            &format!("no{i}"),
            16,
            &[Placement::required(2), Placement::required(40)],
        ));
    }
    Suite { cases }
}

fn engine(suite: &Suite) -> Engine {
    let cfg = RunConfig {
        method: Method::Extagents,
        chunk_size: 4 * 1024,
        role_backends: RoleBackends::uniform(BackendConfig::oracle(136 * 1024)),
        max_timesteps: 2,
        ..RunConfig::default()
    };
    Engine::with_oracle(cfg, suite.world()).unwrap()
}

#[test]
fn solvable_suite_scores_one() {
    let s = suite(5, 0);
    let report = evaluate(&engine(&s), &s.samples(), 1).unwrap();
    assert_eq!(report.median_f1, 1.0);
    assert!(report.rows.iter().all(|r| r.outcome == Some(OutcomeStatus::Answered)));
}

#[test]
fn one_unsolvable_in_ten() {
    let s = suite(9, 1);
    let report = evaluate(&engine(&s), &s.samples(), 1).unwrap();
    assert!((report.runs[0].mean_f1 - 0.9).abs() < 1e-12);
    let bad = report.rows.iter().find(|r| r.sample_id == "no0").unwrap();
    assert_eq!((bad.f1, bad.outcome), (Some(0.0), Some(OutcomeStatus::Forced)));
}

#[test]
fn repeated_runs_are_identical() {
    let s = suite(3, 1);
    let report = evaluate(&engine(&s), &s.samples(), 3).unwrap();
    assert_eq!(report.runs.len(), 3);
    let means: Vec<f64> = report.runs.iter().map(|r| r.mean_f1).collect();
    assert!(means.iter().all(|&m| m == means[0]));
    assert_eq!(report.median_f1, means[0]);
    let seeds: Vec<u64> = report.runs.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, [0, 1, 2]);
    for run in 1..3 {
        let a: Vec<_> = report
            .rows
            .iter()
            .filter(|r| r.run == 0)
            .map(|r| (&r.prediction, r.f1, r.cost))
            .collect();
        let b: Vec<_> = report
            .rows
            .iter()
            .filter(|r| r.run == run)
            .map(|r| (&r.prediction, r.f1, r.cost))
            .collect();
        assert_eq!(a, b);
    }
    let mut out = Vec::new();
    report.write_lines(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), report.rows.len() + 1);
    assert!(text.lines().all(|l| l.contains(REPORT_SCHEMA)));
}

#[test]
fn zero_runs_rejected() {
    let s = suite(1, 0);
    assert!(evaluate(&engine(&s), &s.samples(), 0).is_err());
}

fn judge(suite: &Suite, max_context: usize) -> ModelClient {
    let oracle = OracleBackend::new(suite.world(), TemplateLibrary::builtin(), OracleConfig::default()).unwrap();
    ModelClient::new(BackendConfig::oracle(max_context), Arc::new(oracle))
}

#[test]
fn filter_examples() {
    let mut g = Generator::new(5);
    let s = Suite {
        cases: vec![
            g.document_case("together", 32, &[Placement::required(9), Placement::required(10)]),
            g.document_case("apart", 64, &[Placement::required(1), Placement::required(51)]),
        ],
    };
    let out = filter_benchmark(
        &s.samples(),
        &FilterConfig::default(),
        &judge(&s, 136 * 1024),
        &TemplateLibrary::builtin(),
        |_| TokenCounter::default(),
    )
    .unwrap();
    assert_eq!(out.audit[0].decision, FilterDecision::Discarded);
    assert_eq!(out.audit[0].window_index, Some(1));
    assert_eq!(out.audit[0].judge_f1, Some(1.0));
    assert_eq!(out.audit[1].decision, FilterDecision::Retained);
    assert_eq!(out.retained.len(), 1);
    assert_eq!(out.retained[0].id, "apart");
}

#[test]
fn judge_failure_keeps_sample_as_undetermined() {
    let mut g = Generator::new(6);
    let s = Suite {
        cases: vec![g.document_case("tiny", 16, &[Placement::required(0), Placement::required(1)])],
    };
    // A judge whose context cannot hold one window.
    let out = filter_benchmark(
        &s.samples(),
        &FilterConfig::default(),
        &judge(&s, 1024),
        &TemplateLibrary::builtin(),
        |_| TokenCounter::default(),
    )
    .unwrap();
    assert_eq!(out.audit[0].decision, FilterDecision::Undetermined);
    assert!(out.audit[0].error.is_some());
    assert_eq!(out.retained.len(), 1);
}

#[test]
fn long_samples_skip_judging() {
    let mut g = Generator::new(7);
    let s = Suite {
        cases: vec![g.document_case("long", 20, &[Placement::required(0), Placement::required(1)])],
    };
    let cfg = FilterConfig {
        keep_over: 16 * 1024,
        ..FilterConfig::default()
    };
    let out = filter_benchmark(
        &s.samples(),
        &cfg,
        &judge(&s, 136 * 1024),
        &TemplateLibrary::builtin(),
        |_| TokenCounter::default(),
    )
    .unwrap();
    assert_eq!(out.audit[0].decision, FilterDecision::RetainedLong);
}

#[test]
fn half_stride_catches_straddling_pair() {
    let mut g = Generator::new(8);
    let s = Suite {
        cases: vec![g.document_case("straddle", 32, &[Placement::required(7), Placement::required(8)])],
    };
    let j = judge(&s, 136 * 1024);
    let plain = FilterConfig::default();
    let strided = FilterConfig {
        half_stride: true,
        ..FilterConfig::default()
    };
    let run = |cfg: &FilterConfig| {
        filter_benchmark(&s.samples(), cfg, &j, &TemplateLibrary::builtin(), |_| {
            TokenCounter::default()
        })
        .unwrap()
        .audit[0]
            .clone()
    };
    assert_eq!(run(&plain).decision, FilterDecision::Retained);
    let a = run(&strided);
    assert_eq!((a.decision, a.window_index), (FilterDecision::Discarded, Some(1)));
}
