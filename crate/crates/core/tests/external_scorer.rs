use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use sumrank::config::{ConsistencyChoice, RerankConfig, UtilityChoice};
use sumrank::lexical::LexicalMetric;
use sumrank::mbr::FailurePolicy;
use sumrank::pipeline::{PipelineError, Reranker, ScorerPool};
use sumrank::scorer::{
    score_batch, LexicalScorer, ProcessScorer, ProcessSpec, ScoreMode, ScoreRequest, Scorer, ScorerError, ScorerKind,
};
use sumrank::{CandidatePool, Corpus};

const HANDSHAKE: Duration = Duration::from_secs(10);
const BATCH: Duration = Duration::from_secs(10);

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sumrank-test-scorer")
}

fn spec(args: &[&str]) -> ProcessSpec {
    ProcessSpec::new(bin()).args(args.iter().copied())
}

fn spawn(args: &[&str]) -> ProcessScorer {
    ProcessScorer::spawn(&spec(args), HANDSHAKE).expect("test scorer starts")
}

fn requests(n: usize) -> Vec<ScoreRequest> {
    (0..n)
        .map(|i| {
            ScoreRequest::new(
                format!("r{i}"),
                if i % 2 == 0 {
                    ScoreMode::Utility
                } else {
                    ScoreMode::Consistency
                },
                format!("the cat {i} sat on the mat"),
                format!("a cat {} sat", i % 3),
            )
        })
        .collect()
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn handshake_reports_identity_and_modes() {
    let s = spawn(&["--name", "echo", "--version", "9.9", "--modes", "utility,quality"]);
    let h = s.handle();
    assert_eq!(h.kind, ScorerKind::ExternalProcess);
    assert_eq!(h.identity(), "echo@9.9");
    assert!(h.supports(ScoreMode::Utility));
    assert!(!h.supports(ScoreMode::Consistency));
    let status = s.shutdown(Duration::from_secs(5)).expect("exit status");
    assert!(status.success());
}

#[test]
fn unsupported_mode_rejected_before_sending() {
    let mut s = spawn(&["--modes", "utility"]);
    let reqs = vec![ScoreRequest::new("a", ScoreMode::Consistency, "x", "x")];
    assert!(matches!(
        score_batch(&mut s, &reqs, BATCH),
        Err(ScorerError::UnsupportedMode { .. })
    ));
    assert!(s.is_usable());
}

#[test]
fn scores_match_builtin_scorer() {
    let reqs = requests(40);
    let mut ext = spawn(&["--metric", "rouge_l"]);
    let mut builtin = LexicalScorer::new(LexicalMetric::RougeL);
    let a = score_batch(&mut ext, &reqs, BATCH).unwrap();
    let b = score_batch(&mut builtin, &reqs, BATCH).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reverse_order_responses_are_rematched() {
    let reqs = requests(64);
    let mut ext = spawn(&["--reverse-chunk", "16"]);
    let out = score_batch(&mut ext, &reqs, BATCH).unwrap();
    assert_eq!(out.len(), reqs.len());
    for (req, resp) in reqs.iter().zip(&out) {
        assert_eq!(req.request_id, resp.request_id);
    }
    let expected = score_batch(&mut LexicalScorer::new(LexicalMetric::Rouge1), &reqs, BATCH).unwrap();
    assert_eq!(out, expected);
    // A second batch on the same process still works.
    assert_eq!(score_batch(&mut ext, &reqs, BATCH).unwrap(), expected);
}

#[test]
fn error_responses_pass_through_as_data() {
    let reqs = vec![
        ScoreRequest::new("r0", ScoreMode::Utility, "a b", "a b"),
        ScoreRequest::new("r1", ScoreMode::Utility, "a b", "boom here"),
        ScoreRequest::new("r2", ScoreMode::Utility, "a b", "a"),
    ];
    let mut ext = spawn(&["--error-on", "boom"]);
    let out = score_batch(&mut ext, &reqs, BATCH).unwrap();
    assert_eq!(out[0].score(), Some(1.0));
    assert_eq!(out[1].error(), Some("oom"));
    assert!(out[2].score().is_some());
    assert!(ext.is_usable());
}

#[test]
fn crash_mid_batch_is_reported() {
    let mut ext = spawn(&["--crash-after", "3"]);
    let err = score_batch(&mut ext, &requests(8), BATCH).unwrap_err();
    assert!(matches!(err, ScorerError::Crashed { .. }), "{err:?}");
    assert!(!ext.is_usable());
    assert!(matches!(
        score_batch(&mut ext, &requests(2), BATCH),
        Err(ScorerError::Poisoned(_))
    ));
}

#[test]
fn silence_times_out() {
    let mut ext = spawn(&["--hang"]);
    let t = Instant::now();
    let err = score_batch(&mut ext, &requests(4), Duration::from_millis(300)).unwrap_err();
    assert!(matches!(err, ScorerError::Timeout { .. }), "{err:?}");
    assert!(t.elapsed() < Duration::from_secs(5));
}

#[test]
fn handshake_timeout() {
    let err = ProcessScorer::spawn(&spec(&["--silent-hello"]), Duration::from_millis(300)).unwrap_err();
    assert!(matches!(err, ScorerError::Timeout { .. }), "{err:?}");
}

#[test]
fn garbage_line_is_a_protocol_violation() {
    let mut ext = spawn(&["--garbage-after", "2"]);
    let err = score_batch(&mut ext, &requests(5), BATCH).unwrap_err();
    assert!(matches!(err, ScorerError::ProtocolViolation { .. }), "{err:?}");
}

#[test]
fn unknown_request_id_is_a_protocol_violation() {
    let mut ext = spawn(&["--unknown-id"]);
    let err = score_batch(&mut ext, &requests(3), BATCH).unwrap_err();
    match err {
        ScorerError::ProtocolViolation { detail, .. } => assert!(detail.contains("bogus")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn duplicate_response_is_a_protocol_violation() {
    let mut ext = spawn(&["--duplicate"]);
    let err = score_batch(&mut ext, &requests(3), BATCH).unwrap_err();
    assert!(matches!(err, ScorerError::ProtocolViolation { .. }), "{err:?}");
}

#[test]
fn missing_binary_is_a_spawn_error() {
    let err = ProcessScorer::spawn(&ProcessSpec::new("/nonexistent/scorer"), HANDSHAKE).unwrap_err();
    assert!(matches!(err, ScorerError::Spawn { .. }));
}

#[test]
fn large_batch_does_not_deadlock() {
    let reqs: Vec<ScoreRequest> = (0..3000)
        .map(|i| ScoreRequest::new(format!("r{i}"), ScoreMode::Utility, "x ".repeat(200), format!("x {i}")))
        .collect();
    let mut ext = spawn(&[]);
    assert_eq!(
        score_batch(&mut ext, &reqs, Duration::from_secs(60)).unwrap().len(),
        3000
    );
}

fn transcript_lines(path: &std::path::Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn host_transcript_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("transcript.txt");
    let rec_s = rec.to_str().unwrap();
    let mut ext = spawn(&[
        "--record",
        rec_s,
        "--name",
        "test-scorer",
        "--version",
        "0.0.0",
        "--error-on",
        "boom",
    ]);
    let reqs = vec![
        ScoreRequest::new("c:0", ScoreMode::Consistency, "The cat sat.", "the cat"),
        ScoreRequest::new("u:0:0", ScoreMode::Utility, "line one\nline \"two\"", "one two"),
        ScoreRequest::new("q:0:1", ScoreMode::Quality, "gold", "boom"),
    ];
    score_batch(&mut ext, &reqs, BATCH).unwrap();
    ext.shutdown(Duration::from_secs(5));
    assert_eq!(transcript_lines(&rec), transcript_lines(&data("transcript_golden.txt")));
}

fn pools() -> Corpus {
    let pools = (0..10)
        .map(|k| {
            CandidatePool::new(
                format!("p{k}"),
                format!("storm hits coast {k} residents evacuate homes"),
                vec![
                    format!("storm hits coast {k}"),
                    "residents evacuate".to_string(),
                    "markets rally on news".to_string(),
                    format!("coast {k} storm residents evacuate homes"),
                ],
                vec![format!("storm {k} coast"), "residents evacuate homes".to_string()],
            )
        })
        .collect();
    Corpus::from_pools(pools).unwrap()
}

fn external_config(args: &str) -> RerankConfig {
    let mut scorers = std::collections::BTreeMap::new();
    scorers.insert(
        "mock".to_string(),
        sumrank::config::ExternalScorerConfig {
            command: bin().to_string(),
            args: args.split_whitespace().map(str::to_string).collect(),
        },
    );
    RerankConfig {
        utility: UtilityChoice::External("mock".into()),
        consistency: ConsistencyChoice::External("mock".into()),
        scorers,
        scorer_timeout_secs: 20,
        ..RerankConfig::default()
    }
}

#[test]
fn external_pipeline_matches_builtin() {
    let c = pools();
    let builtin = Reranker::from_config(RerankConfig::default(), 2)
        .unwrap()
        .rerank_corpus(&c)
        .unwrap();
    for workers in [1, 3] {
        let ext = Reranker::from_config(external_config("--reverse-chunk 2"), workers)
            .unwrap()
            .rerank_corpus(&c)
            .unwrap();
        assert_eq!(ext.len(), builtin.len());
        for (a, b) in ext.iter().zip(&builtin) {
            assert_eq!(a.selected_index, b.selected_index);
            assert_eq!(a.table.s_fin, b.table.s_fin);
        }
    }
}

#[test]
fn exclude_policy_drops_failing_candidate() {
    let c = pools();
    let mut cfg = external_config("--error-on markets");
    cfg.failure_policy = FailurePolicy::ExcludeCandidate;
    let out = Reranker::from_config(cfg.clone(), 2)
        .unwrap()
        .rerank_corpus(&c)
        .unwrap();
    for r in &out {
        assert!(r.table.excluded.contains(&2));
        assert_ne!(r.selected_index, 2);
        assert!(r.table.s_fin[2].is_nan());
    }
    cfg.failure_policy = FailurePolicy::Abort;
    let err = Reranker::from_config(cfg, 2).unwrap().rerank_corpus(&c).unwrap_err();
    assert!(
        matches!(err, PipelineError::ConsistencyFailed { candidate: 2, .. }),
        "{err:?}"
    );
}

#[test]
fn scorer_pool_caps_processes_and_replaces_poisoned() {
    let pool = Arc::new(ScorerPool::process(spec(&["--crash-after", "0"]), 2, HANDSHAKE));
    let reqs = requests(2);
    for _ in 0..3 {
        let err = pool.with(|s| score_batch(s, &reqs, BATCH)).unwrap().unwrap_err();
        assert!(matches!(err, ScorerError::Crashed { .. }));
    }
    let good = ScorerPool::process(spec(&["--name", "ok", "--version", "1"]), 2, HANDSHAKE);
    assert_eq!(good.warm_up().unwrap(), "ok@1");
    assert_eq!(good.identity().as_deref(), Some("ok@1"));
}
