//! Scorers: the built-in lexical scorer and a client for external scorer
//! processes speaking the line-delimited JSON protocol in [`protocol`].
//!
//! Every scorer answers [`ScoreRequest`]s in one of three modes:
//!
//! * `consistency`: premise is the source document, hypothesis a candidate.
//! * `utility`: premise is a pseudo-reference, hypothesis a candidate.
//! * `quality`: premise is a gold reference (or source), hypothesis a candidate.
//!
//! Scores may be on any finite scale. Normalization happens downstream.

mod builtin;
mod external;
pub mod protocol;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::{source_overlap_score, LexicalScorer};
pub use external::{ProcessScorer, ProcessSpec};

/// Default per-batch timeout for external scorers.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Consistency,
    Utility,
    Quality,
}

impl ScoreMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::Consistency => "consistency",
            ScoreMode::Utility => "utility",
            ScoreMode::Quality => "quality",
        }
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "consistency" => Ok(ScoreMode::Consistency),
            "utility" => Ok(ScoreMode::Utility),
            "quality" => Ok(ScoreMode::Quality),
            other => Err(format!("unknown score mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreRequest {
    pub request_id: String,
    pub premise: String,
    pub hypothesis: String,
    pub mode: ScoreMode,
}

impl ScoreRequest {
    pub fn new(
        request_id: impl Into<String>,
        mode: ScoreMode,
        premise: impl Into<String>,
        hypothesis: impl Into<String>,
    ) -> Self {
        Self {
            request_id: request_id.into(),
            premise: premise.into(),
            hypothesis: hypothesis.into(),
            mode,
        }
    }
}

/// One answer. A per-request failure is data (`Err`), not a batch error.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreResponse {
    pub request_id: String,
    pub result: Result<f64, String>,
}

impl ScoreResponse {
    pub fn score(&self) -> Option<f64> {
        self.result.as_ref().ok().copied()
    }

    pub fn error(&self) -> Option<&str> {
        self.result.as_ref().err().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    BuiltinLexical,
    ExternalProcess,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScorerHandle {
    pub kind: ScorerKind,
    pub name: String,
    pub version: String,
    pub capabilities: BTreeSet<ScoreMode>,
}

impl ScorerHandle {
    pub fn supports(&self, mode: ScoreMode) -> bool {
        self.capabilities.contains(&mode)
    }

    /// `name@version`, as recorded in manifests.
    pub fn identity(&self) -> String {
        format!("{}@{}", self.name, self.version)
    }
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer `{scorer}` did not answer within {timeout:?}")]
    Timeout { scorer: String, timeout: Duration },
    #[error("scorer `{scorer}` exited mid-batch: {detail}")]
    Crashed { scorer: String, detail: String },
    #[error("scorer `{scorer}` violated the protocol: {detail}")]
    ProtocolViolation { scorer: String, detail: String },
    #[error("scorer `{scorer}` does not support mode `{mode}`")]
    UnsupportedMode { scorer: String, mode: ScoreMode },
    #[error("duplicate request_id `{0}` in batch")]
    DuplicateRequestId(String),
    #[error("failed to start scorer `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scorer `{0}` is unusable after an earlier failure")]
    Poisoned(String),
}

/// Anything that can answer score requests.
///
/// Implementations return exactly one response per request, in request order.
/// One value serves one request stream; callers must not interleave batches.
pub trait Scorer: Send {
    fn handle(&self) -> &ScorerHandle;

    fn score_batch_unchecked(
        &mut self,
        requests: &[ScoreRequest],
        timeout: Duration,
    ) -> Result<Vec<ScoreResponse>, ScorerError>;

    /// False once the scorer can no longer serve batches.
    fn is_usable(&self) -> bool {
        true
    }
}

/// Checks batch preconditions (supported modes, unique ids) and dispatches.
pub fn score_batch(
    scorer: &mut dyn Scorer,
    requests: &[ScoreRequest],
    timeout: Duration,
) -> Result<Vec<ScoreResponse>, ScorerError> {
    let mut ids = HashSet::with_capacity(requests.len());
    for req in requests {
        if !scorer.handle().supports(req.mode) {
            return Err(ScorerError::UnsupportedMode {
                scorer: scorer.handle().name.clone(),
                mode: req.mode,
            });
        }
        if !ids.insert(req.request_id.as_str()) {
            return Err(ScorerError::DuplicateRequestId(req.request_id.clone()));
        }
    }
    if requests.is_empty() {
        return Ok(Vec::new());
    }
    let responses = scorer.score_batch_unchecked(requests, timeout)?;
    debug_assert_eq!(responses.len(), requests.len());
    Ok(responses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexical::LexicalMetric;

    #[test]
    fn builtin_batch_delegates_to_overlap() {
        let mut s = LexicalScorer::new(LexicalMetric::Rouge1);
        let reqs = vec![
            ScoreRequest::new("a", ScoreMode::Consistency, "a b x y", "a b c d"),
            ScoreRequest::new("b", ScoreMode::Consistency, "the cat", "the cat"),
        ];
        let out = score_batch(&mut s, &reqs, DEFAULT_TIMEOUT).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].request_id, "a");
        assert_eq!(out[0].score(), Some(source_overlap_score("a b c d", "a b x y")));
        assert_eq!(out[0].score(), Some(0.5));
        assert_eq!(out[1].score(), Some(1.0));
    }

    #[test]
    fn builtin_is_repeatable() {
        let mut s = LexicalScorer::new(LexicalMetric::RougeL);
        let reqs: Vec<_> = (0..20)
            .map(|i| {
                ScoreRequest::new(
                    format!("r{i}"),
                    ScoreMode::Utility,
                    format!("w{} w{} x", i % 3, i % 5),
                    format!("w{} x w{}", i % 2, i % 7),
                )
            })
            .collect();
        let a = score_batch(&mut s, &reqs, DEFAULT_TIMEOUT).unwrap();
        let b = score_batch(&mut s, &reqs, DEFAULT_TIMEOUT).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_ids_rejected_before_dispatch() {
        let mut s = LexicalScorer::new(LexicalMetric::Rouge1);
        let reqs = vec![
            ScoreRequest::new("a", ScoreMode::Utility, "x", "x"),
            ScoreRequest::new("a", ScoreMode::Utility, "y", "y"),
        ];
        assert!(matches!(
            score_batch(&mut s, &reqs, DEFAULT_TIMEOUT),
            Err(ScorerError::DuplicateRequestId(id)) if id == "a"
        ));
    }

    #[test]
    fn mode_names_parse() {
        for m in [ScoreMode::Consistency, ScoreMode::Utility, ScoreMode::Quality] {
            assert_eq!(m.as_str().parse::<ScoreMode>().unwrap(), m);
        }
    }
}
