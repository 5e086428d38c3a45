use std::collections::BTreeSet;
use std::time::Duration;

use rayon::prelude::*;

use super::{ScoreMode, ScoreRequest, ScoreResponse, Scorer, ScorerError, ScorerHandle, ScorerKind};
use crate::lexical::{rouge_n, tokenize, LexicalMetric};

/// Clipped unigram precision of the candidate against the source: the share of
/// candidate tokens the source supports lexically. Empty candidate scores 0.
pub fn source_overlap_score(candidate: &str, source: &str) -> f64 {
    rouge_n(&tokenize(candidate), &tokenize(source), 1)
        .expect("unigram order")
        .precision
}

/// Dependency-free scorer. Consistency requests use [`source_overlap_score`];
/// utility and quality requests use the configured lexical metric's F1.
#[derive(Debug, Clone)]
pub struct LexicalScorer {
    metric: LexicalMetric,
    handle: ScorerHandle,
}

impl LexicalScorer {
    pub fn new(metric: LexicalMetric) -> Self {
        let capabilities: BTreeSet<_> = [ScoreMode::Consistency, ScoreMode::Utility, ScoreMode::Quality]
            .into_iter()
            .collect();
        Self {
            metric,
            handle: ScorerHandle {
                kind: ScorerKind::BuiltinLexical,
                name: format!("builtin_lexical:{}", metric.name()),
                version: env!("CARGO_PKG_VERSION").to_string(),
                capabilities,
            },
        }
    }

    pub fn metric(&self) -> LexicalMetric {
        self.metric
    }

    pub fn score_one(&self, req: &ScoreRequest) -> f64 {
        match req.mode {
            ScoreMode::Consistency => source_overlap_score(&req.hypothesis, &req.premise),
            ScoreMode::Utility | ScoreMode::Quality => self.metric.f1(&req.hypothesis, &req.premise),
        }
    }
}

impl Scorer for LexicalScorer {
    fn handle(&self) -> &ScorerHandle {
        &self.handle
    }

    fn score_batch_unchecked(
        &mut self,
        requests: &[ScoreRequest],
        _timeout: Duration,
    ) -> Result<Vec<ScoreResponse>, ScorerError> {
        // Cells are independent; collect keeps request order.
        Ok(requests
            .par_iter()
            .map(|r| ScoreResponse {
                request_id: r.request_id.clone(),
                result: Ok(self.score_one(r)),
            })
            .collect())
    }
}
