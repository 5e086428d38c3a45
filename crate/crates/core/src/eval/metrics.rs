//! Evaluation metrics over candidates and the per-candidate metric table.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::config::RerankConfig;
use crate::lexical::LexicalMetric;
use crate::pipeline::{map_ordered, ScorerPool};
use crate::pool::{CandidatePool, Corpus};
use crate::scorer::{score_batch, source_overlap_score, ScoreMode, ScoreRequest, DEFAULT_TIMEOUT};

/// What a metric compares the candidate against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Reference,
    Source,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Lexical(LexicalMetric),
    SourceOverlap,
    External(String),
}

/// A named metric with its comparison target, group and direction.
///
/// Textual forms: `rouge_1`, `rouge_2`, `rouge_l` (against the gold
/// reference), `source_overlap` (against the source), `external:<name>`
/// (against the gold reference) and `external:<name>@source`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub kind: MetricKind,
    pub against: Target,
    pub group: String,
    pub higher_is_better: bool,
}

pub const QUALITY_GROUP: &str = "quality";
pub const FACTUALITY_GROUP: &str = "factuality";

impl MetricSpec {
    pub fn lexical(metric: LexicalMetric) -> Self {
        Self {
            name: metric.name().to_string(),
            kind: MetricKind::Lexical(metric),
            against: Target::Reference,
            group: QUALITY_GROUP.into(),
            higher_is_better: true,
        }
    }

    pub fn source_overlap() -> Self {
        Self {
            name: "source_overlap".into(),
            kind: MetricKind::SourceOverlap,
            against: Target::Source,
            group: FACTUALITY_GROUP.into(),
            higher_is_better: true,
        }
    }

    pub fn external(name: impl Into<String>, against: Target) -> Self {
        let name = name.into();
        let (label, group) = match against {
            Target::Reference => (format!("external:{name}"), QUALITY_GROUP),
            Target::Source => (format!("external:{name}@source"), FACTUALITY_GROUP),
        };
        Self {
            name: label,
            kind: MetricKind::External(name),
            against,
            group: group.into(),
            higher_is_better: true,
        }
    }

    pub fn in_group(mut self, group: impl Into<String>) -> Self {
        self.group = group.into();
        self
    }

    pub fn lower_is_better(mut self) -> Self {
        self.higher_is_better = false;
        self
    }

    /// rouge_1, rouge_2, rouge_l and source_overlap.
    pub fn defaults() -> Vec<MetricSpec> {
        vec![
            Self::lexical(LexicalMetric::Rouge1),
            Self::lexical(LexicalMetric::Rouge2),
            Self::lexical(LexicalMetric::RougeL),
            Self::source_overlap(),
        ]
    }

    /// Parses a comma-separated metric list.
    pub fn parse_list(s: &str) -> Result<Vec<MetricSpec>, EvalError> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl FromStr for MetricSpec {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "source_overlap" {
            return Ok(Self::source_overlap());
        }
        if let Some(rest) = s.strip_prefix("external:") {
            let (name, against) = match rest.strip_suffix("@source") {
                Some(n) => (n, Target::Source),
                None => (rest, Target::Reference),
            };
            if name.is_empty() {
                return Err(EvalError::UnknownMetric(s.to_string()));
            }
            return Ok(Self::external(name, against));
        }
        s.parse::<LexicalMetric>()
            .map(Self::lexical)
            .map_err(|_| EvalError::UnknownMetric(s.to_string()))
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Computes metric values for candidates, reaching external scorers through
/// shared scorer pools.
#[derive(Debug, Clone)]
pub struct MetricEvaluator {
    specs: Vec<MetricSpec>,
    external: BTreeMap<String, Arc<ScorerPool>>,
    timeout: Duration,
}

impl MetricEvaluator {
    /// Evaluator for metrics that need no external process.
    pub fn builtin(specs: Vec<MetricSpec>) -> Result<Self, EvalError> {
        if let Some(s) = specs.iter().find(|s| matches!(s.kind, MetricKind::External(_))) {
            return Err(EvalError::Invalid(format!(
                "metric `{}` needs an external scorer",
                s.name
            )));
        }
        Ok(Self {
            specs,
            external: BTreeMap::new(),
            timeout: DEFAULT_TIMEOUT,
        })
    }

    /// Resolves external metrics through the configuration's scorer table.
    pub fn from_config(specs: Vec<MetricSpec>, config: &RerankConfig, workers: usize) -> Result<Self, EvalError> {
        let mut external = BTreeMap::new();
        for s in &specs {
            if let MetricKind::External(name) = &s.kind {
                if !external.contains_key(name) {
                    let spec = config
                        .resolve_external(name)
                        .map_err(|e| EvalError::Invalid(e.to_string()))?;
                    external.insert(
                        name.clone(),
                        Arc::new(ScorerPool::process(spec, workers, config.timeout())),
                    );
                }
            }
        }
        Ok(Self {
            specs,
            external,
            timeout: config.timeout(),
        })
    }

    pub fn with_external(mut self, name: impl Into<String>, pool: Arc<ScorerPool>) -> Self {
        self.external.insert(name.into(), pool);
        self
    }

    pub fn specs(&self) -> &[MetricSpec] {
        &self.specs
    }

    fn target<'a>(pool: &'a CandidatePool, spec: &MetricSpec) -> Result<&'a str, EvalError> {
        match spec.against {
            Target::Source => Ok(&pool.source),
            Target::Reference => pool
                .gold_reference
                .as_deref()
                .ok_or_else(|| EvalError::MissingGoldReference {
                    pool: pool.id.clone(),
                    metric: spec.name.clone(),
                }),
        }
    }

    /// Checks that every reference-based metric has a gold reference in every pool.
    pub fn check_corpus(&self, corpus: &Corpus) -> Result<(), EvalError> {
        for pool in corpus.pools() {
            for spec in &self.specs {
                Self::target(pool, spec)?;
            }
        }
        Ok(())
    }

    /// Value of metric `m` for every candidate of `pool`.
    pub fn score_candidates(&self, pool: &CandidatePool, m: usize) -> Result<Vec<f64>, EvalError> {
        let spec = &self.specs[m];
        let target = Self::target(pool, spec)?;
        match &spec.kind {
            MetricKind::Lexical(metric) => Ok(pool.candidates.iter().map(|c| metric.f1(c, target)).collect()),
            MetricKind::SourceOverlap => Ok(pool
                .candidates
                .iter()
                .map(|c| source_overlap_score(c, target))
                .collect()),
            MetricKind::External(name) => {
                let scorers = self
                    .external
                    .get(name)
                    .ok_or_else(|| EvalError::Invalid(format!("no scorer registered for `{name}`")))?;
                let requests: Vec<ScoreRequest> = pool
                    .candidates
                    .iter()
                    .enumerate()
                    .map(|(i, c)| ScoreRequest::new(format!("q:{m}:{i}"), ScoreMode::Quality, target, c.clone()))
                    .collect();
                let responses = scorers.with(|s| score_batch(s, &requests, self.timeout))??;
                responses
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| {
                        r.result.map_err(|error| EvalError::MetricFailed {
                            pool: pool.id.clone(),
                            metric: spec.name.clone(),
                            candidate: i,
                            error,
                        })
                    })
                    .collect()
            }
        }
    }

    /// Metric values for every pool, metric and candidate.
    pub fn table(&self, corpus: &Corpus, workers: usize) -> Result<MetricTable, EvalError> {
        self.check_corpus(corpus)?;
        let values = map_ordered(workers, corpus.pools(), |pool| {
            (0..self.specs.len())
                .map(|m| self.score_candidates(pool, m))
                .collect::<Result<Vec<_>, EvalError>>()
        })?;
        Ok(MetricTable {
            specs: self.specs.clone(),
            pool_ids: corpus.pools().iter().map(|p| p.id.clone()).collect(),
            values,
        })
    }
}

/// `values[pool][metric][candidate]`.
///
/// Built on a corpus whose candidate lists are prefixes of any corpus it is
/// later used with, so candidate indices stay valid after truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub specs: Vec<MetricSpec>,
    pub pool_ids: Vec<String>,
    pub values: Vec<Vec<Vec<f64>>>,
}

impl MetricTable {
    pub fn metric_index(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn value(&self, pool: usize, metric: usize, candidate: usize) -> f64 {
        self.values[pool][metric][candidate]
    }

    pub fn candidates(&self, pool: usize, metric: usize) -> &[f64] {
        &self.values[pool][metric]
    }
}
