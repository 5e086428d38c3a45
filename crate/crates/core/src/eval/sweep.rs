//! Weight and subset sweeps.
//!
//! Each point reranks the corpus and averages each metric over pools. The
//! per-metric means are MinMax-normalized across points (flipped for
//! lower-is-better metrics so 1 is always best), averaged within metric groups,
//! and the group averages are averaged into an overall score per point.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{MetricEvaluator, MetricSpec, MetricTable};
use super::report::{evaluate_selections, render_grid};
use super::{minmax_normalize, ordered_mean, EvalError};
use crate::config::{label_for, ConsistencyChoice};
use crate::pipeline::{select_all, PoolScores, Reranker};
use crate::pool::{Corpus, PoolRole};

pub const SWEEP_WEIGHTS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const SWEEP_SUBSET_SIZES: [usize; 6] = [1, 4, 8, 16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Weight,
    CandidateCount,
    PseudoRefCount,
}

impl From<PoolRole> for SweepAxis {
    fn from(role: PoolRole) -> Self {
        match role {
            PoolRole::Candidates => SweepAxis::CandidateCount,
            PoolRole::PseudoReferences => SweepAxis::PseudoRefCount,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub points: Vec<f64>,
    pub labels: Vec<String>,
    pub metrics: Vec<String>,
    pub metric_groups: Vec<String>,
    pub higher_is_better: Vec<bool>,
    /// `means[point][metric]`.
    pub means: Vec<Vec<f64>>,
    pub normalized: Vec<Vec<f64>>,
    pub groups: Vec<String>,
    /// `group_averages[point][group]`.
    pub group_averages: Vec<Vec<f64>>,
    pub overall: Vec<f64>,
}

impl SweepReport {
    pub fn build(
        axis: SweepAxis,
        points: Vec<f64>,
        labels: Vec<String>,
        specs: &[MetricSpec],
        means: Vec<Vec<f64>>,
    ) -> Self {
        let mut normalized = minmax_normalize(&means);
        for row in &mut normalized {
            for (v, spec) in row.iter_mut().zip(specs) {
                if !spec.higher_is_better {
                    *v = 1.0 - *v;
                }
            }
        }
        let mut groups: Vec<String> = Vec::new();
        for s in specs {
            if !groups.contains(&s.group) {
                groups.push(s.group.clone());
            }
        }
        let group_averages: Vec<Vec<f64>> = normalized
            .iter()
            .map(|row| {
                groups
                    .iter()
                    .map(|g| {
                        let members: Vec<f64> = row
                            .iter()
                            .zip(specs)
                            .filter(|(_, s)| &s.group == g)
                            .map(|(v, _)| *v)
                            .collect();
                        ordered_mean(&members)
                    })
                    .collect()
            })
            .collect();
        let overall = group_averages
            .iter()
            .map(|row| if row.is_empty() { 0.5 } else { ordered_mean(row) })
            .collect();
        Self {
            axis,
            points,
            labels,
            metrics: specs.iter().map(|s| s.name.clone()).collect(),
            metric_groups: specs.iter().map(|s| s.group.clone()).collect(),
            higher_is_better: specs.iter().map(|s| s.higher_is_better).collect(),
            means,
            normalized,
            groups,
            group_averages,
            overall,
        }
    }

    /// Index of the point with the highest overall score (lowest index on ties).
    pub fn best_point(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &v) in self.overall.iter().enumerate() {
            if best.is_none_or(|b| v > self.overall[b]) {
                best = Some(i);
            }
        }
        best
    }

    /// Metric means (x100), then normalized group averages and overall.
    pub fn render(&self) -> String {
        let mut headers = self.metrics.clone();
        headers.extend(self.groups.iter().map(|g| format!("avg:{g}")));
        headers.push("overall".into());
        let rows: Vec<(String, Vec<f64>)> = self
            .labels
            .iter()
            .enumerate()
            .map(|(p, l)| {
                let mut v: Vec<f64> = self.means[p].iter().map(|m| m * 100.0).collect();
                v.extend(self.group_averages[p].iter().map(|g| g * 100.0));
                v.push(self.overall[p] * 100.0);
                (l.clone(), v)
            })
            .collect();
        let corner = match self.axis {
            SweepAxis::Weight => "config",
            SweepAxis::CandidateCount => "candidates",
            SweepAxis::PseudoRefCount => "pseudo_refs",
        };
        let mut out = render_grid(corner, &headers, &rows);
        if let Some(b) = self.best_point() {
            let _ = writeln!(out, "best: {}", self.labels[b]);
        }
        out
    }
}

fn check_weights(weights: &[f64]) -> Result<(), EvalError> {
    if weights.is_empty() {
        return Err(EvalError::Invalid("no sweep weights".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(EvalError::Invalid(format!("weight {w} outside [0, 1]")));
    }
    Ok(())
}

fn point_means(system: &super::SystemEvaluation) -> Result<Vec<f64>, EvalError> {
    Ok(system.summary()?.means.into_iter().map(|m| m.mean).collect())
}

/// Weight sweep from precomputed raw scores of an already-limited corpus.
pub fn weight_sweep_scored(
    prepared: &Corpus,
    scores: &[PoolScores],
    table: &MetricTable,
    consistency: &ConsistencyChoice,
    weights: &[f64],
) -> Result<SweepReport, EvalError> {
    check_weights(weights)?;
    let mut labels = Vec::with_capacity(weights.len());
    let mut means = Vec::with_capacity(weights.len());
    for &w in weights {
        let label = label_for(consistency, w);
        let results = select_all(prepared, scores, w)?;
        means.push(point_means(&evaluate_selections(label.clone(), &results, table)?)?);
        labels.push(label);
    }
    Ok(SweepReport::build(
        SweepAxis::Weight,
        weights.to_vec(),
        labels,
        &table.specs,
        means,
    ))
}

/// Reranks at every weight. Raw scores are computed once and recombined.
pub fn weight_sweep(
    reranker: &Reranker,
    corpus: &Corpus,
    weights: &[f64],
    evaluator: &MetricEvaluator,
) -> Result<SweepReport, EvalError> {
    check_weights(weights)?;
    let prepared = reranker.prepare(corpus);
    let table = evaluator.table(&prepared, reranker.workers())?;
    let scores = reranker.score_corpus(&prepared)?;
    weight_sweep_scored(&prepared, &scores, &table, &reranker.config().consistency, weights)
}

/// Truncates `role` to each size in turn and reranks at the configured weight.
/// The other role keeps its configured limit.
pub fn subset_sweep(
    reranker: &Reranker,
    corpus: &Corpus,
    sizes: &[usize],
    role: PoolRole,
    evaluator: &MetricEvaluator,
) -> Result<SweepReport, EvalError> {
    if sizes.is_empty() {
        return Err(EvalError::Invalid("no sweep sizes".into()));
    }
    if sizes.contains(&0) {
        return Err(EvalError::Invalid("sweep sizes must be at least 1".into()));
    }
    let cfg = reranker.config();
    let limits = |k: usize| match role {
        PoolRole::Candidates => (Some(k), cfg.pseudo_ref_limit),
        PoolRole::PseudoReferences => (cfg.candidate_limit, Some(k)),
    };
    let widest = *sizes.iter().max().expect("non-empty");
    let (c, r) = limits(widest);
    let table = evaluator.table(&corpus.limited(c, r), reranker.workers())?;

    let mut labels = Vec::with_capacity(sizes.len());
    let mut means = Vec::with_capacity(sizes.len());
    for &k in sizes {
        let short = corpus.pools().iter().filter(|p| p.len_of(role) < k).count();
        if short > 0 {
            log::warn!("size {k} exceeds the available entries in {short} pools; those pools use all they have");
        }
        let (c, r) = limits(k);
        let prepared = corpus.limited(c, r);
        let scores = reranker.score_corpus(&prepared)?;
        let results = select_all(&prepared, &scores, cfg.weight)?;
        means.push(point_means(&evaluate_selections(k.to_string(), &results, &table)?)?);
        labels.push(k.to_string());
    }
    let points = sizes.iter().map(|&k| k as f64).collect();
    Ok(SweepReport::build(
        SweepAxis::from(role),
        points,
        labels,
        &table.specs,
        means,
    ))
}
