//! Corpus-level evaluation: metric aggregation, sweeps, significance,
//! agreement and correlation.

pub mod agreement;
pub mod bootstrap;
pub mod correlation;
pub mod metrics;
pub mod report;
pub mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::PipelineError;
use crate::rerank::RerankError;
use crate::scorer::ScorerError;

pub use agreement::{iaa_summary, kendall_tau_b, AnnotatedSample, AnnotationSet, IaaSummary};
pub use bootstrap::{paired_bootstrap, BootstrapOptions, SignificanceReport};
pub use correlation::{candidate_features, correlation_matrix, pearson_corr, CorrelationMatrix, FeatureColumn};
pub use metrics::{MetricEvaluator, MetricKind, MetricSpec, MetricTable, Target};
pub use report::{evaluate_indices, evaluate_selections, oracle_corpus, EvalReport, SystemEvaluation, SystemSummary};
pub use sweep::{
    subset_sweep, weight_sweep, weight_sweep_scored, SweepAxis, SweepReport, SWEEP_SUBSET_SIZES, SWEEP_WEIGHTS,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metric column `{0}` is empty")]
    EmptyColumn(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("non-finite value in column `{0}`")]
    NonFinite(String),
    #[error("pool `{pool}` has no gold_reference, required by metric `{metric}`")]
    MissingGoldReference { pool: String, metric: String },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("metric `{metric}` failed in pool `{pool}` for candidate {candidate}: {error}")]
    MetricFailed {
        pool: String,
        metric: String,
        candidate: usize,
        error: String,
    },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("sample `{0}` has fewer than two annotators")]
    InsufficientAnnotators(String),
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One metric's value for the selected candidate of every pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricColumn {
    pub metric_name: String,
    pub values: Vec<f64>,
    pub higher_is_better: bool,
    pub group: String,
}

impl MetricColumn {
    pub fn new(
        metric_name: impl Into<String>,
        values: Vec<f64>,
        higher_is_better: bool,
        group: impl Into<String>,
    ) -> Self {
        Self {
            metric_name: metric_name.into(),
            values,
            higher_is_better,
            group: group.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Arithmetic mean, summed in index order.
pub fn corpus_mean(column: &MetricColumn) -> Result<f64, EvalError> {
    if column.values.is_empty() {
        return Err(EvalError::EmptyColumn(column.metric_name.clone()));
    }
    if column.values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(column.metric_name.clone()));
    }
    Ok(ordered_mean(&column.values))
}

pub(crate) fn ordered_mean(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    sum / values.len() as f64
}

/// Per-column MinMax over rows (points). A constant column maps to 0.5.
pub fn minmax_normalize(matrix: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(first) = matrix.first() else {
        return Vec::new();
    };
    let cols = first.len();
    let mut out = vec![vec![0.0; cols]; matrix.len()];
    for c in 0..cols {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in matrix {
            lo = lo.min(row[c]);
            hi = hi.max(row[c]);
        }
        for (r, row) in matrix.iter().enumerate() {
            out[r][c] = if hi == lo { 0.5 } else { (row[c] - lo) / (hi - lo) };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: Vec<f64>) -> MetricColumn {
        MetricColumn::new("m", values, true, "g")
    }

    #[test]
    fn mean_cases() {
        assert_eq!(corpus_mean(&col(vec![1.0])).unwrap(), 1.0);
        assert_eq!(corpus_mean(&col(vec![0.0, 1.0])).unwrap(), 0.5);
        assert!(matches!(corpus_mean(&col(vec![])), Err(EvalError::EmptyColumn(_))));
    }

    #[test]
    fn minmax_cases() {
        let m = minmax_normalize(&[vec![2.0, 3.0, 0.0], vec![4.0, 3.0, 1.0], vec![6.0, 3.0, 0.5]]);
        assert_eq!(m, vec![vec![0.0, 0.5, 0.0], vec![0.5, 0.5, 1.0], vec![1.0, 0.5, 0.5]]);
        let again = minmax_normalize(&m);
        assert_eq!(again[0][0], 0.0);
        assert_eq!(again[2][0], 1.0);
        assert_eq!(again[1][2], 1.0);
    }
}
