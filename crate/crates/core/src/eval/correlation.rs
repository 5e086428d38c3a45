//! Pearson correlation between score, metric and length features.

use serde::{Deserialize, Serialize};

use super::metrics::MetricTable;
use super::EvalError;
use crate::lexical::tokenize;
use crate::pool::Corpus;
use crate::rerank::ScoreTable;

/// Product-moment correlation. `None` when either input is constant.
pub fn pearson_corr(x: &[f64], y: &[f64]) -> Result<Option<f64>, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(EvalError::TooShort { need: 2, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("correlation input".into()));
    }
    let n = x.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sx += a;
        sy += b;
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub label: String,
    pub values: Vec<f64>,
}

impl FeatureColumn {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }
}

/// Labeled symmetric matrix; `None` marks undefined cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    /// Rows used after dropping rows with any missing value.
    pub rows: usize,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        self.values[i][j]
    }

    pub fn render(&self) -> String {
        let width = self.labels.iter().map(String::len).max().unwrap_or(0).max(6);
        let mut out = format!("{:<width$}", "");
        for l in &self.labels {
            out.push_str(&format!("  {l:>width$}"));
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.values) {
            out.push_str(&format!("{l:<width$}"));
            for v in row {
                match v {
                    Some(v) => out.push_str(&format!("  {v:>width$.3}")),
                    None => out.push_str(&format!("  {:>width$}", "n/a")),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise Pearson over aligned columns. Rows holding a non-finite value in
/// any column are dropped first.
pub fn correlation_matrix(columns: &[FeatureColumn]) -> Result<CorrelationMatrix, EvalError> {
    let n = columns.first().map_or(0, |c| c.values.len());
    if let Some(c) = columns.iter().find(|c| c.values.len() != n) {
        return Err(EvalError::LengthMismatch {
            left: c.values.len(),
            right: n,
        });
    }
    let keep: Vec<usize> = (0..n)
        .filter(|&r| columns.iter().all(|c| c.values[r].is_finite()))
        .collect();
    let cols: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| keep.iter().map(|&r| c.values[r]).collect())
        .collect();
    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let v = if i == j {
                pearson_corr(&cols[i], &cols[i])?.map(|_| 1.0)
            } else {
                pearson_corr(&cols[i], &cols[j])?
            };
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(CorrelationMatrix {
        labels: columns.iter().map(|c| c.label.clone()).collect(),
        values,
        rows: keep.len(),
    })
}

/// One row per candidate of every pool: `s_fin` from each labeled set of score
/// tables, each metric, and token lengths of candidate and source.
pub fn candidate_features(
    corpus: &Corpus,
    score_sets: &[(String, Vec<ScoreTable>)],
    metrics: Option<&MetricTable>,
) -> Result<Vec<FeatureColumn>, EvalError> {
    let mut columns = Vec::new();
    for (label, tables) in score_sets {
        if tables.len() != corpus.len() {
            return Err(EvalError::LengthMismatch {
                left: tables.len(),
                right: corpus.len(),
            });
        }
        let mut values = Vec::new();
        for (pool, t) in corpus.pools().iter().zip(tables) {
            if t.len() != pool.candidates.len() {
                return Err(EvalError::LengthMismatch {
                    left: t.len(),
                    right: pool.candidates.len(),
                });
            }
            values.extend_from_slice(&t.s_fin);
        }
        columns.push(FeatureColumn::new(label.clone(), values));
    }
    if let Some(table) = metrics {
        for (m, spec) in table.specs.iter().enumerate() {
            let mut values = Vec::new();
            for (p, pool) in corpus.pools().iter().enumerate() {
                values.extend_from_slice(&table.candidates(p, m)[..pool.candidates.len()]);
            }
            columns.push(FeatureColumn::new(spec.name.clone(), values));
        }
    }
    let mut cand_len = Vec::new();
    let mut src_len = Vec::new();
    for pool in corpus.pools() {
        let s = tokenize(&pool.source).origin_length() as f64;
        for c in &pool.candidates {
            cand_len.push(tokenize(c).origin_length() as f64);
            src_len.push(s);
        }
    }
    columns.push(FeatureColumn::new("candidate_length", cand_len));
    columns.push(FeatureColumn::new("source_length", src_len));
    Ok(columns)
}
