//! Per-system metric columns, corpus means, and plain-text report tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bootstrap::SignificanceReport;
use super::metrics::MetricTable;
use super::{corpus_mean, EvalError, MetricColumn};
use crate::pool::Corpus;
use crate::rerank::{oracle_select, RerankResult};

/// Metric columns for one system's selections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemEvaluation {
    pub label: String,
    pub pool_ids: Vec<String>,
    pub columns: Vec<MetricColumn>,
}

impl SystemEvaluation {
    pub fn column(&self, metric: &str) -> Option<&MetricColumn> {
        self.columns.iter().find(|c| c.metric_name == metric)
    }

    pub fn summary(&self) -> Result<SystemSummary, EvalError> {
        let means = self
            .columns
            .iter()
            .map(|c| {
                Ok(MetricMean {
                    metric: c.metric_name.clone(),
                    mean: corpus_mean(c)?,
                })
            })
            .collect::<Result<_, EvalError>>()?;
        Ok(SystemSummary {
            label: self.label.clone(),
            means,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMean {
    pub metric: String,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub label: String,
    pub means: Vec<MetricMean>,
}

/// Looks up each selected candidate's metric values.
pub fn evaluate_selections(
    label: impl Into<String>,
    results: &[RerankResult],
    table: &MetricTable,
) -> Result<SystemEvaluation, EvalError> {
    if results.len() != table.pool_ids.len() {
        return Err(EvalError::LengthMismatch {
            left: results.len(),
            right: table.pool_ids.len(),
        });
    }
    for (r, id) in results.iter().zip(&table.pool_ids) {
        if &r.pool_id != id {
            return Err(EvalError::Invalid(format!(
                "selection for pool `{}` does not line up with pool `{id}`",
                r.pool_id
            )));
        }
    }
    let indices: Vec<usize> = results.iter().map(|r| r.selected_index).collect();
    evaluate_indices(label, &indices, table)
}

/// Metric columns for a selected candidate index per pool, in table order.
pub fn evaluate_indices(
    label: impl Into<String>,
    indices: &[usize],
    table: &MetricTable,
) -> Result<SystemEvaluation, EvalError> {
    if indices.len() != table.pool_ids.len() {
        return Err(EvalError::LengthMismatch {
            left: indices.len(),
            right: table.pool_ids.len(),
        });
    }
    for (p, &i) in indices.iter().enumerate() {
        let n = table.values[p].first().map_or(0, Vec::len);
        if i >= n && !table.specs.is_empty() {
            return Err(EvalError::Invalid(format!(
                "pool `{}`: candidate {i} out of range for {n} candidates",
                table.pool_ids[p]
            )));
        }
    }
    let columns = table
        .specs
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let values = indices.iter().enumerate().map(|(p, &i)| table.value(p, m, i)).collect();
            MetricColumn::new(spec.name.clone(), values, spec.higher_is_better, spec.group.clone())
        })
        .collect();
    Ok(SystemEvaluation {
        label: label.into(),
        pool_ids: table.pool_ids.clone(),
        columns,
    })
}

/// Oracle selections maximizing metric `m` in every pool.
pub fn oracle_corpus(corpus: &Corpus, table: &MetricTable, m: usize) -> Result<Vec<RerankResult>, EvalError> {
    let spec = &table.specs[m];
    corpus
        .pools()
        .iter()
        .enumerate()
        .map(|(p, pool)| {
            let n = pool.candidates.len();
            let mut scores = table.candidates(p, m)[..n].to_vec();
            if !spec.higher_is_better {
                scores.iter_mut().for_each(|v| *v = -*v);
            }
            let mut r = oracle_select(pool, &scores, &spec.name)?;
            if !spec.higher_is_better {
                r.table.raw_sis = table.candidates(p, m)[..n].to_vec();
            }
            Ok(r)
        })
        .collect()
}

/// Corpus means per system plus any significance decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Vec<String>,
    pub systems: Vec<SystemSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub significance: Vec<SignificanceReport>,
}

impl EvalReport {
    pub fn from_systems(systems: &[SystemEvaluation]) -> Result<Self, EvalError> {
        let metrics = systems
            .first()
            .map(|s| s.columns.iter().map(|c| c.metric_name.clone()).collect())
            .unwrap_or_default();
        Ok(Self {
            metrics,
            systems: systems
                .iter()
                .map(SystemEvaluation::summary)
                .collect::<Result<_, _>>()?,
            significance: Vec::new(),
        })
    }

    /// Systems as rows, metrics as columns; scores scaled by 100.
    pub fn render(&self) -> String {
        let rows: Vec<(String, Vec<f64>)> = self
            .systems
            .iter()
            .map(|s| (s.label.clone(), s.means.iter().map(|m| m.mean * 100.0).collect()))
            .collect();
        let mut out = render_grid("system", &self.metrics, &rows);
        for sig in &self.significance {
            let _ = writeln!(
                out,
                "{} vs {} on {}: p={:.4} (threshold {:.4}) {}",
                sig.system_a,
                sig.system_b,
                sig.metric,
                sig.p_value,
                sig.threshold(),
                if sig.significant {
                    "significant"
                } else {
                    "not significant"
                }
            );
        }
        out
    }
}

/// Fixed-width table with two decimals.
pub(crate) fn render_grid(corner: &str, headers: &[String], rows: &[(String, Vec<f64>)]) -> String {
    let first = rows
        .iter()
        .map(|(l, _)| l.len())
        .chain([corner.len()])
        .max()
        .unwrap_or(0);
    let widths: Vec<usize> = headers.iter().map(|h| h.len().max(7)).collect();
    let mut out = String::new();
    let _ = write!(out, "{corner:<first$}");
    for (h, w) in headers.iter().zip(&widths) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for (label, values) in rows {
        let _ = write!(out, "{label:<first$}");
        for (v, w) in values.iter().zip(&widths) {
            let _ = write!(out, "  {v:>w$.2}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::{MetricEvaluator, MetricSpec};
    use crate::pool::CandidatePool;

    fn corpus() -> Corpus {
        Corpus::from_pools(vec![
            CandidatePool::new("a", "x y z", vec!["x q".into(), "x y".into(), "x y".into()], vec![]).with_gold("g"),
            CandidatePool::new("b", "m n", vec!["m n".into(), "o".into()], vec![]).with_gold("g"),
        ])
        .unwrap()
    }

    #[test]
    fn oracle_picks_lowest_index_max() {
        let c = corpus();
        let ev = MetricEvaluator::builtin(vec![MetricSpec::source_overlap()]).unwrap();
        let t = ev.table(&c, 1).unwrap();
        let o = oracle_corpus(&c, &t, 0).unwrap();
        assert_eq!(o[0].selected_index, 1);
        assert!(o[0].tie_broken);
        assert_eq!(o[1].selected_index, 0);
        let sys = evaluate_selections("oracle", &o, &t).unwrap();
        assert_eq!(sys.columns[0].values, vec![1.0, 1.0]);
        let report = EvalReport::from_systems(&[sys]).unwrap();
        assert!(report.render().contains("100.00"));
    }
}
