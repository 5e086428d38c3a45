//! Normalization, weighted combination and selection.
//!
//! For one pool, both raw columns are z-normalized independently (population
//! standard deviation, computed over the non-excluded candidates only) and
//! combined as `s_fin = w * z(sen) + (1 - w) * z(sis)`. The selected candidate is
//! the lowest-index argmax of `s_fin`.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pool::CandidatePool;

/// Default combination weight.
pub const DEFAULT_WEIGHT: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RerankError {
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("cannot normalize an empty column")]
    Empty,
    #[error("weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("pool `{0}`: every candidate is excluded")]
    AllExcluded(String),
    #[error("excluded index {index} out of range for {len} candidates")]
    ExcludedOutOfRange { index: usize, len: usize },
}

/// Population z-scores. A constant column (including a single value) maps to
/// all zeros.
pub fn zscore(values: &[f64]) -> Result<Vec<f64>, RerankError> {
    if values.is_empty() {
        return Err(RerankError::Empty);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(RerankError::NonFinite(i));
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Ok(vec![0.0; values.len()]);
    }
    let n = values.len() as f64;
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / n;
    let mut ss = 0.0;
    for v in values {
        ss += (v - mean) * (v - mean);
    }
    let sd = (ss / n).sqrt();
    if sd == 0.0 {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

/// Normalized and combined columns for one candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedColumns {
    pub z_sen: Vec<f64>,
    pub z_sis: Vec<f64>,
    pub s_fin: Vec<f64>,
}

fn check_weight(w: f64) -> Result<(), RerankError> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(RerankError::WeightOutOfRange(w))
    }
}

pub fn combine_scores(sen: &[f64], sis: &[f64], w: f64) -> Result<CombinedColumns, RerankError> {
    check_weight(w)?;
    if sen.len() != sis.len() {
        return Err(RerankError::LengthMismatch {
            left: sen.len(),
            right: sis.len(),
        });
    }
    let z_sen = zscore(sen)?;
    let z_sis = zscore(sis)?;
    let s_fin = z_sen.iter().zip(&z_sis).map(|(a, b)| w * a + (1.0 - w) * b).collect();
    Ok(CombinedColumns { z_sen, z_sis, s_fin })
}

/// The weight a table was built with, or the oracle marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightTag {
    Value(f64),
    Oracle,
}

impl WeightTag {
    pub fn value(self) -> Option<f64> {
        match self {
            WeightTag::Value(w) => Some(w),
            WeightTag::Oracle => None,
        }
    }
}

impl fmt::Display for WeightTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightTag::Value(w) => write!(f, "{w}"),
            WeightTag::Oracle => f.write_str("oracle"),
        }
    }
}

impl Serialize for WeightTag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            WeightTag::Value(w) => s.serialize_f64(*w),
            WeightTag::Oracle => s.serialize_str("oracle"),
        }
    }
}

impl<'de> Deserialize<'de> for WeightTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(w) => Ok(WeightTag::Value(w)),
            Raw::Str(s) if s == "oracle" => Ok(WeightTag::Oracle),
            Raw::Str(s) => Err(de::Error::custom(format!("invalid weight `{s}`"))),
        }
    }
}

/// Per-candidate score columns for one pool.
///
/// Excluded candidates keep their raw scores (possibly `NaN` when the scorer
/// failed on them); their normalized and combined entries are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub pool_id: String,
    pub raw_sis: Vec<f64>,
    pub raw_sen: Vec<f64>,
    pub z_sis: Vec<f64>,
    pub z_sen: Vec<f64>,
    pub s_fin: Vec<f64>,
    pub weight: WeightTag,
    pub excluded: BTreeSet<usize>,
    /// Metric name for oracle tables.
    pub metric: Option<String>,
}

impl ScoreTable {
    pub fn build(
        pool_id: impl Into<String>,
        raw_sis: Vec<f64>,
        raw_sen: Vec<f64>,
        weight: f64,
        excluded: BTreeSet<usize>,
    ) -> Result<Self, RerankError> {
        check_weight(weight)?;
        if raw_sis.len() != raw_sen.len() {
            return Err(RerankError::LengthMismatch {
                left: raw_sen.len(),
                right: raw_sis.len(),
            });
        }
        let n = raw_sis.len();
        if let Some(&index) = excluded.iter().find(|&&i| i >= n) {
            return Err(RerankError::ExcludedOutOfRange { index, len: n });
        }
        let pool_id = pool_id.into();
        let kept: Vec<usize> = (0..n).filter(|i| !excluded.contains(i)).collect();
        if kept.is_empty() {
            return Err(RerankError::AllExcluded(pool_id));
        }
        let sen: Vec<f64> = kept.iter().map(|&i| raw_sen[i]).collect();
        let sis: Vec<f64> = kept.iter().map(|&i| raw_sis[i]).collect();
        let combined = combine_scores(&sen, &sis, weight).map_err(|e| match e {
            RerankError::NonFinite(k) => RerankError::NonFinite(kept[k]),
            other => other,
        })?;

        let mut z_sen = vec![f64::NAN; n];
        let mut z_sis = vec![f64::NAN; n];
        let mut s_fin = vec![f64::NAN; n];
        for (k, &i) in kept.iter().enumerate() {
            z_sen[i] = combined.z_sen[k];
            z_sis[i] = combined.z_sis[k];
            s_fin[i] = combined.s_fin[k];
        }
        Ok(Self {
            pool_id,
            raw_sis,
            raw_sen,
            z_sis,
            z_sen,
            s_fin,
            weight: WeightTag::Value(weight),
            excluded,
            metric: None,
        })
    }

    pub fn len(&self) -> usize {
        self.s_fin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_fin.is_empty()
    }

    /// Lowest-index argmax of `s_fin` over non-excluded candidates, and whether
    /// the maximum is attained more than once.
    pub fn argmax(&self) -> Result<(usize, bool), RerankError> {
        argmax_excluding(&self.s_fin, &self.excluded).ok_or_else(|| RerankError::AllExcluded(self.pool_id.clone()))
    }
}

fn argmax_excluding(values: &[f64], excluded: &BTreeSet<usize>) -> Option<(usize, bool)> {
    let mut best: Option<(usize, f64)> = None;
    let mut ties = 0;
    for (i, &v) in values.iter().enumerate() {
        if excluded.contains(&i) {
            continue;
        }
        match best {
            None => {
                best = Some((i, v));
                ties = 1;
            }
            Some((_, b)) if v > b => {
                best = Some((i, v));
                ties = 1;
            }
            Some((_, b)) if v == b => ties += 1,
            _ => {}
        }
    }
    best.map(|(i, _)| (i, ties > 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankResult {
    pub pool_id: String,
    pub selected_index: usize,
    pub selected_text: String,
    pub table: ScoreTable,
    pub tie_broken: bool,
}

pub fn select_best(pool: &CandidatePool, table: ScoreTable) -> Result<RerankResult, RerankError> {
    if table.len() != pool.candidates.len() {
        return Err(RerankError::LengthMismatch {
            left: table.len(),
            right: pool.candidates.len(),
        });
    }
    let (selected_index, tie_broken) = table.argmax()?;
    Ok(RerankResult {
        pool_id: pool.id.clone(),
        selected_index,
        selected_text: pool.candidates[selected_index].clone(),
        table,
        tie_broken,
    })
}

/// Picks the candidate that maximizes a metric directly (the per-pool upper bound).
pub fn oracle_select(
    pool: &CandidatePool,
    metric_scores: &[f64],
    metric_name: &str,
) -> Result<RerankResult, RerankError> {
    let n = pool.candidates.len();
    if metric_scores.len() != n {
        return Err(RerankError::LengthMismatch {
            left: metric_scores.len(),
            right: n,
        });
    }
    if let Some(i) = metric_scores.iter().position(|v| !v.is_finite()) {
        return Err(RerankError::NonFinite(i));
    }
    let table = ScoreTable {
        pool_id: pool.id.clone(),
        raw_sis: metric_scores.to_vec(),
        raw_sen: vec![f64::NAN; n],
        z_sis: vec![f64::NAN; n],
        z_sen: vec![f64::NAN; n],
        s_fin: metric_scores.to_vec(),
        weight: WeightTag::Oracle,
        excluded: BTreeSet::new(),
        metric: Some(metric_name.to_string()),
    };
    select_best(pool, table)
}

mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(values.iter().map(|v| v.is_finite().then_some(*v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreColumnsRecord {
    #[serde(with = "nullable")]
    pub raw_sis: Vec<f64>,
    #[serde(with = "nullable")]
    pub raw_sen: Vec<f64>,
    #[serde(with = "nullable")]
    pub z_sis: Vec<f64>,
    #[serde(with = "nullable")]
    pub z_sen: Vec<f64>,
    #[serde(with = "nullable")]
    pub s_fin: Vec<f64>,
}

/// One line of a rerank output file. Non-finite entries are written as `null`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RerankRecord {
    pub pool_id: String,
    pub selected_index: usize,
    pub selected_text: String,
    pub weight: WeightTag,
    pub tie_broken: bool,
    pub scores: ScoreColumnsRecord,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub excluded: BTreeSet<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
}

impl From<&RerankResult> for RerankRecord {
    fn from(r: &RerankResult) -> Self {
        let t = &r.table;
        RerankRecord {
            pool_id: r.pool_id.clone(),
            selected_index: r.selected_index,
            selected_text: r.selected_text.clone(),
            weight: t.weight,
            tie_broken: r.tie_broken,
            scores: ScoreColumnsRecord {
                raw_sis: t.raw_sis.clone(),
                raw_sen: t.raw_sen.clone(),
                z_sis: t.z_sis.clone(),
                z_sen: t.z_sen.clone(),
                s_fin: t.s_fin.clone(),
            },
            excluded: t.excluded.clone(),
            metric: t.metric.clone(),
        }
    }
}

impl From<RerankRecord> for RerankResult {
    fn from(r: RerankRecord) -> Self {
        RerankResult {
            table: ScoreTable {
                pool_id: r.pool_id.clone(),
                raw_sis: r.scores.raw_sis,
                raw_sen: r.scores.raw_sen,
                z_sis: r.scores.z_sis,
                z_sen: r.scores.z_sen,
                s_fin: r.scores.s_fin,
                weight: r.weight,
                excluded: r.excluded,
                metric: r.metric,
            },
            pool_id: r.pool_id,
            selected_index: r.selected_index,
            selected_text: r.selected_text,
            tie_broken: r.tie_broken,
        }
    }
}

pub fn write_results<W: Write>(mut w: W, results: &[RerankResult]) -> io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, &RerankRecord::from(r))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_results<R: BufRead>(r: R) -> io::Result<Vec<RerankResult>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RerankRecord = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        out.push(rec.into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pool(n: usize) -> CandidatePool {
        CandidatePool::new("p", "s", (0..n).map(|i| format!("c{i}")).collect(), vec![])
    }

    #[test]
    fn zscore_hand_values() {
        let z = zscore(&[1.0, 2.0, 3.0]).unwrap();
        let expect = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((z[0] + expect).abs() < 1e-12);
        assert_eq!(z[1], 0.0);
        assert!((z[2] - expect).abs() < 1e-12);
        assert!((z[2] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn zscore_degenerate_columns() {
        assert_eq!(zscore(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(zscore(&[0.1; 7]).unwrap(), vec![0.0; 7]);
        assert_eq!(zscore(&[3.0]).unwrap(), vec![0.0]);
        assert_eq!(zscore(&[]), Err(RerankError::Empty));
        assert_eq!(zscore(&[1.0, f64::NAN]), Err(RerankError::NonFinite(1)));
        assert_eq!(zscore(&[f64::INFINITY]), Err(RerankError::NonFinite(0)));
    }

    #[test]
    fn combine_endpoints_and_midpoint() {
        let sen = [0.2, 0.9, 0.4];
        let sis = [0.8, 0.1, 0.3];
        let c0 = combine_scores(&sen, &sis, 0.0).unwrap();
        assert_eq!(c0.s_fin, zscore(&sis).unwrap());
        let c1 = combine_scores(&sen, &sis, 1.0).unwrap();
        assert_eq!(c1.s_fin, zscore(&sen).unwrap());

        // z([a, b]) with a > b is [1, -1].
        let c = combine_scores(&[2.0, 1.0], &[1.0, 2.0], 0.75).unwrap();
        assert_eq!(c.z_sen, vec![1.0, -1.0]);
        assert_eq!(c.z_sis, vec![-1.0, 1.0]);
        assert_eq!(c.s_fin, vec![0.5, -0.5]);
    }

    #[test]
    fn combine_errors() {
        assert_eq!(
            combine_scores(&[1.0], &[1.0], 1.5),
            Err(RerankError::WeightOutOfRange(1.5))
        );
        assert!(matches!(
            combine_scores(&[1.0], &[1.0], f64::NAN),
            Err(RerankError::WeightOutOfRange(_))
        ));
        assert_eq!(
            combine_scores(&[1.0, 2.0], &[1.0], 0.5),
            Err(RerankError::LengthMismatch { left: 2, right: 1 })
        );
    }

    fn table_with_fin(s_fin: Vec<f64>) -> ScoreTable {
        let n = s_fin.len();
        ScoreTable {
            pool_id: "p".into(),
            raw_sis: vec![0.0; n],
            raw_sen: vec![0.0; n],
            z_sis: vec![0.0; n],
            z_sen: vec![0.0; n],
            s_fin,
            weight: WeightTag::Value(0.5),
            excluded: BTreeSet::new(),
            metric: None,
        }
    }

    #[test]
    fn select_unique_max_and_tie() {
        let r = select_best(&pool(3), table_with_fin(vec![0.1, 0.9, 0.3])).unwrap();
        assert_eq!(r.selected_index, 1);
        assert_eq!(r.selected_text, "c1");
        assert!(!r.tie_broken);

        let r = select_best(&pool(2), table_with_fin(vec![0.5, 0.5])).unwrap();
        assert_eq!(r.selected_index, 0);
        assert!(r.tie_broken);
    }

    #[test]
    fn exclusion_skips_candidates() {
        let t = ScoreTable::build(
            "p",
            vec![0.9, 0.1, 0.5],
            vec![0.9, 0.2, 0.5],
            0.75,
            [0].into_iter().collect(),
        )
        .unwrap();
        assert!(t.s_fin[0].is_nan());
        let r = select_best(&pool(3), t).unwrap();
        assert_eq!(r.selected_index, 2);

        let err = ScoreTable::build("p", vec![1.0], vec![1.0], 0.5, [0].into_iter().collect()).unwrap_err();
        assert_eq!(err, RerankError::AllExcluded("p".into()));
    }

    #[test]
    fn excluded_rows_may_hold_nan() {
        let t = ScoreTable::build(
            "p",
            vec![0.1, 0.4, 0.2],
            vec![f64::NAN, 0.3, 0.6],
            1.0,
            [0].into_iter().collect(),
        )
        .unwrap();
        assert_eq!(t.argmax().unwrap(), (2, false));
        let z: Vec<f64> = t.z_sen.iter().copied().filter(|v| v.is_finite()).collect();
        assert!(z.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn oracle_picks_lowest_argmax() {
        let r = oracle_select(&pool(3), &[0.2, 0.8, 0.8], "rouge_1").unwrap();
        assert_eq!(r.selected_index, 1);
        assert!(r.tie_broken);
        assert_eq!(r.table.weight, WeightTag::Oracle);
        assert_eq!(r.table.raw_sis, vec![0.2, 0.8, 0.8]);

        let r = oracle_select(&pool(1), &[0.0], "m").unwrap();
        assert_eq!(r.selected_index, 0);

        assert!(matches!(
            oracle_select(&pool(2), &[0.0], "m"),
            Err(RerankError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn record_round_trip_keeps_nan_as_null() {
        let t = ScoreTable::build(
            "p",
            vec![0.3, 0.5],
            vec![f64::NAN, 0.1],
            0.75,
            [0].into_iter().collect(),
        )
        .unwrap();
        let r = select_best(&pool(2), t).unwrap();
        let mut buf = Vec::new();
        write_results(&mut buf, std::slice::from_ref(&r)).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(line.contains(r#""raw_sen":[null,0.1]"#), "{line}");
        assert!(line.contains(r#""weight":0.75"#));
        let back = read_results(buf.as_slice()).unwrap();
        assert_eq!(back[0].selected_index, 1);
        assert!(back[0].table.raw_sen[0].is_nan());
        assert_eq!(back[0].table.excluded, r.table.excluded);

        let o = oracle_select(&pool(2), &[0.1, 0.2], "m").unwrap();
        let mut buf = Vec::new();
        write_results(&mut buf, &[o]).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().contains(r#""weight":"oracle""#));
        assert_eq!(read_results(buf.as_slice()).unwrap()[0].table.weight, WeightTag::Oracle);
    }

    fn column() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 2..12)
    }

    proptest! {
        #[test]
        fn zscore_mean_zero(v in column()) {
            let z = zscore(&v).unwrap();
            let mean: f64 = z.iter().sum::<f64>() / z.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }

        #[test]
        fn zscore_affine_invariant(v in column(), a in 0.1f64..10.0, b in -10.0f64..10.0) {
            prop_assume!(v.iter().any(|&x| x != v[0]));
            let t: Vec<f64> = v.iter().map(|x| a * x + b).collect();
            for (x, y) in zscore(&v).unwrap().iter().zip(zscore(&t).unwrap()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn s_fin_is_convex_combination(sen in column(), sis_seed in column(), w in 0.0f64..=1.0) {
            let sis: Vec<f64> = sis_seed.iter().cycle().take(sen.len()).copied().collect();
            let c = combine_scores(&sen, &sis, w).unwrap();
            for i in 0..sen.len() {
                let lo = c.z_sen[i].min(c.z_sis[i]) - 1e-12;
                let hi = c.z_sen[i].max(c.z_sis[i]) + 1e-12;
                prop_assert!(c.s_fin[i] >= lo && c.s_fin[i] <= hi);
            }
        }
    }
}
