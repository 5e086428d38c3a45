use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ordered_mean, EvalError};

/// Kendall's tau-b. `None` when every value of `x` or of `y` is tied.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<Option<f64>, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(EvalError::TooShort { need: 2, got: x.len() });
    }
    let (mut c, mut d, mut tx, mut ty) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            match (dx == 0.0, dy == 0.0) {
                (true, true) => {}
                (true, false) => tx += 1,
                (false, true) => ty += 1,
                (false, false) if (dx > 0.0) == (dy > 0.0) => c += 1,
                _ => d += 1,
            }
        }
    }
    let denom = (((c + d + tx) * (c + d + ty)) as f64).sqrt();
    if denom == 0.0 || c + d + tx == 0 || c + d + ty == 0 {
        return Ok(None);
    }
    Ok(Some(((c as f64 - d as f64) / denom).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSample {
    pub sample_id: String,
    /// Annotator id to rank per item.
    pub rankings: BTreeMap<String, Vec<f64>>,
}

/// Rankings of the same items by several annotators, per sample.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub samples: Vec<AnnotatedSample>,
}

impl AnnotationSet {
    pub fn new(samples: Vec<AnnotatedSample>) -> Result<Self, EvalError> {
        for s in &samples {
            let mut lens = s.rankings.values().map(Vec::len);
            if let Some(first) = lens.next() {
                if let Some(other) = lens.find(|&l| l != first) {
                    return Err(EvalError::Invalid(format!(
                        "sample `{}`: rank lists cover {first} and {other} items",
                        s.sample_id
                    )));
                }
            }
        }
        Ok(Self { samples })
    }

    /// One `{"sample_id", "rankings"}` record per line; blank lines skipped.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, EvalError> {
        let mut samples = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let sample: AnnotatedSample = serde_json::from_str(&line).map_err(|e| EvalError::MalformedRecord {
                line: k + 1,
                reason: e.to_string(),
            })?;
            samples.push(sample);
        }
        Self::new(samples)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleAgreement {
    pub sample_id: String,
    /// Best pairwise tau-b; `None` when every pair is undefined.
    pub max_tau_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaaSummary {
    /// Mean of per-sample maxima over samples with a defined maximum.
    pub mean_max_tau_b: Option<f64>,
    pub samples: Vec<SampleAgreement>,
    pub dropped: Vec<String>,
}

/// Per sample, the maximum tau-b over annotator pairs; then the mean over samples.
pub fn iaa_summary(set: &AnnotationSet) -> Result<IaaSummary, EvalError> {
    let mut samples = Vec::with_capacity(set.samples.len());
    let mut dropped = Vec::new();
    let mut maxima = Vec::new();
    for s in &set.samples {
        if s.rankings.len() < 2 {
            return Err(EvalError::InsufficientAnnotators(s.sample_id.clone()));
        }
        let ranks: Vec<&Vec<f64>> = s.rankings.values().collect();
        let mut best: Option<f64> = None;
        for i in 0..ranks.len() {
            for j in i + 1..ranks.len() {
                if let Some(t) = kendall_tau_b(ranks[i], ranks[j])? {
                    best = Some(best.map_or(t, |b: f64| b.max(t)));
                }
            }
        }
        match best {
            Some(b) => maxima.push(b),
            None => {
                log::warn!("sample `{}`: every annotator pair is undefined; dropped", s.sample_id);
                dropped.push(s.sample_id.clone());
            }
        }
        samples.push(SampleAgreement {
            sample_id: s.sample_id.clone(),
            max_tau_b: best,
        });
    }
    Ok(IaaSummary {
        mean_max_tau_b: (!maxima.is_empty()).then(|| ordered_mean(&maxima)),
        samples,
        dropped,
    })
}
