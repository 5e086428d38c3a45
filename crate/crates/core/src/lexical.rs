//! Rule tokenizer and ROUGE-family overlap metrics.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowercased alphanumeric tokens of one text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token count, used as the length feature in correlation reports.
    pub fn origin_length(&self) -> usize {
        self.tokens.len()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercases, then splits on maximal runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> TokenSequence {
    let lowered = text.to_lowercase();
    let tokens = lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect();
    TokenSequence { tokens }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl FScore {
    pub const ZERO: FScore = FScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    /// Builds the score from a match count and the two side totals.
    ///
    /// F1 is computed as `2m / (c + r)`, which equals `2PR / (P + R)` and is
    /// exactly symmetric under swapping the sides.
    fn from_counts(matches: usize, candidate_total: usize, reference_total: usize) -> FScore {
        if candidate_total == 0 || reference_total == 0 {
            return FScore::ZERO;
        }
        let m = matches as f64;
        FScore {
            precision: m / candidate_total as f64,
            recall: m / reference_total as f64,
            f1: 2.0 * m / (candidate_total + reference_total) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexicalError {
    #[error("n-gram order must be at least 1")]
    InvalidN,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap.
pub fn rouge_n(candidate: &TokenSequence, reference: &TokenSequence, n: usize) -> Result<FScore, LexicalError> {
    if n == 0 {
        return Err(LexicalError::InvalidN);
    }
    let cand_total = candidate.len().saturating_sub(n - 1);
    let ref_total = reference.len().saturating_sub(n - 1);
    if cand_total == 0 || ref_total == 0 {
        return Ok(FScore::ZERO);
    }
    let cand = ngram_counts(&candidate.tokens, n);
    let refs = ngram_counts(&reference.tokens, n);
    let matches: usize = cand
        .iter()
        .map(|(gram, &c)| refs.get(gram).map_or(0, |&r| c.min(r)))
        .sum();
    Ok(FScore::from_counts(matches, cand_total, ref_total))
}

/// Length of the longest common subsequence of two token slices.
pub fn lcs_length(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y { prev[j] + 1 } else { curr[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Sentence-level ROUGE-L over token sequences.
pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> FScore {
    let l = lcs_length(&candidate.tokens, &reference.tokens);
    FScore::from_counts(l, candidate.len(), reference.len())
}

/// A lexical metric usable as an MBR utility or an evaluation metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LexicalMetric {
    #[serde(rename = "rouge_1")]
    Rouge1,
    #[serde(rename = "rouge_2")]
    Rouge2,
    #[serde(rename = "rouge_l")]
    RougeL,
}

impl LexicalMetric {
    pub fn name(self) -> &'static str {
        match self {
            LexicalMetric::Rouge1 => "rouge_1",
            LexicalMetric::Rouge2 => "rouge_2",
            LexicalMetric::RougeL => "rouge_l",
        }
    }

    pub fn score(self, candidate: &TokenSequence, reference: &TokenSequence) -> FScore {
        match self {
            LexicalMetric::Rouge1 => rouge_n(candidate, reference, 1).expect("n >= 1"),
            LexicalMetric::Rouge2 => rouge_n(candidate, reference, 2).expect("n >= 1"),
            LexicalMetric::RougeL => rouge_l(candidate, reference),
        }
    }

    /// F1 of `candidate` against `reference`, tokenizing both.
    pub fn f1(self, candidate: &str, reference: &str) -> f64 {
        self.score(&tokenize(candidate), &tokenize(reference)).f1
    }
}

impl fmt::Display for LexicalMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LexicalMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rouge_1" | "rouge1" => Ok(LexicalMetric::Rouge1),
            "rouge_2" | "rouge2" => Ok(LexicalMetric::Rouge2),
            "rouge_l" | "rougeL" | "rougel" => Ok(LexicalMetric::RougeL),
            other => Err(format!("unknown lexical metric `{other}`")),
        }
    }
}
