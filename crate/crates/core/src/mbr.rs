//! Consensus scoring: the expected utility of each candidate against the
//! pseudo-reference set.
//!
//! Entry `(i, j)` of the utility matrix is `u(y_i, r_j)`, scored with the
//! pseudo-reference as premise and the candidate as hypothesis. A candidate's
//! consensus score is the mean of its row, summed left to right so the result
//! does not depend on how the cells were computed.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pool::CandidatePool;
use crate::scorer::{score_batch, ScoreMode, ScoreRequest, Scorer, ScorerError};

/// What to do when a scorer returns an error for one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    #[default]
    Abort,
    /// Drop the candidate from selection; it stays in reports.
    ExcludeCandidate,
}

impl FromStr for FailurePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abort" => Ok(FailurePolicy::Abort),
            "exclude-candidate" => Ok(FailurePolicy::ExcludeCandidate),
            other => Err(format!("unknown failure policy `{other}`")),
        }
    }
}

impl fmt::Display for FailurePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailurePolicy::Abort => "abort",
            FailurePolicy::ExcludeCandidate => "exclude-candidate",
        })
    }
}

#[derive(Debug, Error)]
pub enum MbrError {
    #[error("pool `{0}` has no candidates")]
    NoCandidates(String),
    #[error("pool `{0}` has no pseudo-references")]
    NoReferences(String),
    #[error("pool `{pool}`: utility failed for candidate {candidate}, reference {reference}: {error}")]
    CellFailed {
        pool: String,
        candidate: usize,
        reference: usize,
        error: String,
    },
    #[error("utility matrix is not rectangular or contains non-finite values")]
    InvalidMatrix,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

/// `|Y| x |R|` utilities.
///
/// Rows listed in `failed_rows` belong to candidates excluded after a scorer
/// failure; their entries are unspecified. Every other entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    values: Vec<Vec<f64>>,
    utility_name: String,
    failed_rows: BTreeSet<usize>,
}

impl UtilityMatrix {
    pub fn from_rows(values: Vec<Vec<f64>>, utility_name: impl Into<String>) -> Result<Self, MbrError> {
        let cols = values.first().map_or(0, Vec::len);
        if values.is_empty()
            || cols == 0
            || values
                .iter()
                .any(|r| r.len() != cols || r.iter().any(|v| !v.is_finite()))
        {
            return Err(MbrError::InvalidMatrix);
        }
        Ok(Self {
            values,
            utility_name: utility_name.into(),
            failed_rows: BTreeSet::new(),
        })
    }

    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn cols(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn utility_name(&self) -> &str {
        &self.utility_name
    }

    pub fn failed_rows(&self) -> &BTreeSet<usize> {
        &self.failed_rows
    }
}

/// Consensus score per candidate; `NaN` for failed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusVector {
    pub scores: Vec<f64>,
}

fn cell_id(i: usize, j: usize) -> String {
    format!("u:{i}:{j}")
}

/// Scores every (candidate, pseudo-reference) pair through `scorer` in one batch.
pub fn utility_matrix(
    pool: &CandidatePool,
    scorer: &mut dyn Scorer,
    policy: FailurePolicy,
    timeout: Duration,
) -> Result<UtilityMatrix, MbrError> {
    if pool.candidates.is_empty() {
        return Err(MbrError::NoCandidates(pool.id.clone()));
    }
    if pool.pseudo_references.is_empty() {
        return Err(MbrError::NoReferences(pool.id.clone()));
    }
    let n_refs = pool.pseudo_references.len();
    let requests: Vec<ScoreRequest> = pool
        .candidates
        .iter()
        .enumerate()
        .flat_map(|(i, cand)| {
            pool.pseudo_references
                .iter()
                .enumerate()
                .map(move |(j, r)| ScoreRequest::new(cell_id(i, j), ScoreMode::Utility, r.clone(), cand.clone()))
        })
        .collect();
    let utility_name = scorer.handle().name.clone();
    let responses = score_batch(scorer, &requests, timeout)?;

    let mut values = vec![vec![0.0; n_refs]; pool.candidates.len()];
    let mut failed_rows = BTreeSet::new();
    for (k, resp) in responses.iter().enumerate() {
        let (i, j) = (k / n_refs, k % n_refs);
        match &resp.result {
            Ok(v) => values[i][j] = *v,
            Err(e) => match policy {
                FailurePolicy::Abort => {
                    return Err(MbrError::CellFailed {
                        pool: pool.id.clone(),
                        candidate: i,
                        reference: j,
                        error: e.clone(),
                    })
                }
                FailurePolicy::ExcludeCandidate => {
                    log::warn!(
                        "pool `{}`: excluding candidate {i}: utility failed on reference {j}: {e}",
                        pool.id
                    );
                    values[i][j] = f64::NAN;
                    failed_rows.insert(i);
                }
            },
        }
    }
    Ok(UtilityMatrix {
        values,
        utility_name,
        failed_rows,
    })
}

/// Row means of the utility matrix, summed in index order.
pub fn consensus_scores(matrix: &UtilityMatrix) -> ConsensusVector {
    let scores = matrix
        .values
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if matrix.failed_rows.contains(&i) {
                return f64::NAN;
            }
            let mut sum = 0.0;
            for v in row {
                sum += v;
            }
            sum / row.len() as f64
        })
        .collect();
    ConsensusVector { scores }
}
