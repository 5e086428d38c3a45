//! Candidate pools: one source document, the candidates competing for
//! selection, and the pseudo-references used for consensus scoring.
//!
//! Pools are stored one JSON object per line:
//!
//! ```json
//! {"id":"p1","source":"...","candidates":["..."],"pseudo_references":["..."],"gold_reference":"...","metadata":{"model":"bart"}}
//! ```
//!
//! `pseudo_references`, `gold_reference` and `metadata` are optional. A pool
//! without pseudo-references reuses its candidates as the reference set and
//! carries `"pseudo_ref_fallback": "true"` in its metadata.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Metadata key set when pseudo-references were copied from the candidates.
pub const FALLBACK_KEY: &str = "pseudo_ref_fallback";

const KNOWN_KEYS: [&str; 6] = [
    "id",
    "source",
    "candidates",
    "pseudo_references",
    "gold_reference",
    "metadata",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub id: String,
    pub source: String,
    pub candidates: Vec<String>,
    pub pseudo_references: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_reference: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

/// Which list of a pool a truncation or sweep applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolRole {
    Candidates,
    PseudoReferences,
}

/// A broken pool invariant. Violations are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub rule: &'static str,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

impl CandidatePool {
    /// Builds a pool, applying the pseudo-reference fallback when `pseudo_references` is empty.
    pub fn new(
        id: impl Into<String>,
        source: impl Into<String>,
        candidates: Vec<String>,
        pseudo_references: Vec<String>,
    ) -> Self {
        let mut pool = Self {
            id: id.into(),
            source: source.into(),
            candidates,
            pseudo_references,
            gold_reference: None,
            metadata: BTreeMap::new(),
        };
        pool.apply_fallback();
        pool
    }

    pub fn with_gold(mut self, gold: impl Into<String>) -> Self {
        self.gold_reference = Some(gold.into());
        self
    }

    fn apply_fallback(&mut self) {
        if self.pseudo_references.is_empty() && !self.candidates.is_empty() {
            self.pseudo_references = self.candidates.clone();
            self.metadata.insert(FALLBACK_KEY.to_string(), "true".to_string());
        }
    }

    /// True when the pseudo-reference set was copied from the candidates.
    pub fn uses_fallback(&self) -> bool {
        self.metadata.get(FALLBACK_KEY).map(String::as_str) == Some("true")
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_pool(self)
    }

    /// Keeps the first `k` entries of one list. Returns the pool unchanged when `k`
    /// is at least the list length.
    ///
    /// On a fallback pool, truncating the candidates also truncates the reference
    /// set so the two stay the same set.
    pub fn truncated(&self, role: PoolRole, k: usize) -> CandidatePool {
        let mut pool = self.clone();
        match role {
            PoolRole::Candidates => {
                pool.candidates.truncate(k);
                if pool.uses_fallback() {
                    pool.pseudo_references.truncate(k);
                }
            }
            PoolRole::PseudoReferences => pool.pseudo_references.truncate(k),
        }
        pool
    }

    pub fn len_of(&self, role: PoolRole) -> usize {
        match role {
            PoolRole::Candidates => self.candidates.len(),
            PoolRole::PseudoReferences => self.pseudo_references.len(),
        }
    }
}

pub fn validate_pool(pool: &CandidatePool) -> Vec<Violation> {
    let mut out = Vec::new();
    if pool.id.is_empty() {
        out.push(Violation {
            field: "id",
            rule: "id non-empty",
        });
    }
    if pool.source.is_empty() {
        out.push(Violation {
            field: "source",
            rule: "source non-empty",
        });
    }
    if pool.candidates.is_empty() {
        out.push(Violation {
            field: "candidates",
            rule: "candidates non-empty",
        });
    }
    if pool.pseudo_references.is_empty() {
        out.push(Violation {
            field: "pseudo_references",
            rule: "pseudo_references non-empty",
        });
    }
    out
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: invalid pool: {violations}")]
    InvalidPool { line: usize, violations: String },
    #[error("duplicate pool id `{0}`")]
    DuplicateId(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Lines skipped or flagged while loading in non-strict mode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub skipped: Vec<SkippedLine>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

impl LoadReport {
    pub fn skipped_count(&self) -> usize {
        self.skipped.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub path: PathBuf,
    /// Seconds since the Unix epoch.
    pub loaded_at: u64,
}

/// An ordered, immutable set of pools with pairwise distinct ids.
#[derive(Debug, Clone)]
pub struct Corpus {
    pools: Vec<CandidatePool>,
    pub provenance: Provenance,
    pub report: LoadReport,
}

impl Corpus {
    /// Wraps in-memory pools. Fails on duplicate ids.
    pub fn from_pools(pools: Vec<CandidatePool>) -> Result<Self, PoolError> {
        let mut seen = HashSet::new();
        for p in &pools {
            if !seen.insert(p.id.as_str()) {
                return Err(PoolError::DuplicateId(p.id.clone()));
            }
        }
        Ok(Self {
            pools,
            provenance: Provenance {
                path: PathBuf::new(),
                loaded_at: now_secs(),
            },
            report: LoadReport::default(),
        })
    }

    pub fn pools(&self) -> &[CandidatePool] {
        &self.pools
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CandidatePool> {
        self.pools.iter().find(|p| p.id == id)
    }

    /// A new corpus with every pool truncated by [`CandidatePool::truncated`].
    pub fn truncated(&self, role: PoolRole, k: usize) -> Corpus {
        Corpus {
            pools: self.pools.iter().map(|p| p.truncated(role, k)).collect(),
            provenance: self.provenance.clone(),
            report: self.report.clone(),
        }
    }

    /// Applies optional candidate and pseudo-reference caps by prefix truncation.
    pub fn limited(&self, candidate_limit: Option<usize>, pseudo_ref_limit: Option<usize>) -> Corpus {
        let mut out = self.clone();
        if let Some(k) = candidate_limit {
            out = out.truncated(PoolRole::Candidates, k);
        }
        if let Some(k) = pseudo_ref_limit {
            out = out.truncated(PoolRole::PseudoReferences, k);
        }
        out
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Reads a pool file. See the module docs for the record format.
pub fn load_pools(path: impl AsRef<Path>, strict: bool) -> Result<Corpus, PoolError> {
    let path = path.as_ref();
    let io_err = |source| PoolError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut corpus = read_pools(BufReader::new(file), strict).map_err(|e| match e {
        PoolError::Io { source, .. } => io_err(source),
        other => other,
    })?;
    corpus.provenance.path = path.to_path_buf();
    Ok(corpus)
}

/// Same as [`load_pools`] over any buffered reader.
pub fn read_pools<R: BufRead>(reader: R, strict: bool) -> Result<Corpus, PoolError> {
    let mut pools = Vec::new();
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| PoolError::Io {
            path: PathBuf::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, line_no, strict, &mut report.warnings) {
            Ok(pool) => {
                if !seen.insert(pool.id.clone()) {
                    return Err(PoolError::DuplicateId(pool.id));
                }
                pools.push(pool);
            }
            Err(e) if !strict => {
                log::warn!("skipping {e}");
                report.skipped.push(SkippedLine {
                    line: line_no,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }

    Ok(Corpus {
        pools,
        provenance: Provenance {
            path: PathBuf::new(),
            loaded_at: now_secs(),
        },
        report,
    })
}

fn parse_line(
    line: &str,
    line_no: usize,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<CandidatePool, PoolError> {
    let malformed = |reason: String| PoolError::MalformedLine { line: line_no, reason };
    let obj: Map<String, Value> = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;

    if strict {
        for key in obj.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                let msg = format!("line {line_no}: unknown key `{key}` ignored");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let string_field = |name: &'static str| -> Result<String, PoolError> {
        match obj.get(name) {
            None | Some(Value::Null) => Err(PoolError::MissingField {
                line: line_no,
                field: name,
            }),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(malformed(format!("`{name}` must be a string"))),
        }
    };
    let string_list = |name: &'static str| -> Result<Option<Vec<String>>, PoolError> {
        match obj.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(malformed(format!("`{name}` must contain only strings"))),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(malformed(format!("`{name}` must be an array"))),
        }
    };

    let id = string_field("id")?;
    let source = string_field("source")?;
    let candidates = string_list("candidates")?.ok_or(PoolError::MissingField {
        line: line_no,
        field: "candidates",
    })?;
    let pseudo_references = string_list("pseudo_references")?.unwrap_or_default();
    let gold_reference = match obj.get("gold_reference") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(malformed("`gold_reference` must be a string".into())),
    };
    let metadata = match obj.get("metadata") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(Value::Object(m)) => m
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => Ok((k.clone(), s.clone())),
                _ => Err(malformed("`metadata` values must be strings".into())),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(malformed("`metadata` must be an object".into())),
    };

    let mut pool = CandidatePool {
        id,
        source,
        candidates,
        pseudo_references,
        gold_reference,
        metadata,
    };
    pool.apply_fallback();

    let violations = validate_pool(&pool);
    if !violations.is_empty() {
        let joined = violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        return Err(PoolError::InvalidPool {
            line: line_no,
            violations: joined,
        });
    }
    Ok(pool)
}

/// Writes pools one record per line, in order.
pub fn write_pools<W: Write>(mut writer: W, pools: &[CandidatePool]) -> io::Result<()> {
    for pool in pools {
        serde_json::to_writer(&mut writer, pool)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(s: &str, strict: bool) -> Result<Corpus, PoolError> {
        read_pools(s.as_bytes(), strict)
    }

    #[test]
    fn fallback_copies_candidates() {
        let c = load_str(r#"{"id":"p1","source":"a b","candidates":["a","b"]}"#, true).unwrap();
        assert_eq!(c.len(), 1);
        let p = &c.pools()[0];
        assert_eq!(p.pseudo_references, vec!["a", "b"]);
        assert_eq!(p.metadata.get(FALLBACK_KEY).unwrap(), "true");
        assert!(p.uses_fallback());
    }

    #[test]
    fn explicit_references_are_kept() {
        let c = load_str(
            r#"{"id":"p1","source":"s","candidates":["a"],"pseudo_references":["r1","r2"],"gold_reference":"g","metadata":{"model":"bart"}}"#,
            true,
        )
        .unwrap();
        let p = &c.pools()[0];
        assert_eq!(p.pseudo_references, vec!["r1", "r2"]);
        assert_eq!(p.gold_reference.as_deref(), Some("g"));
        assert!(!p.uses_fallback());
        assert_eq!(p.metadata.get("model").unwrap(), "bart");
    }

    #[test]
    fn missing_candidates_is_an_error_in_strict_mode() {
        let err = load_str(r#"{"id":"p1","source":"s"}"#, true).unwrap_err();
        assert!(matches!(
            err,
            PoolError::MissingField {
                line: 1,
                field: "candidates"
            }
        ));
    }

    #[test]
    fn missing_id_and_source() {
        let err = load_str(r#"{"source":"s","candidates":["a"]}"#, true).unwrap_err();
        assert!(matches!(err, PoolError::MissingField { field: "id", .. }));
        let err = load_str(r#"{"id":"x","candidates":["a"]}"#, true).unwrap_err();
        assert!(matches!(err, PoolError::MissingField { field: "source", .. }));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let input = "{\"id\":\"p1\",\"source\":\"s\",\"candidates\":[\"a\"]}\n{not json\n";
        let err = load_str(input, true).unwrap_err();
        assert!(matches!(err, PoolError::MalformedLine { line: 2, .. }));
    }

    #[test]
    fn non_strict_skips_and_counts() {
        let input = concat!(
            "{\"id\":\"p1\",\"source\":\"s\",\"candidates\":[\"a\"]}\n",
            "garbage\n",
            "{\"id\":\"p2\",\"source\":\"s\"}\n",
            "{\"id\":\"p3\",\"source\":\"s\",\"candidates\":[\"b\"]}\n",
        );
        let c = load_str(input, false).unwrap();
        let ids: Vec<_> = c.pools().iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, vec!["p1", "p3"]);
        assert_eq!(c.report.skipped_count(), 2);
        assert_eq!(c.report.skipped[0].line, 2);
        assert_eq!(c.report.skipped[1].line, 3);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let input = concat!(
            "{\"id\":\"p1\",\"source\":\"s\",\"candidates\":[\"a\"]}\n",
            "{\"id\":\"p1\",\"source\":\"t\",\"candidates\":[\"b\"]}\n",
        );
        let err = load_str(input, true).unwrap_err();
        assert!(matches!(err, PoolError::DuplicateId(id) if id == "p1"));
    }

    #[test]
    fn unknown_keys_warn_in_strict_mode() {
        let c = load_str(r#"{"id":"p1","source":"s","candidates":["a"],"score":3}"#, true).unwrap();
        assert_eq!(c.report.warnings.len(), 1);
        assert!(c.report.warnings[0].contains("score"));
    }

    #[test]
    fn empty_candidates_rejected() {
        let err = load_str(r#"{"id":"p1","source":"s","candidates":[]}"#, true).unwrap_err();
        assert!(matches!(err, PoolError::InvalidPool { .. }));
    }

    #[test]
    fn validate_reports_each_rule() {
        let valid = CandidatePool::new("p", "s", vec!["a".into()], vec![]);
        assert!(valid.validate().is_empty());

        let mut no_cands = valid.clone();
        no_cands.candidates.clear();
        let v = no_cands.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "candidates non-empty");

        let mut no_source = valid.clone();
        no_source.source.clear();
        let v = no_source.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "source non-empty");
    }

    #[test]
    fn duplicate_candidates_are_distinct_entries() {
        let c = load_str(r#"{"id":"p1","source":"s","candidates":["a","a","a"]}"#, true).unwrap();
        assert_eq!(c.pools()[0].candidates.len(), 3);
    }

    #[test]
    fn truncation_keeps_prefix() {
        let p = CandidatePool::new(
            "p",
            "s",
            vec!["a".into(), "b".into(), "c".into()],
            vec!["x".into(), "y".into()],
        );
        assert_eq!(p.truncated(PoolRole::Candidates, 2).candidates, vec!["a", "b"]);
        assert_eq!(p.truncated(PoolRole::PseudoReferences, 1).pseudo_references, vec!["x"]);
        assert_eq!(p.truncated(PoolRole::Candidates, 10), p);

        let fb = CandidatePool::new("q", "s", vec!["a".into(), "b".into()], vec![]);
        let t = fb.truncated(PoolRole::Candidates, 1);
        assert_eq!(t.pseudo_references, vec!["a"]);
    }
}
