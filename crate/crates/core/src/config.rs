//! Run configuration.
//!
//! Loaded from a TOML document; every field has a default, so an empty file
//! (or no file at all) gives 16 candidates, 64 pseudo-references, `w = 0.75`,
//! ROUGE-1 utility and source-overlap consistency.
//!
//! ```toml
//! weight = 0.75
//! utility = "external:nli"
//! consistency = "source_overlap"
//! candidate_limit = 16
//! pseudo_ref_limit = "none"
//! failure_policy = "exclude-candidate"
//!
//! [scorers.nli]
//! command = "python"
//! args = ["-m", "nli_adapter"]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexical::LexicalMetric;
use crate::mbr::FailurePolicy;
use crate::rerank::DEFAULT_WEIGHT;
use crate::scorer::ProcessSpec;

pub const DEFAULT_CANDIDATE_LIMIT: usize = 16;
pub const DEFAULT_PSEUDO_REF_LIMIT: usize = 64;

/// Environment variable prefix for external scorer commands:
/// `SUMRANK_SCORER_<NAME>` names the command for `external:<name>`.
pub const SCORER_ENV_PREFIX: &str = "SUMRANK_SCORER_";
/// Fallback command for any external scorer without a more specific entry.
pub const SCORER_ENV_DEFAULT: &str = "SUMRANK_SCORER_PATH";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("weight {0} outside [0, 1]")]
    WeightOutOfRange(String),
    #[error("`{0}` must be at least 1")]
    ZeroLimit(&'static str),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("no command configured for external scorer `{0}` (add [scorers.{0}] or set {SCORER_ENV_PREFIX}<NAME>)")]
    UnknownScorer(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

/// Utility function for consensus scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum UtilityChoice {
    Lexical(LexicalMetric),
    External(String),
}

impl Default for UtilityChoice {
    fn default() -> Self {
        UtilityChoice::Lexical(LexicalMetric::Rouge1)
    }
}

impl FromStr for UtilityChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(name) = s.strip_prefix("external:") {
            if name.is_empty() {
                return Err("external scorer name is empty".into());
            }
            return Ok(UtilityChoice::External(name.to_string()));
        }
        s.parse().map(UtilityChoice::Lexical)
    }
}

impl TryFrom<String> for UtilityChoice {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<UtilityChoice> for String {
    fn from(c: UtilityChoice) -> String {
        c.to_string()
    }
}

impl fmt::Display for UtilityChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UtilityChoice::Lexical(m) => f.write_str(m.name()),
            UtilityChoice::External(n) => write!(f, "external:{n}"),
        }
    }
}

/// Reference-free scorer for source consistency.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ConsistencyChoice {
    #[default]
    SourceOverlap,
    External(String),
}

impl ConsistencyChoice {
    /// Short name used in `Scorer-w` labels.
    pub fn short_name(&self) -> &str {
        match self {
            ConsistencyChoice::SourceOverlap => "source_overlap",
            ConsistencyChoice::External(n) => n,
        }
    }
}

impl FromStr for ConsistencyChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source_overlap" => Ok(ConsistencyChoice::SourceOverlap),
            _ => match s.strip_prefix("external:") {
                Some(name) if !name.is_empty() => Ok(ConsistencyChoice::External(name.to_string())),
                _ => Err(format!("unknown consistency scorer `{s}`")),
            },
        }
    }
}

impl TryFrom<String> for ConsistencyChoice {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ConsistencyChoice> for String {
    fn from(c: ConsistencyChoice) -> String {
        c.to_string()
    }
}

impl fmt::Display for ConsistencyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConsistencyChoice::SourceOverlap => f.write_str("source_overlap"),
            ConsistencyChoice::External(n) => write!(f, "external:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalScorerConfig {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
}

/// Optional count: a positive integer, or `"none"` for no limit.
mod limit {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(n) => s.serialize_u64(*n as u64),
            None => s.serialize_str("none"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(Some(n as usize)),
            Raw::Str(s) if s == "none" => Ok(None),
            Raw::Str(s) => Err(de::Error::custom(format!("expected a count or \"none\", got `{s}`"))),
        }
    }
}

pub fn parse_limit(s: &str) -> Result<Option<usize>, String> {
    if s == "none" {
        return Ok(None);
    }
    s.parse::<usize>()
        .map(Some)
        .map_err(|_| format!("expected a count or `none`, got `{s}`"))
}

fn default_weight() -> f64 {
    DEFAULT_WEIGHT
}
fn default_candidate_limit() -> Option<usize> {
    Some(DEFAULT_CANDIDATE_LIMIT)
}
fn default_pseudo_ref_limit() -> Option<usize> {
    Some(DEFAULT_PSEUDO_REF_LIMIT)
}
fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankConfig {
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default)]
    pub utility: UtilityChoice,
    #[serde(default, alias = "consistency_scorer")]
    pub consistency: ConsistencyChoice,
    #[serde(default = "default_candidate_limit", with = "limit")]
    pub candidate_limit: Option<usize>,
    #[serde(default = "default_pseudo_ref_limit", with = "limit")]
    pub pseudo_ref_limit: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub failure_policy: FailurePolicy,
    #[serde(default = "default_timeout")]
    pub scorer_timeout_secs: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scorers: BTreeMap<String, ExternalScorerConfig>,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self {
            weight: DEFAULT_WEIGHT,
            utility: UtilityChoice::default(),
            consistency: ConsistencyChoice::default(),
            candidate_limit: default_candidate_limit(),
            pseudo_ref_limit: default_pseudo_ref_limit(),
            seed: 0,
            failure_policy: FailurePolicy::default(),
            scorer_timeout_secs: default_timeout(),
            scorers: BTreeMap::new(),
        }
    }
}

impl RerankConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RerankConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(ConfigError::WeightOutOfRange(self.weight.to_string()));
        }
        if self.candidate_limit == Some(0) {
            return Err(ConfigError::ZeroLimit("candidate_limit"));
        }
        if self.pseudo_ref_limit == Some(0) {
            return Err(ConfigError::ZeroLimit("pseudo_ref_limit"));
        }
        if self.scorer_timeout_secs == 0 {
            return Err(ConfigError::Invalid {
                field: "scorer_timeout_secs",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.scorer_timeout_secs)
    }

    /// Report label in `Scorer-w` form: `source_overlap-0.75`, `source_overlap-0.0`,
    /// and `MBR-1.0` for the consensus-only setting.
    pub fn label(&self) -> String {
        label_for(&self.consistency, self.weight)
    }

    /// Command for `external:<name>`: the `[scorers.<name>]` table, then
    /// `SUMRANK_SCORER_<NAME>`, then `SUMRANK_SCORER_PATH`.
    pub fn resolve_external(&self, name: &str) -> Result<ProcessSpec, ConfigError> {
        if let Some(s) = self.scorers.get(name) {
            return Ok(ProcessSpec::new(s.command.clone()).args(s.args.iter().cloned()));
        }
        let specific = format!("{SCORER_ENV_PREFIX}{}", env_suffix(name));
        for var in [specific.as_str(), SCORER_ENV_DEFAULT] {
            if let Ok(cmd) = std::env::var(var) {
                let mut parts = cmd.split_whitespace();
                if let Some(program) = parts.next() {
                    return Ok(ProcessSpec::new(program).args(parts));
                }
            }
        }
        Err(ConfigError::UnknownScorer(name.to_string()))
    }
}

pub fn label_for(consistency: &ConsistencyChoice, weight: f64) -> String {
    let w = if weight.fract() == 0.0 {
        format!("{weight:.1}")
    } else {
        format!("{weight}")
    };
    if weight == 1.0 {
        format!("MBR-{w}")
    } else {
        format!("{}-{w}", consistency.short_name())
    }
}

fn env_suffix(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect()
}
