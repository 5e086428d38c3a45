use std::fmt;

use sumrank::config::ConfigError;
use sumrank::eval::EvalError;
use sumrank::mbr::MbrError;
use sumrank::pipeline::PipelineError;
use sumrank::pool::PoolError;
use sumrank::rerank::RerankError;
use sumrank::scorer::ScorerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Data,
    Config,
}

/// A failure with an exit class and a stable machine-readable code.
#[derive(Debug)]
pub struct CliError {
    pub class: Class,
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            class: Class::Config,
            code,
            message: message.into(),
        }
    }

    pub fn data(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            class: Class::Data,
            code,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.class {
            Class::Data => 1,
            Class::Config => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::WeightOutOfRange(_) => "weight_out_of_range",
            ConfigError::ZeroLimit(_) => "zero_limit",
            ConfigError::UnknownScorer(_) => "unknown_scorer",
            ConfigError::Parse(_) => "config_parse",
            _ => "config_invalid",
        };
        CliError::config(code, e.to_string())
    }
}

impl From<PoolError> for CliError {
    fn from(e: PoolError) -> Self {
        let code = match e {
            PoolError::MalformedLine { .. } => "malformed_line",
            PoolError::MissingField { .. } => "missing_field",
            PoolError::InvalidPool { .. } => "invalid_pool",
            PoolError::DuplicateId(_) => "duplicate_id",
            PoolError::Io { .. } => "io",
        };
        CliError::data(code, e.to_string())
    }
}

impl From<ScorerError> for CliError {
    fn from(e: ScorerError) -> Self {
        match e {
            ScorerError::UnsupportedMode { .. } => CliError::config("unsupported_mode", e.to_string()),
            ScorerError::Spawn { .. } => CliError::config("scorer_spawn", e.to_string()),
            ScorerError::Timeout { .. } => CliError::data("scorer_timeout", e.to_string()),
            ScorerError::Crashed { .. } => CliError::data("scorer_crashed", e.to_string()),
            ScorerError::ProtocolViolation { .. } => CliError::data("protocol_violation", e.to_string()),
            ScorerError::DuplicateRequestId(_) => CliError::data("duplicate_request_id", e.to_string()),
            ScorerError::Poisoned(_) => CliError::data("scorer_poisoned", e.to_string()),
        }
    }
}

impl From<RerankError> for CliError {
    fn from(e: RerankError) -> Self {
        match e {
            RerankError::WeightOutOfRange(_) => CliError::config("weight_out_of_range", e.to_string()),
            RerankError::AllExcluded(_) => CliError::data("all_excluded", e.to_string()),
            _ => CliError::data("score_invalid", e.to_string()),
        }
    }
}

impl From<MbrError> for CliError {
    fn from(e: MbrError) -> Self {
        match e {
            MbrError::Scorer(s) => s.into(),
            MbrError::CellFailed { .. } => CliError::data("utility_failed", e.to_string()),
            _ => CliError::data("mbr_invalid", e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => c.into(),
            PipelineError::Scorer(s) => s.into(),
            PipelineError::Mbr(m) => m.into(),
            PipelineError::Rerank(r) => r.into(),
            PipelineError::ConsistencyFailed { .. } => CliError::data("consistency_failed", e.to_string()),
            PipelineError::Threads(_) => CliError::data("threads", e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Scorer(s) => s.into(),
            EvalError::Pipeline(p) => p.into(),
            EvalError::Rerank(r) => r.into(),
            EvalError::UnknownMetric(_) => CliError::config("unknown_metric", e.to_string()),
            EvalError::Invalid(_) => CliError::config("invalid_argument", e.to_string()),
            EvalError::MissingGoldReference { .. } => CliError::data("missing_gold_reference", e.to_string()),
            EvalError::InsufficientAnnotators(_) => CliError::data("insufficient_annotators", e.to_string()),
            EvalError::MalformedRecord { .. } => CliError::data("malformed_line", e.to_string()),
            EvalError::Io(_) => CliError::data("io", e.to_string()),
            _ => CliError::data("eval_failed", e.to_string()),
        }
    }
}
