mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sumrank::config::{parse_limit, ConsistencyChoice, RerankConfig, UtilityChoice};
use sumrank::mbr::FailurePolicy;

use crate::error::CliError;

/// Rerank summary candidate pools and evaluate the selections.
#[derive(Debug, Parser)]
#[command(name = "sumrank", version)]
struct Cli {
    /// Worker threads for pool-level parallelism. Output does not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// A count, or `none` for no limit.
#[derive(Debug, Clone, Copy)]
struct Limit(Option<usize>);

impl std::str::FromStr for Limit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_limit(s).map(Limit)
    }
}

/// Configuration file plus per-field overrides.
#[derive(Debug, Args, Clone, Default)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Combination weight w in [0, 1].
    #[arg(long)]
    weight: Option<f64>,
    /// rouge_1, rouge_2, rouge_l or external:<name>.
    #[arg(long)]
    utility: Option<UtilityChoice>,
    /// source_overlap or external:<name>.
    #[arg(long)]
    consistency: Option<ConsistencyChoice>,
    /// Candidate prefix length, or `none`.
    #[arg(long)]
    candidate_limit: Option<Limit>,
    /// Pseudo-reference prefix length, or `none`.
    #[arg(long)]
    pseudo_ref_limit: Option<Limit>,
    #[arg(long)]
    seed: Option<u64>,
    /// abort or exclude-candidate.
    #[arg(long)]
    failure_policy: Option<FailurePolicy>,
    /// Per-batch scorer timeout in seconds.
    #[arg(long)]
    scorer_timeout: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RerankConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::config("config_read", format!("{}: {e}", path.display())))?;
                RerankConfig::from_toml(&text)?
            }
            None => RerankConfig::default(),
        };
        if let Some(w) = self.weight {
            cfg.weight = w;
        }
        if let Some(u) = &self.utility {
            cfg.utility = u.clone();
        }
        if let Some(c) = &self.consistency {
            cfg.consistency = c.clone();
        }
        if let Some(Limit(l)) = self.candidate_limit {
            cfg.candidate_limit = l;
        }
        if let Some(Limit(l)) = self.pseudo_ref_limit {
            cfg.pseudo_ref_limit = l;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.failure_policy {
            cfg.failure_policy = p;
        }
        if let Some(t) = self.scorer_timeout {
            cfg.scorer_timeout_secs = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Clone)]
struct PoolArgs {
    /// Pool file, one JSON record per line.
    #[arg(long)]
    pools: PathBuf,
    /// Fail on malformed lines instead of skipping them.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args, Clone)]
struct BootstrapArgs {
    #[arg(long, default_value_t = 10_000)]
    iterations: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bonferroni comparison count.
    #[arg(long, default_value_t = 3)]
    comparisons: usize,
}

const DEFAULT_METRICS: &str = "rouge_1,rouge_2,rouge_l,source_overlap";

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    Weight,
    Candidates,
    PseudoRefs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select one candidate per pool.
    Rerank {
        #[command(flatten)]
        pools: PoolArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Selections, one JSON record per pool.
        #[arg(long)]
        out: PathBuf,
    },
    /// Select the candidate maximizing a metric in every pool.
    Oracle {
        #[command(flatten)]
        pools: PoolArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        metric: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus means for the configured system, baselines and oracles, with
    /// significance against each baseline.
    Evaluate {
        #[command(flatten)]
        pools: PoolArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        bootstrap: BootstrapArgs,
        /// Comma-separated metrics.
        #[arg(long, default_value = DEFAULT_METRICS)]
        metrics: String,
        /// JSON report.
        #[arg(long)]
        out: PathBuf,
        /// Optional plain-text table.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Rerank across weights or subset sizes.
    Sweep {
        #[command(flatten)]
        pools: PoolArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated points; defaults to 0,0.25,0.5,0.75,1 or 1,4,8,16,32,64.
        #[arg(long)]
        points: Option<String>,
        #[arg(long, default_value = DEFAULT_METRICS)]
        metrics: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Paired bootstrap between two selection files on one metric.
    Significance {
        #[command(flatten)]
        pools: PoolArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        bootstrap: BootstrapArgs,
        /// Selections of system A (the one claimed better).
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inter-annotator agreement (max pairwise Kendall tau-b, averaged).
    Iaa {
        /// Annotation records, one JSON object per line.
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Candidate-level Pearson correlations between s_fin, metrics and lengths.
    Correlate {
        #[command(flatten)]
        pools: PoolArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated weights for s_fin columns; defaults to the configured weight.
        #[arg(long)]
        weights: Option<String>,
        #[arg(long, default_value = DEFAULT_METRICS)]
        metrics: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        eprintln!(
            "{}",
            CliError::config("invalid_argument", "--workers must be at least 1")
        );
        return ExitCode::from(2);
    }
    match commands::run(cli.command, workers) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
