//! Pool-level orchestration: score every pool with the configured consistency
//! and utility scorers, then combine and select.
//!
//! Pools are processed in parallel on a dedicated thread pool of `workers`
//! threads. Each pool's scores depend only on that pool, and results are
//! collected in input order, so output is identical for any worker count.

use std::collections::BTreeSet;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ConsistencyChoice, RerankConfig, UtilityChoice};
use crate::lexical::LexicalMetric;
use crate::mbr::{consensus_scores, utility_matrix, FailurePolicy, MbrError};
use crate::pool::{CandidatePool, Corpus};
use crate::rerank::{select_best, RerankError, RerankResult, ScoreTable};
use crate::scorer::{
    score_batch, LexicalScorer, ProcessScorer, ProcessSpec, ScoreMode, ScoreRequest, Scorer, ScorerError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Mbr(#[from] MbrError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error("pool `{pool}`: consistency failed for candidate {candidate}: {error}")]
    ConsistencyFailed {
        pool: String,
        candidate: usize,
        error: String,
    },
    #[error("failed to build worker pool: {0}")]
    Threads(String),
}

type Factory = dyn Fn() -> Result<Box<dyn Scorer>, ScorerError> + Send + Sync;

struct PoolState {
    idle: Vec<Box<dyn Scorer>>,
    live: usize,
    identity: Option<String>,
}

/// A set of interchangeable scorer instances shared by worker threads.
///
/// Each batch checks out one instance, so a single external process never sees
/// interleaved batches. At most `capacity` instances exist at once.
pub struct ScorerPool {
    factory: Box<Factory>,
    capacity: usize,
    state: Mutex<PoolState>,
    freed: Condvar,
}

impl std::fmt::Debug for ScorerPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScorerPool").field("capacity", &self.capacity).finish()
    }
}

impl ScorerPool {
    pub fn new<F>(capacity: usize, factory: F) -> Self
    where
        F: Fn() -> Result<Box<dyn Scorer>, ScorerError> + Send + Sync + 'static,
    {
        Self {
            factory: Box::new(factory),
            capacity: capacity.max(1),
            state: Mutex::new(PoolState {
                idle: Vec::new(),
                live: 0,
                identity: None,
            }),
            freed: Condvar::new(),
        }
    }

    /// Built-in lexical scorers; cheap, so capacity is effectively unbounded.
    pub fn lexical(metric: LexicalMetric) -> Self {
        Self::new(usize::MAX, move || {
            Ok(Box::new(LexicalScorer::new(metric)) as Box<dyn Scorer>)
        })
    }

    /// Up to `capacity` copies of one external process.
    pub fn process(spec: ProcessSpec, capacity: usize, handshake_timeout: Duration) -> Self {
        Self::new(capacity, move || {
            ProcessScorer::spawn(&spec, handshake_timeout).map(|s| Box::new(s) as Box<dyn Scorer>)
        })
    }

    /// `name@version` of the scorer, once one instance has been opened.
    pub fn identity(&self) -> Option<String> {
        self.state.lock().expect("scorer pool lock").identity.clone()
    }

    /// Opens an instance eagerly, surfacing startup failures early.
    pub fn warm_up(&self) -> Result<String, ScorerError> {
        self.with(|s| s.handle().identity())
    }

    pub fn with<R>(&self, f: impl FnOnce(&mut dyn Scorer) -> R) -> Result<R, ScorerError> {
        let mut scorer = self.checkout()?;
        let out = f(scorer.as_mut());
        self.checkin(scorer);
        Ok(out)
    }

    fn checkout(&self) -> Result<Box<dyn Scorer>, ScorerError> {
        let mut st = self.state.lock().expect("scorer pool lock");
        loop {
            if let Some(s) = st.idle.pop() {
                return Ok(s);
            }
            if st.live < self.capacity {
                st.live += 1;
                drop(st);
                let opened = (self.factory)();
                let mut st = self.state.lock().expect("scorer pool lock");
                return match opened {
                    Ok(s) => {
                        st.identity.get_or_insert_with(|| s.handle().identity());
                        Ok(s)
                    }
                    Err(e) => {
                        st.live -= 1;
                        self.freed.notify_one();
                        Err(e)
                    }
                };
            }
            st = self.freed.wait(st).expect("scorer pool lock");
        }
    }

    fn checkin(&self, scorer: Box<dyn Scorer>) {
        let mut st = self.state.lock().expect("scorer pool lock");
        if scorer.is_usable() {
            st.idle.push(scorer);
        } else {
            st.live -= 1;
        }
        self.freed.notify_one();
    }
}

/// Raw per-candidate scores for one pool, independent of the weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolScores {
    pub pool_id: String,
    pub raw_sis: Vec<f64>,
    pub raw_sen: Vec<f64>,
    pub excluded: BTreeSet<usize>,
}

impl PoolScores {
    pub fn table(&self, weight: f64) -> Result<ScoreTable, RerankError> {
        ScoreTable::build(
            self.pool_id.clone(),
            self.raw_sis.clone(),
            self.raw_sen.clone(),
            weight,
            self.excluded.clone(),
        )
    }

    pub fn select(&self, pool: &CandidatePool, weight: f64) -> Result<RerankResult, RerankError> {
        select_best(pool, self.table(weight)?)
    }
}

fn build_pool(
    config: &RerankConfig,
    choice_external: Option<&str>,
    lexical: LexicalMetric,
    workers: usize,
) -> Result<ScorerPool, ConfigError> {
    Ok(match choice_external {
        None => ScorerPool::lexical(lexical),
        Some(name) => ScorerPool::process(config.resolve_external(name)?, workers, config.timeout()),
    })
}

/// Scores and reranks pools under one configuration.
#[derive(Debug)]
pub struct Reranker {
    config: RerankConfig,
    consistency: Arc<ScorerPool>,
    utility: Arc<ScorerPool>,
    workers: usize,
}

impl Reranker {
    /// Builds scorer pools from the configuration. External scorers start lazily.
    pub fn from_config(config: RerankConfig, workers: usize) -> Result<Self, PipelineError> {
        config.validate()?;
        let workers = workers.max(1);
        let utility_metric = match &config.utility {
            UtilityChoice::Lexical(m) => *m,
            UtilityChoice::External(_) => LexicalMetric::Rouge1,
        };
        let utility_ext = match &config.utility {
            UtilityChoice::External(n) => Some(n.as_str()),
            UtilityChoice::Lexical(_) => None,
        };
        let consistency_ext = match &config.consistency {
            ConsistencyChoice::External(n) => Some(n.as_str()),
            ConsistencyChoice::SourceOverlap => None,
        };
        let utility = build_pool(&config, utility_ext, utility_metric, workers)?;
        let consistency = build_pool(&config, consistency_ext, LexicalMetric::Rouge1, workers)?;
        Ok(Self::with_pools(
            config,
            Arc::new(consistency),
            Arc::new(utility),
            workers,
        ))
    }

    pub fn with_pools(
        config: RerankConfig,
        consistency: Arc<ScorerPool>,
        utility: Arc<ScorerPool>,
        workers: usize,
    ) -> Self {
        Self {
            config,
            consistency,
            utility,
            workers: workers.max(1),
        }
    }

    pub fn config(&self) -> &RerankConfig {
        &self.config
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn consistency_pool(&self) -> &ScorerPool {
        &self.consistency
    }

    pub fn utility_pool(&self) -> &ScorerPool {
        &self.utility
    }

    /// Applies the configured candidate and pseudo-reference limits.
    pub fn prepare(&self, corpus: &Corpus) -> Corpus {
        corpus.limited(self.config.candidate_limit, self.config.pseudo_ref_limit)
    }

    /// Consistency score per candidate, with failures handled by the policy.
    fn consistency_scores(&self, pool: &CandidatePool) -> Result<(Vec<f64>, BTreeSet<usize>), PipelineError> {
        let requests: Vec<ScoreRequest> = pool
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| ScoreRequest::new(format!("c:{i}"), ScoreMode::Consistency, pool.source.clone(), c.clone()))
            .collect();
        let timeout = self.config.timeout();
        let responses = self.consistency.with(|s| score_batch(s, &requests, timeout))??;
        let mut excluded = BTreeSet::new();
        let mut scores = Vec::with_capacity(responses.len());
        for (i, r) in responses.into_iter().enumerate() {
            match r.result {
                Ok(v) => scores.push(v),
                Err(error) => match self.config.failure_policy {
                    FailurePolicy::Abort => {
                        return Err(PipelineError::ConsistencyFailed {
                            pool: pool.id.clone(),
                            candidate: i,
                            error,
                        })
                    }
                    FailurePolicy::ExcludeCandidate => {
                        log::warn!(
                            "pool `{}`: excluding candidate {i}: consistency failed: {error}",
                            pool.id
                        );
                        scores.push(f64::NAN);
                        excluded.insert(i);
                    }
                },
            }
        }
        Ok((scores, excluded))
    }

    /// Raw consistency and consensus scores for one pool, as given (no limits applied).
    pub fn score_pool(&self, pool: &CandidatePool) -> Result<PoolScores, PipelineError> {
        let (raw_sis, mut excluded) = self.consistency_scores(pool)?;
        let policy = self.config.failure_policy;
        let timeout = self.config.timeout();
        let matrix = self.utility.with(|s| utility_matrix(pool, s, policy, timeout))??;
        excluded.extend(matrix.failed_rows().iter().copied());
        let raw_sen = consensus_scores(&matrix).scores;
        Ok(PoolScores {
            pool_id: pool.id.clone(),
            raw_sis,
            raw_sen,
            excluded,
        })
    }

    /// Runs `f` over every pool on `workers` threads, keeping input order.
    pub fn map_pools<T, F>(&self, pools: &[CandidatePool], f: F) -> Result<Vec<T>, PipelineError>
    where
        T: Send,
        F: Fn(&CandidatePool) -> Result<T, PipelineError> + Sync,
    {
        map_ordered(self.workers, pools, f)
    }

    /// Scores every pool of an already-prepared corpus.
    pub fn score_corpus(&self, corpus: &Corpus) -> Result<Vec<PoolScores>, PipelineError> {
        self.map_pools(corpus.pools(), |p| self.score_pool(p))
    }

    /// Applies limits, scores, and selects at the configured weight.
    pub fn rerank_corpus(&self, corpus: &Corpus) -> Result<Vec<RerankResult>, PipelineError> {
        let prepared = self.prepare(corpus);
        let scores = self.score_corpus(&prepared)?;
        select_all(&prepared, &scores, self.config.weight)
    }
}

/// Maps `f` over `items` on a pool of `workers` threads. Results keep input
/// order; the first error in input order is returned.
pub fn map_ordered<I, T, E, F>(workers: usize, items: &[I], f: F) -> Result<Vec<T>, E>
where
    I: Sync,
    T: Send,
    E: Send + From<PipelineError>,
    F: Fn(&I) -> Result<T, E> + Sync,
{
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| E::from(PipelineError::Threads(e.to_string())))?;
    let results: Vec<Result<T, E>> = threads.install(|| items.par_iter().map(&f).collect());
    results.into_iter().collect()
}

/// Selects in every pool at weight `w` from precomputed scores.
pub fn select_all(corpus: &Corpus, scores: &[PoolScores], weight: f64) -> Result<Vec<RerankResult>, PipelineError> {
    corpus
        .pools()
        .iter()
        .zip(scores)
        .map(|(p, s)| s.select(p, weight).map_err(PipelineError::from))
        .collect()
}
