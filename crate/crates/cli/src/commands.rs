use std::io::BufReader;
use std::path::Path;

use serde_json::json;
use sumrank::config::{label_for, ConsistencyChoice, RerankConfig};
use sumrank::eval::{
    candidate_features, correlation_matrix, evaluate_indices, evaluate_selections, iaa_summary, oracle_corpus,
    paired_bootstrap, subset_sweep, weight_sweep, AnnotationSet, BootstrapOptions, EvalReport, MetricEvaluator,
    MetricSpec, SweepReport, SystemEvaluation, SWEEP_SUBSET_SIZES, SWEEP_WEIGHTS,
};
use sumrank::pipeline::{select_all, Reranker};
use sumrank::pool::{load_pools, PoolRole};
use sumrank::rerank::{read_results, write_results, RerankResult};
use sumrank::Corpus;

use crate::error::CliError;
use crate::output::{Manifest, OutputSet};
use crate::{Axis, BootstrapArgs, Command, PoolArgs};

pub fn run(command: Command, workers: usize) -> Result<(), CliError> {
    match command {
        Command::Rerank { pools, config, out } => rerank(&pools, &config.resolve()?, &out, workers),
        Command::Oracle {
            pools,
            config,
            metric,
            out,
        } => oracle(&pools, &config.resolve()?, &metric, &out, workers),
        Command::Evaluate {
            pools,
            config,
            bootstrap,
            metrics,
            out,
            table,
        } => evaluate(
            &pools,
            &config.resolve()?,
            &bootstrap,
            &metrics,
            &out,
            table.as_deref(),
            workers,
        ),
        Command::Sweep {
            pools,
            config,
            axis,
            points,
            metrics,
            out,
            table,
        } => sweep(
            &pools,
            &config.resolve()?,
            axis,
            points.as_deref(),
            &metrics,
            &out,
            table.as_deref(),
            workers,
        ),
        Command::Significance {
            pools,
            config,
            bootstrap,
            a,
            b,
            metric,
            out,
        } => significance(&pools, &config.resolve()?, &bootstrap, &a, &b, &metric, &out, workers),
        Command::Iaa { annotations, out } => iaa(&annotations, &out),
        Command::Correlate {
            pools,
            config,
            weights,
            metrics,
            out,
        } => correlate(&pools, &config.resolve()?, weights.as_deref(), &metrics, &out, workers),
    }
}

fn load(args: &PoolArgs) -> Result<Corpus, CliError> {
    let corpus = load_pools(&args.pools, args.strict)?;
    let skipped = corpus.report.skipped_count();
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed lines", args.pools.display());
    }
    if corpus.is_empty() {
        return Err(CliError::data(
            "empty_corpus",
            format!("{}: no pools", args.pools.display()),
        ));
    }
    Ok(corpus)
}

fn metric_specs(list: &str) -> Result<Vec<MetricSpec>, CliError> {
    let specs = MetricSpec::parse_list(list)?;
    if specs.is_empty() {
        return Err(CliError::config("invalid_argument", "no metrics given"));
    }
    Ok(specs)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    let items = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<T>()
                .map_err(|e| CliError::config("invalid_argument", format!("{what} `{t}`: {e}")))
        })
        .collect::<Result<Vec<T>, _>>()?;
    if items.is_empty() {
        return Err(CliError::config("invalid_argument", format!("empty {what} list")));
    }
    Ok(items)
}

fn manifest(command: &str, cfg: &RerankConfig, extra: serde_json::Value) -> Manifest {
    let config = json!({ "rerank": cfg, "options": extra });
    Manifest::new(command, config, cfg.seed)
}

fn results_bytes(results: &[RerankResult]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_results(&mut buf, results).expect("writing to memory");
    buf
}

fn note_scorers(m: &mut Manifest, reranker: &Reranker) {
    let consistency = match reranker.config().consistency {
        ConsistencyChoice::SourceOverlap => Some(format!("builtin:source_overlap@{}", env!("CARGO_PKG_VERSION"))),
        ConsistencyChoice::External(_) => reranker.consistency_pool().identity(),
    };
    m.scorer("consistency", consistency);
    m.scorer("utility", reranker.utility_pool().identity());
}

fn write_table(out: &mut OutputSet, path: Option<&Path>, text: &str) {
    print!("{text}");
    if let Some(p) = path {
        out.add(p, text.as_bytes().to_vec());
    }
}

fn rerank(pools: &PoolArgs, cfg: &RerankConfig, out: &Path, workers: usize) -> Result<(), CliError> {
    let corpus = load(pools)?;
    let reranker = Reranker::from_config(cfg.clone(), workers)?;
    let results = reranker.rerank_corpus(&corpus)?;
    let mut m = manifest("rerank", cfg, json!({}));
    m.input(&pools.pools)?;
    note_scorers(&mut m, &reranker);
    let mut files = OutputSet::default();
    files.add(out, results_bytes(&results));
    files.commit_with_manifest(out, m)?;
    let ties = results.iter().filter(|r| r.tie_broken).count();
    log::info!("{}: {} pools reranked, {ties} ties", cfg.label(), results.len());
    Ok(())
}

fn oracle(pools: &PoolArgs, cfg: &RerankConfig, metric: &str, out: &Path, workers: usize) -> Result<(), CliError> {
    let corpus = load(pools)?.limited(cfg.candidate_limit, cfg.pseudo_ref_limit);
    let spec: MetricSpec = metric.parse()?;
    let ev = MetricEvaluator::from_config(vec![spec.clone()], cfg, workers)?;
    let table = ev.table(&corpus, workers)?;
    let results = oracle_corpus(&corpus, &table, 0)?;
    let summary = evaluate_selections(format!("oracle:{}", spec.name), &results, &table)?.summary()?;
    println!("oracle {}: {:.6}", spec.name, summary.means[0].mean);
    let mut m = manifest("oracle", cfg, json!({ "metric": spec.name }));
    m.input(&pools.pools)?;
    let mut files = OutputSet::default();
    files.add(out, results_bytes(&results));
    files.commit_with_manifest(out, m)
}

fn bootstrap_options(args: &BootstrapArgs, seed: u64) -> BootstrapOptions {
    BootstrapOptions {
        iterations: args.iterations,
        seed,
        alpha: args.alpha,
        comparisons: args.comparisons,
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    pools: &PoolArgs,
    cfg: &RerankConfig,
    bootstrap: &BootstrapArgs,
    metrics: &str,
    out: &Path,
    table_path: Option<&Path>,
    workers: usize,
) -> Result<(), CliError> {
    let specs = metric_specs(metrics)?;
    let corpus = load(pools)?;
    let reranker = Reranker::from_config(cfg.clone(), workers)?;
    let prepared = reranker.prepare(&corpus);
    let ev = MetricEvaluator::from_config(specs, cfg, workers)?;
    let table = ev.table(&prepared, workers)?;
    let scores = reranker.score_corpus(&prepared)?;

    let main = evaluate_selections(cfg.label(), &select_all(&prepared, &scores, cfg.weight)?, &table)?;
    let baselines = vec![
        evaluate_indices("first", &vec![0; prepared.len()], &table)?,
        evaluate_selections(
            label_for(&cfg.consistency, 0.0),
            &select_all(&prepared, &scores, 0.0)?,
            &table,
        )?,
        evaluate_selections(
            label_for(&cfg.consistency, 1.0),
            &select_all(&prepared, &scores, 1.0)?,
            &table,
        )?,
    ];
    let mut oracles = Vec::new();
    for (m, spec) in table.specs.iter().enumerate() {
        let sel = oracle_corpus(&prepared, &table, m)?;
        oracles.push(evaluate_selections(format!("oracle:{}", spec.name), &sel, &table)?);
    }

    let opts = bootstrap_options(bootstrap, cfg.seed);
    let mut significance = Vec::new();
    for base in &baselines {
        for (a, b) in main.columns.iter().zip(&base.columns) {
            significance.push(paired_bootstrap(&main.label, a, &base.label, b, opts)?);
        }
    }

    let mut systems: Vec<SystemEvaluation> = vec![main];
    systems.extend(baselines);
    systems.extend(oracles);
    let mut report = EvalReport::from_systems(&systems)?;
    report.significance = significance;

    let mut m = manifest(
        "evaluate",
        cfg,
        json!({ "metrics": metrics, "iterations": opts.iterations, "alpha": opts.alpha, "comparisons": opts.comparisons }),
    );
    m.input(&pools.pools)?;
    note_scorers(&mut m, &reranker);
    let mut files = OutputSet::default();
    files.add_json(out, &json!({ "report": report, "systems": systems }));
    write_table(&mut files, table_path, &report.render());
    files.commit_with_manifest(out, m)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    pools: &PoolArgs,
    cfg: &RerankConfig,
    axis: Axis,
    points: Option<&str>,
    metrics: &str,
    out: &Path,
    table_path: Option<&Path>,
    workers: usize,
) -> Result<(), CliError> {
    let specs = metric_specs(metrics)?;
    let corpus = load(pools)?;
    let reranker = Reranker::from_config(cfg.clone(), workers)?;
    let ev = MetricEvaluator::from_config(specs, cfg, workers)?;
    let report: SweepReport = match axis {
        Axis::Weight => {
            let weights = match points {
                Some(p) => parse_list::<f64>(p, "weight")?,
                None => SWEEP_WEIGHTS.to_vec(),
            };
            weight_sweep(&reranker, &corpus, &weights, &ev)?
        }
        Axis::Candidates | Axis::PseudoRefs => {
            let sizes = match points {
                Some(p) => parse_list::<usize>(p, "size")?,
                None => SWEEP_SUBSET_SIZES.to_vec(),
            };
            let role = match axis {
                Axis::Candidates => PoolRole::Candidates,
                _ => PoolRole::PseudoReferences,
            };
            subset_sweep(&reranker, &corpus, &sizes, role, &ev)?
        }
    };
    let mut m = manifest(
        "sweep",
        cfg,
        json!({ "axis": report.axis, "points": report.points, "metrics": metrics }),
    );
    m.input(&pools.pools)?;
    note_scorers(&mut m, &reranker);
    let mut files = OutputSet::default();
    files.add_json(out, &report);
    write_table(&mut files, table_path, &report.render());
    files.commit_with_manifest(out, m)
}

fn read_selections(path: &Path) -> Result<Vec<RerankResult>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::data("io", format!("{}: {e}", path.display())))?;
    read_results(BufReader::new(file)).map_err(|e| CliError::data("malformed_line", format!("{}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

#[allow(clippy::too_many_arguments)]
fn significance(
    pools: &PoolArgs,
    cfg: &RerankConfig,
    bootstrap: &BootstrapArgs,
    a: &Path,
    b: &Path,
    metric: &str,
    out: &Path,
    workers: usize,
) -> Result<(), CliError> {
    let spec: MetricSpec = metric.parse()?;
    let corpus = load(pools)?;
    let ev = MetricEvaluator::from_config(vec![spec], cfg, workers)?;
    let table = ev.table(&corpus, workers)?;
    let sys_a = evaluate_selections(stem(a), &read_selections(a)?, &table)?;
    let sys_b = evaluate_selections(stem(b), &read_selections(b)?, &table)?;
    let opts = bootstrap_options(bootstrap, cfg.seed);
    let report = paired_bootstrap(&sys_a.label, &sys_a.columns[0], &sys_b.label, &sys_b.columns[0], opts)?;
    println!(
        "{} vs {} on {}: p={} threshold={} significant={}",
        report.system_a,
        report.system_b,
        report.metric,
        report.p_value,
        report.threshold(),
        report.significant
    );
    let mut m = manifest(
        "significance",
        cfg,
        json!({ "metric": metric, "iterations": opts.iterations, "alpha": opts.alpha, "comparisons": opts.comparisons }),
    );
    for p in [pools.pools.as_path(), a, b] {
        m.input(p)?;
    }
    let mut files = OutputSet::default();
    files.add_json(out, &report);
    files.commit_with_manifest(out, m)
}

fn iaa(annotations: &Path, out: &Path) -> Result<(), CliError> {
    let set = AnnotationSet::load(annotations)?;
    let summary = iaa_summary(&set)?;
    match summary.mean_max_tau_b {
        Some(v) => println!("iaa (mean of max pairwise tau-b): {v:.6}"),
        None => println!("iaa: undefined (every sample dropped)"),
    }
    let mut m = Manifest::new("iaa", json!({}), 0);
    m.input(annotations)?;
    let mut files = OutputSet::default();
    files.add_json(out, &summary);
    files.commit_with_manifest(out, m)
}

fn correlate(
    pools: &PoolArgs,
    cfg: &RerankConfig,
    weights: Option<&str>,
    metrics: &str,
    out: &Path,
    workers: usize,
) -> Result<(), CliError> {
    let specs = metric_specs(metrics)?;
    let weights = match weights {
        Some(w) => parse_list::<f64>(w, "weight")?,
        None => vec![cfg.weight],
    };
    let corpus = load(pools)?;
    let reranker = Reranker::from_config(cfg.clone(), workers)?;
    let prepared = reranker.prepare(&corpus);
    let ev = MetricEvaluator::from_config(specs, cfg, workers)?;
    let table = ev.table(&prepared, workers)?;
    let scores = reranker.score_corpus(&prepared)?;
    let mut sets = Vec::with_capacity(weights.len());
    for &w in &weights {
        let tables = scores.iter().map(|s| s.table(w)).collect::<Result<Vec<_>, _>>()?;
        sets.push((label_for(&cfg.consistency, w), tables));
    }
    let features = candidate_features(&prepared, &sets, Some(&table))?;
    let matrix = correlation_matrix(&features)?;
    print!("{}", matrix.render());
    let mut m = manifest("correlate", cfg, json!({ "weights": weights, "metrics": metrics }));
    m.input(&pools.pools)?;
    note_scorers(&mut m, &reranker);
    let mut files = OutputSet::default();
    files.add_json(out, &matrix);
    files.commit_with_manifest(out, m)
}
