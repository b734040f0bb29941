//! Command-line front end: build graph snapshots from a corpus, answer
//! queries against them, score answers, inspect graph structure, and run
//! the numeric checks behind the retrieval design.
//!
//! Exit codes: 0 success, 1 usage error, 2 pipeline failure, 3 numeric
//! check failure.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use aegraph::config::{BackendKind, EncoderKind, RunConfig};
use aegraph::encoder::{NgramHashEncoder, RemoteEncoder, TextEncoder};
use aegraph::error::{Error, Result};
use aegraph::evaluator::{self, EvaluationReport, QueryEvaluation};
use aegraph::gateway::{
    LlmGateway, MockBackend, RemoteBackend, RemoteConfig, TemplateRegistry, UsageTotals,
};
use aegraph::graph::{snapshot, compute_stats, GraphStats};
use aegraph::ingest::{build_graph, read_corpus_dir, BuildReport};
use aegraph::pipeline::{QueryEngine, QueryRecord};
use aegraph::theory::{self, TheoryRunOptions};

#[derive(Parser)]
#[command(name = "aeg", version, about = "Atom-entity graph retrieval engine")]
struct Cli {
    /// Config file in key = value form. Flags beat AEG_* environment
    /// variables, which beat the file, which beats built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Model backend: mock or remote.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Propagation strategy: ppr, power_iteration, rwr, katz,
    /// label_propagation, or weighted_bfs.
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Atoms kept per effective query.
    #[arg(long, global = true, value_name = "K")]
    top_k: Option<usize>,
    /// Seed for every stochastic component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Token budget for assembled evidence context.
    #[arg(long, global = true, value_name = "N")]
    budget_tokens: Option<usize>,
    /// Answer style: abstract or precise.
    #[arg(long, global = true)]
    mode: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a graph snapshot from a directory of .txt documents.
    Index {
        /// Directory of input documents; the file stem is the document id.
        #[arg(long)]
        corpus: PathBuf,
        /// Snapshot output directory; also receives build_report.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer queries against a snapshot, one JSON record per line.
    Query {
        #[arg(long)]
        snapshot: PathBuf,
        #[command(flatten)]
        input: QueryInput,
        /// Output path for the records; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score answered queries against reference answers.
    Eval {
        /// Query records as produced by the query command.
        #[arg(long)]
        results: PathBuf,
        /// Lines of {"query": ..., "reference": ...}.
        #[arg(long)]
        references: PathBuf,
        /// Output path for the full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print structure statistics for a snapshot.
    Stats {
        #[arg(long)]
        snapshot: PathBuf,
        /// Emit JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Run the numeric verification suite for the retrieval analysis.
    TheoryCheck {
        /// Monte-Carlo trials per misranking instance.
        #[arg(long)]
        trials: Option<usize>,
        /// Output path for the full report with numeric grids as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct QueryInput {
    /// A single query.
    #[arg(long)]
    query: Option<String>,
    /// File with one query per line; blank lines are skipped.
    #[arg(long)]
    query_file: Option<PathBuf>,
}

/// Dying quietly on a closed pipe (`aeg stats | head`) beats a panic from
/// the default ignored-SIGPIPE state Rust starts with.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(v) = &cli.backend {
        config.set("backend", v)?;
    }
    if let Some(v) = &cli.strategy {
        config.set("propagation_method", v)?;
    }
    if let Some(v) = cli.top_k {
        config.set("retrieval_top_k", &v.to_string())?;
    }
    if let Some(v) = cli.seed {
        config.set("seed", &v.to_string())?;
    }
    if let Some(v) = cli.budget_tokens {
        config.set("context_budget_tokens", &v.to_string())?;
    }
    if let Some(v) = &cli.mode {
        config.set("answer_mode", v)?;
    }
    config.validate()?;

    match cli.command {
        Command::Index { corpus, out } => {
            cmd_index(&config, &corpus, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Query {
            snapshot,
            input,
            out,
        } => {
            cmd_query(&config, &snapshot, input, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            results,
            references,
            out,
        } => {
            cmd_eval(&config, &results, &references, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats { snapshot, json } => {
            cmd_stats(&snapshot, json)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::TheoryCheck { trials, out } => cmd_theory_check(&config, trials, out.as_deref()),
    }
}

fn build_gateway(config: &RunConfig) -> Result<LlmGateway> {
    match config.backend {
        BackendKind::Mock => {
            if config.fixtures_path.is_empty() {
                return Err(Error::config(
                    "mock backend needs fixtures_path pointing at a fixture file",
                ));
            }
            let backend = MockBackend::from_file(Path::new(&config.fixtures_path))?;
            Ok(LlmGateway::mock(backend))
        }
        BackendKind::Remote => {
            let backend = RemoteBackend::new(RemoteConfig {
                endpoint: config.llm_endpoint.clone(),
                model: config.llm_model.clone(),
                api_key: (!config.llm_api_key.is_empty()).then(|| config.llm_api_key.clone()),
                ..RemoteConfig::default()
            })?;
            Ok(LlmGateway::new(
                TemplateRegistry::builtin(),
                Box::new(backend),
                LlmGateway::DEFAULT_MAX_IN_FLIGHT,
            ))
        }
    }
}

fn build_encoder(config: &RunConfig) -> Result<Box<dyn TextEncoder>> {
    match config.encoder {
        EncoderKind::Ngram => Ok(Box::new(NgramHashEncoder::new(
            config.encoder_dimension,
            NgramHashEncoder::DEFAULT_SEED,
        )?)),
        EncoderKind::Remote => Ok(Box::new(RemoteEncoder::new(
            config.encoder_endpoint.clone(),
            (!config.encoder_auth_token.is_empty()).then(|| config.encoder_auth_token.clone()),
            config.encoder_batch_size,
            config.encoder_dimension,
        )?)),
    }
}

#[derive(Serialize)]
struct IndexReport<'a> {
    build: &'a BuildReport,
    stats: &'a GraphStats,
    usage: UsageTotals,
}

fn cmd_index(config: &RunConfig, corpus: &Path, out: &Path) -> Result<()> {
    let docs = read_corpus_dir(corpus)?;
    let gateway = build_gateway(config)?;
    let encoder = build_encoder(config)?;
    let (graph, build) = build_graph(&docs, &gateway, encoder.as_ref(), &config.build_params())?;
    snapshot::save(&graph, out)?;
    let stats = compute_stats(&graph)?;

    let report = IndexReport {
        build: &build,
        stats: &stats,
        usage: gateway.usage(),
    };
    let report_path = out.join("build_report.json");
    let mut body = serde_json::to_string_pretty(&report)?;
    body.push('\n');
    fs::write(&report_path, body).map_err(|e| Error::io(report_path.display().to_string(), e))?;

    for failure in &build.failures {
        log::warn!(
            "build failure in doc {} (chunk {:?}): {}",
            failure.doc_id,
            failure.chunk_index,
            failure.reason
        );
    }
    print!("{}", stats_table(&stats));
    println!(
        "indexed {} documents ({} failed), {} chunks ({} failed)",
        build.docs_total, build.docs_failed, build.chunks_total, build.chunks_failed
    );
    let usage = gateway.usage();
    println!(
        "model usage: {} calls, {} prompt + {} completion tokens",
        usage.calls, usage.prompt_tokens, usage.completion_tokens
    );
    println!("snapshot written to {}", out.display());
    Ok(())
}

fn read_queries(input: QueryInput) -> Result<Vec<String>> {
    match (input.query, input.query_file) {
        (Some(q), None) => Ok(vec![q]),
        (None, Some(path)) => {
            let body = fs::read_to_string(&path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            let queries: Vec<String> = body
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect();
            if queries.is_empty() {
                return Err(Error::invalid(format!(
                    "query file {} contains no queries",
                    path.display()
                )));
            }
            Ok(queries)
        }
        _ => unreachable!("clap enforces exactly one input"),
    }
}

fn log_record(record: &QueryRecord) {
    let t = &record.timing;
    log::info!(
        "query {:?}: plan {:.1} ms, retrieve {:.1} ms, sieve {:.1} ms, \
         generate {:.1} ms, total {:.1} ms; {} calls, {} prompt + {} completion tokens",
        record.query,
        t.plan_ms,
        t.retrieve_ms,
        t.sieve_ms,
        t.generate_ms,
        t.total_ms,
        record.usage.calls,
        record.usage.prompt_tokens,
        record.usage.completion_tokens
    );
}

fn cmd_query(
    config: &RunConfig,
    snapshot_dir: &Path,
    input: QueryInput,
    out: Option<&Path>,
) -> Result<()> {
    let queries = read_queries(input)?;
    let graph = snapshot::load(snapshot_dir)?;
    let gateway = build_gateway(config)?;
    let encoder = build_encoder(config)?;
    let engine = QueryEngine::new(&graph, &gateway, encoder.as_ref(), config.clone())?;

    let results = engine.answer_batch(&queries, config.workers);

    let stdout = std::io::stdout();
    let mut sink: Box<dyn Write> = match out {
        Some(path) => {
            let file =
                fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
            Box::new(BufWriter::new(file))
        }
        None => Box::new(stdout.lock()),
    };
    let mut failed = 0usize;
    for (query, result) in queries.iter().zip(results) {
        match result {
            Ok(record) => {
                log_record(&record);
                let line = serde_json::to_string(&record)?;
                writeln!(sink, "{line}").map_err(|e| Error::io("query output", e))?;
            }
            Err(e) => {
                failed += 1;
                eprintln!("query {query:?} failed: {e}");
            }
        }
    }
    sink.flush().map_err(|e| Error::io("query output", e))?;
    let usage = gateway.usage();
    log::info!(
        "batch of {}: {} calls, {} prompt + {} completion tokens",
        queries.len(),
        usage.calls,
        usage.prompt_tokens,
        usage.completion_tokens
    );
    if failed > 0 {
        return Err(Error::invalid(format!(
            "{failed} of {} queries failed",
            queries.len()
        )));
    }
    Ok(())
}

#[derive(Deserialize)]
struct ResultRow {
    query: String,
    answer: String,
}

#[derive(Deserialize)]
struct ReferenceRow {
    query: String,
    reference: String,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let body =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rows = Vec::new();
    for (lineno, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: T = serde_json::from_str(line).map_err(|e| {
            Error::invalid(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn cmd_eval(config: &RunConfig, results: &Path, references: &Path, out: Option<&Path>) -> Result<()> {
    let rows: Vec<ResultRow> = read_jsonl(results)?;
    if rows.is_empty() {
        return Err(Error::invalid(format!(
            "no query records in {}",
            results.display()
        )));
    }
    let reference_rows: Vec<ReferenceRow> = read_jsonl(references)?;
    let by_query: BTreeMap<&str, &str> = reference_rows
        .iter()
        .map(|r| (r.query.as_str(), r.reference.as_str()))
        .collect();

    let gateway = build_gateway(config)?;
    let encoder = build_encoder(config)?;
    let pairs: Vec<(&ResultRow, &str)> = rows
        .iter()
        .map(|row| {
            by_query
                .get(row.query.as_str())
                .map(|reference| (row, *reference))
                .ok_or_else(|| {
                    Error::invalid(format!("no reference answer for query {:?}", row.query))
                })
        })
        .collect::<Result<_>>()?;

    // Stateless scoring, fanned out over a bounded worker pool with
    // results pinned back to input order.
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<QueryEvaluation>>>> =
        pairs.iter().map(|_| Mutex::new(None)).collect();
    let workers = config.workers.clamp(1, pairs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= pairs.len() {
                    break;
                }
                let (row, reference) = pairs[i];
                let evaluation = evaluator::judge_claims(
                    &gateway,
                    &row.query,
                    &row.answer,
                    reference,
                )
                .and_then(|claims| {
                    let result = evaluator::answer_accuracy(
                        encoder.as_ref(),
                        claims,
                        &row.answer,
                        reference,
                        config.metric_alpha,
                    )?;
                    Ok(QueryEvaluation {
                        query: row.query.clone(),
                        claims,
                        result,
                    })
                });
                *slots[i].lock().expect("result slot poisoned") = Some(evaluation);
            });
        }
    });
    let per_query: Vec<QueryEvaluation> = slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot poisoned")
                .expect("every index was claimed by a worker")
        })
        .collect::<Result<_>>()?;

    let report = EvaluationReport::from_rows(per_query);
    print!("{}", report.summary_table());
    if let Some(path) = out {
        let mut body = serde_json::to_string_pretty(&report)?;
        body.push('\n');
        fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn stats_table(stats: &GraphStats) -> String {
    format!(
        concat!(
            "nodes           {:>10}\n",
            "  entities      {:>10}\n",
            "  atoms         {:>10}\n",
            "edges           {:>10}\n",
            "  containment   {:>10}\n",
            "  relevance     {:>10}\n",
            "  synonym       {:>10}\n",
            "avg degree      {:>10.3}\n",
            "avg clustering  {:>10.3}\n",
        ),
        stats.num_nodes,
        stats.num_entities,
        stats.num_atoms,
        stats.num_edges,
        stats.num_containment,
        stats.num_relevance,
        stats.num_synonym,
        stats.avg_degree,
        stats.avg_clustering
    )
}

fn cmd_stats(snapshot_dir: &Path, json: bool) -> Result<()> {
    let graph = snapshot::load(snapshot_dir)?;
    let stats = compute_stats(&graph)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        print!("{}", stats_table(&stats));
    }
    Ok(())
}

fn cmd_theory_check(
    config: &RunConfig,
    trials: Option<usize>,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let mut options = TheoryRunOptions {
        seed: config.seed,
        ..TheoryRunOptions::default()
    };
    if let Some(t) = trials {
        options.misrank_trials = t;
    }
    let report = theory::run_all(&options)?;
    for check in &report.checks {
        let verdict = if check.passed { "PASS" } else { "FAIL" };
        println!("{verdict}  {:<44}  {}", check.name, check.detail);
    }
    if let Some(path) = out {
        let mut body = serde_json::to_string_pretty(&report)?;
        body.push('\n');
        fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))?;
        println!("full report written to {}", path.display());
    }
    if report.all_passed {
        println!("all {} checks passed", report.checks.len());
        Ok(ExitCode::SUCCESS)
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        eprintln!("{failed} of {} checks failed", report.checks.len());
        Ok(ExitCode::from(3))
    }
}
