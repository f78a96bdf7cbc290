//! Command-line entry point.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use pedafeed_core::analytics::{
    assign_groups, generate_corpus, sample_groups, stats_report, CorpusEntry, CorpusMix, RatingRecord,
};
use pedafeed_core::domain::RequestSnapshot;
use pedafeed_core::gateway::TraceEntry;
use pedafeed_core::pipeline::PipelineOutcome;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ServiceConfig;
use crate::error::ServiceError;
use crate::store::{self, read_corpus_file, write_corpus_file};

#[derive(Debug, Parser)]
#[command(name = "pedafeed", version, about = "Scenario-aware feedback for recursion exercises")]
pub struct Cli {
    /// TOML configuration file. Built-in defaults when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start the HTTP API.
    Serve {
        #[arg(long)]
        listen: Option<SocketAddr>,
    },
    /// Generate a synthetic corpus by running mutated attempts through the pipeline.
    GenerateCorpus {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        /// Defaults to the corpus file in the storage directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw evaluation groups and write their ids into the corpus.
    SampleGroups {
        #[arg(long)]
        total: usize,
        #[arg(long)]
        groups: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Replay recorded requests (snapshots or corpus entries, one JSON per line).
    BatchFeedback {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
    },
    /// Print the analytics report as JSON.
    Stats {
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BatchItem {
    Entry(Box<CorpusEntry>),
    Snapshot(RequestSnapshot),
}

#[derive(Debug, Serialize)]
struct BatchResponse<'a> {
    request_id: &'a str,
    request: &'a RequestSnapshot,
    outcome: &'a PipelineOutcome,
}

#[derive(Debug, Serialize)]
struct BatchTrace<'a> {
    request_id: &'a str,
    calls: Vec<TraceEntry>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => return report(&ServiceError::Io(e)),
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(err: &ServiceError) -> i32 {
    eprintln!("{}", err.to_json());
    err.exit_code()
}

fn load_config(path: Option<&Path>) -> Result<ServiceConfig, ServiceError> {
    match path {
        Some(path) => ServiceConfig::from_file(path),
        None => Ok(ServiceConfig::default()),
    }
}

fn print_json(value: &impl Serialize) -> Result<(), ServiceError> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, value).map_err(|e| ServiceError::Data(e.to_string()))?;
    writeln!(stdout)?;
    Ok(())
}

fn read_ratings(path: &Path) -> Result<Vec<RatingRecord>, ServiceError> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(ServiceError::Data(format!("{}: {e}", path.display()))),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| ServiceError::Data(format!("{} line {}: {e}", path.display(), i + 1))))
        .collect()
}

fn read_corpus(path: &Path) -> Result<Vec<CorpusEntry>, ServiceError> {
    read_corpus_file(path).map_err(|e| ServiceError::Data(e.to_string()))
}

pub async fn run(cli: Cli) -> Result<(), ServiceError> {
    let config = load_config(cli.config.as_deref())?;
    let storage = config.storage_path.clone();
    match cli.command {
        Command::Serve { listen } => {
            let state = crate::build_state(&config).await?;
            let addr = listen.unwrap_or(config.listen);
            let listener = tokio::net::TcpListener::bind(addr).await?;
            tracing::info!("listening on {}", listener.local_addr()?);
            eprintln!("{}", json!({ "listening": listener.local_addr()?.to_string() }));
            crate::serve(state, listener, async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
        }
        Command::GenerateCorpus { count, seed, concurrency, out } => {
            std::fs::create_dir_all(&storage)?;
            let pipeline = config.pipeline(Some(&storage.join(store::TRACE_FILE))).await?;
            let corpus = generate_corpus(&pipeline, &CorpusMix::default(), count, seed, concurrency).await?;
            let path = out.unwrap_or_else(|| storage.join(store::CORPUS_FILE));
            write_corpus_file(&path, &corpus).map_err(|e| ServiceError::Data(e.to_string()))?;
            let mut scenarios: BTreeMap<&str, usize> = BTreeMap::new();
            for entry in &corpus {
                *scenarios.entry(entry.scenario.label()).or_default() += 1;
            }
            print_json(&json!({ "entries": corpus.len(), "path": path, "scenarios": scenarios }))
        }
        Command::SampleGroups { total, groups, seed, corpus } => {
            let path = corpus.unwrap_or_else(|| storage.join(store::CORPUS_FILE));
            let mut entries = read_corpus(&path)?;
            let assignment =
                sample_groups(&entries, total, groups, seed).map_err(|e| ServiceError::Data(e.to_string()))?;
            assign_groups(&mut entries, &assignment);
            write_corpus_file(&path, &entries).map_err(|e| ServiceError::Data(e.to_string()))?;
            let ids: Vec<Vec<&str>> = assignment
                .iter()
                .map(|group| group.iter().map(|&i| entries[i].entry_id.as_str()).collect())
                .collect();
            print_json(&json!({ "corpus": path, "groups": ids }))
        }
        Command::BatchFeedback { input, output, traces, concurrency } => {
            batch_feedback(&config, &input, &output, &traces, concurrency).await
        }
        Command::Stats { ratings, corpus } => {
            let ratings = read_ratings(&ratings.unwrap_or_else(|| storage.join(store::RATINGS_FILE)))?;
            let corpus_path = corpus.unwrap_or_else(|| storage.join(store::CORPUS_FILE));
            let corpus = if corpus_path.exists() { read_corpus(&corpus_path)? } else { Vec::new() };
            let report = stats_report(&ratings, &corpus);
            if report.no_data {
                return print_json(&json!({ "no_data": true, "message": "no data", "report": report }));
            }
            print_json(&report)
        }
    }
}

async fn batch_feedback(
    config: &ServiceConfig,
    input: &Path,
    output: &Path,
    traces: &Path,
    concurrency: usize,
) -> Result<(), ServiceError> {
    use futures::{StreamExt, TryStreamExt};

    let text = std::fs::read_to_string(input).map_err(|e| ServiceError::Data(format!("{}: {e}", input.display())))?;
    let mut requests = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let item: BatchItem = serde_json::from_str(line)
            .map_err(|e| ServiceError::Data(format!("{} line {}: {e}", input.display(), i + 1)))?;
        let (id, snapshot) = match item {
            BatchItem::Entry(entry) => (entry.entry_id, entry.request),
            BatchItem::Snapshot(snapshot) => (format!("batch-{:06}", requests.len()), snapshot),
        };
        requests.push((id, snapshot));
    }

    let pipeline = config.pipeline(None).await?;
    let outcomes: Vec<PipelineOutcome> = futures::stream::iter(&requests)
        .map(|(id, snapshot)| pipeline.handle(snapshot.clone(), &[], id, None))
        .buffered(concurrency.max(1))
        .try_collect()
        .await?;

    let trace = pipeline.agents.gateway().trace().entries();
    let mut responses = std::io::BufWriter::new(std::fs::File::create(output)?);
    let mut trace_out = std::io::BufWriter::new(std::fs::File::create(traces)?);
    for ((id, snapshot), outcome) in requests.iter().zip(&outcomes) {
        let line = BatchResponse { request_id: id, request: snapshot, outcome };
        writeln!(responses, "{}", serde_json::to_string(&line).map_err(|e| ServiceError::Data(e.to_string()))?)?;
        let calls = trace.iter().filter(|t| &t.request_id == id).cloned().collect();
        let line = BatchTrace { request_id: id, calls };
        writeln!(trace_out, "{}", serde_json::to_string(&line).map_err(|e| ServiceError::Data(e.to_string()))?)?;
    }
    responses.flush()?;
    trace_out.flush()?;
    print_json(&json!({ "responses": outcomes.len(), "output": output, "traces": traces }))
}
