//! The `pagelink` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Settings are
//! resolved as flags, then `--config`, then defaults.

use std::ffi::OsString;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::corpus::ingest_corpus_file;
use crate::error::{Error, Result};
use crate::eval::{
    boolean_accuracy, filter_yes_no, load_dataset, recall_at_k, render_summary, Answerer, ConstantAnswerer,
    DatasetKind, MetricReport, OverlapAnswerer, RemoteAnswerer, SummaryRow, YesNo,
};
use crate::index::{Bm25Params, InvertedIndex, TokenizerConfig};
use crate::manifest::{manifest_path, RunManifest};
use crate::pipeline::{read_traces, write_traces, BatchQuery, Pipeline, PipelineConfig, QueryTrace};
use crate::protocol::{serve_lines, Endpoint, ReplayTransport};
use crate::providers::{ConnectionPool, ProviderConfig, TitleGenerator};
use crate::rerank::export::{export_hotpot_pairs, export_nq_pairs, load_hotpot_records, load_nq_records};
use crate::rerank::{Scorer, ScorerConfig};

#[derive(Debug, Parser)]
#[command(name = "pagelink", version, about = "Title-linked passage retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chunk a JSONL corpus and write a BM25 index directory.
    BuildIndex(BuildIndexArgs),
    /// Run queries through the pipeline and write traces.
    Retrieve(RetrieveArgs),
    /// Score a trace file against a dataset.
    Eval(EvalArgs),
    /// Combine metric reports into one summary table.
    Summarize(SummarizeArgs),
    /// Write balanced re-ranker training pairs.
    ExportTrain(ExportArgs),
    /// Serve retrieval over HTTP.
    Serve(ServeArgs),
    /// Answer provider requests from a recorded fixture over stdin/stdout.
    ReplayProvider(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Recipe {
    Hotpot,
    Nq,
}

/// Settings shared by everything that builds a pipeline.
#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Index directory written by build-index.
    #[arg(long)]
    pub index: PathBuf,
    /// JSON file with `pipeline`, `providers` and `scorer` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Provider config (overrides the `providers` section).
    #[arg(long)]
    pub providers: Option<PathBuf>,
    /// Scorer config (overrides the `scorer` section).
    #[arg(long)]
    pub scorer: Option<PathBuf>,
    /// Final list size.
    #[arg(long)]
    pub k: Option<usize>,
    /// BM25 candidate pool size.
    #[arg(long = "n-coarse")]
    pub n_coarse: Option<usize>,
    /// Enable decomposition correction.
    #[arg(long)]
    pub correct: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    /// JSONL corpus, one `{"id", "title", "text"}` per line.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.4)]
    pub b: f64,
    /// Porter-stem terms.
    #[arg(long)]
    pub stem: bool,
    /// Drop stopwords.
    #[arg(long = "remove-stopwords")]
    pub remove_stopwords: bool,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// A single query.
    #[arg(long, conflicts_with = "query_file", required_unless_present = "query_file")]
    pub query: Option<String>,
    /// Queries: JSON lines with `query`/`question` and optional `qid`, or
    /// plain lines; with `--dataset`, an evaluation file.
    #[arg(long = "query-file")]
    pub query_file: Option<PathBuf>,
    /// Read `--query-file` with this dataset adapter.
    #[arg(long, requires = "query_file")]
    pub dataset: Option<DatasetKind>,
    /// Trace output (JSON lines); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trace file written by retrieve.
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub dataset: DatasetKind,
    /// Dataset file in its official layout.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated K values for recall.
    #[arg(long = "ks", value_delimiter = ',', default_values_t = vec![5usize, 20])]
    pub ks: Vec<usize>,
    /// Passages shown to the yes/no answerer.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// `overlap`, `yes`, `no`, an `http://` URL, `replay:PATH` or
    /// `cmd:PROGRAM ARGS..`.
    #[arg(long, default_value = "overlap")]
    pub answerer: String,
    /// Keep HotpotQA yes/no questions in recall.
    #[arg(long = "keep-yes-no")]
    pub keep_yes_no: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Row label.
    #[arg(long, default_value = "pagelink")]
    pub system: String,
    /// Metric report JSON files from eval.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, value_enum)]
    pub recipe: Recipe,
    /// HotpotQA train JSON, or DPR-style NQ train JSON.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pair count for the nq recipe (usually the hotpot export size).
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// JSONL of `{"request", "response"}` pairs.
    #[arg(long)]
    pub fixture: PathBuf,
    /// Serve over HTTP on this address instead of stdin/stdout.
    #[arg(long)]
    pub http: Option<String>,
}

/// The `--config` file layout.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub providers: ProviderConfig,
    pub scorer: ScorerConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

impl PipelineArgs {
    /// Applies config file then flags over the defaults.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.providers {
            cfg.providers = ProviderConfig::load(p)?;
            cfg.pipeline.n_entity = cfg.providers.n_entity;
            cfg.pipeline.n_event = cfg.providers.n_event;
            cfg.pipeline.n_sets = cfg.providers.n_sets;
            cfg.pipeline.n_sentences = cfg.providers.n_sentences;
        }
        if let Some(p) = &self.scorer {
            cfg.scorer = ScorerConfig::load(p)?;
        }
        if let Some(n) = self.n_coarse {
            cfg.pipeline.n_coarse = n;
        }
        if let Some(k) = self.k {
            cfg.pipeline.k_final = k;
        }
        if self.correct {
            cfg.pipeline.corrector_enabled = true;
        }
        if let Some(s) = self.seed {
            cfg.pipeline.seed = s;
        }
        cfg.pipeline.validate()?;
        Ok(cfg)
    }

    pub fn build(&self, cfg: &RunConfig) -> Result<(Pipeline, Arc<ConnectionPool>)> {
        let (index, store) = InvertedIndex::load(&self.index)?;
        let store = Arc::new(store);
        let titles: Vec<&str> = store.titles().collect();
        let mut pool = ConnectionPool::default();
        let generator = TitleGenerator::from_config(&cfg.providers, &titles, &mut pool)?;
        let scorer = Scorer::from_config(&cfg.scorer, &mut pool)?;
        let pipeline = Pipeline::new(
            cfg.pipeline.clone(),
            Arc::clone(&store),
            Arc::new(index),
            generator,
            scorer,
        )?;
        Ok((pipeline, Arc::new(pool)))
    }

    fn record(&self, manifest: &mut RunManifest, cfg: &RunConfig, pipeline: &Pipeline) -> Result<()> {
        manifest.config(cfg).input("index", &self.index)?;
        for (name, path) in [
            ("config", &self.config),
            ("providers", &self.providers),
            ("scorer", &self.scorer),
        ] {
            if let Some(p) = path {
                manifest.input(name, p)?;
            }
        }
        manifest
            .component("scorer", pipeline_scorer_name(cfg))
            .component("config_fingerprint", pipeline.fingerprint());
        Ok(())
    }
}

fn pipeline_scorer_name(cfg: &RunConfig) -> String {
    match &cfg.scorer.endpoint {
        Endpoint::Builtin => "lexical".into(),
        e => format!("{e:?}"),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let printable: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli.command, printable) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(command: Command, args: Vec<String>) -> Result<()> {
    match command {
        Command::BuildIndex(a) => build_index(a, args),
        Command::Retrieve(a) => retrieve(a, args),
        Command::Eval(a) => eval(a, args),
        Command::Summarize(a) => summarize(a),
        Command::ExportTrain(a) => export_train(a, args),
        Command::Serve(a) => serve(a),
        Command::ReplayProvider(a) => replay_provider(a),
    }
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn build_index(a: BuildIndexArgs, args: Vec<String>) -> Result<()> {
    let params = Bm25Params { k1: a.k1, b: a.b };
    params.validate()?;
    let tokenizer = TokenizerConfig {
        stem: a.stem,
        remove_stopwords: a.remove_stopwords,
    };
    let mut manifest = RunManifest::start("build-index", args, 0);
    manifest.input("corpus", &a.corpus)?;
    let (index, store) = thread_pool(a.jobs)?.install(|| -> Result<_> {
        let store = ingest_corpus_file(&a.corpus)?;
        let index = InvertedIndex::build(&store, params, tokenizer)?;
        Ok((index, store))
    })?;
    index.save(&a.out, &store)?;
    manifest.config(&index.manifest());
    let stats = store.stats();
    eprintln!(
        "indexed {} passages from {} documents ({} terms) into {}",
        store.len(),
        stats.documents,
        index.term_count(),
        a.out.display()
    );
    manifest.finish(&manifest_path(&a.out))
}

fn read_queries(a: &RetrieveArgs) -> Result<Vec<BatchQuery>> {
    if a.dataset.is_some() && a.query_file.is_none() {
        return Err(Error::Config("--dataset needs --query-file".into()));
    }
    if let Some(q) = &a.query {
        return Ok(vec![BatchQuery {
            qid: None,
            query: q.clone(),
        }]);
    }
    let path = a.query_file.as_ref().expect("clap requires one of query/query-file");
    if let Some(kind) = a.dataset {
        return Ok(load_dataset(kind, path)?
            .into_iter()
            .map(|q| BatchQuery {
                qid: Some(q.qid),
                query: q.question,
            })
            .collect());
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('{') {
            let q: BatchQuery = serde_json::from_str(trimmed).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            out.push(q);
        } else {
            out.push(BatchQuery {
                qid: None,
                query: trimmed.to_string(),
            });
        }
    }
    Ok(out)
}

fn retrieve(a: RetrieveArgs, args: Vec<String>) -> Result<()> {
    let cfg = a.pipeline.resolve()?;
    let queries = read_queries(&a)?;
    let (pipeline, _pool) = a.pipeline.build(&cfg)?;
    let mut manifest = RunManifest::start("retrieve", args, cfg.pipeline.seed);
    a.pipeline.record(&mut manifest, &cfg, &pipeline)?;
    if let Some(p) = &a.query_file {
        manifest.input("queries", p)?;
    }

    let jobs = a.pipeline.jobs.unwrap_or(0);
    let mut traces = Vec::with_capacity(queries.len());
    for (q, result) in queries.iter().zip(pipeline.retrieve_batch(&queries, jobs)) {
        match result {
            Ok(t) => traces.push(t),
            Err(e) => return Err(Error::Format(format!("query {:?}: {e}", q.query))),
        }
    }

    let mut body = Vec::new();
    match a.format {
        Format::Json => write_traces(&traces, &mut body)?,
        Format::Table => body.extend(render_traces(&traces).into_bytes()),
    }
    match &a.out {
        Some(path) => {
            std::fs::write(path, &body).map_err(|e| Error::io(path, e))?;
            manifest.finish(&manifest_path(path))?;
        }
        None => std::io::stdout().write_all(&body)?,
    }
    for t in &traces {
        for w in &t.warnings {
            eprintln!("warning: {}: {w}", t.qid.as_deref().unwrap_or(&t.query));
        }
    }
    Ok(())
}

/// Human-readable view of traces: one block per query.
pub fn render_traces(traces: &[QueryTrace]) -> String {
    let mut out = String::new();
    for t in traces {
        out.push_str(&format!("query: {}\n", t.query));
        out.push_str(&format!(
            "titles: {} linked, {} candidates, {} final\n",
            t.title_set.unique_titles.len(),
            t.coarse.len(),
            t.final_passages.len()
        ));
        for (i, p) in t.final_passages.iter().enumerate() {
            out.push_str(&format!(
                "{:>3}  {:.4}  {:>8.3}  {}\n",
                i + 1,
                p.relevance_score,
                p.bm25_score,
                p.passage_id
            ));
        }
        out.push('\n');
    }
    out
}

/// Builds an answerer from the `--answerer` spec.
pub fn answerer_from_spec(spec: &str, pool: &mut ConnectionPool) -> Result<Arc<dyn Answerer>> {
    let endpoint = match spec {
        "overlap" => return Ok(Arc::new(OverlapAnswerer::default())),
        "yes" => return Ok(Arc::new(ConstantAnswerer(YesNo::Yes))),
        "no" => return Ok(Arc::new(ConstantAnswerer(YesNo::No))),
        s if s.starts_with("http://") || s.starts_with("https://") => Endpoint::Http(s.to_string()),
        s if s.starts_with("replay:") => Endpoint::Replay(PathBuf::from(&s["replay:".len()..])),
        s if s.starts_with("cmd:") => {
            let argv: Vec<String> = s["cmd:".len()..].split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(Error::Config("cmd: answerer needs a program".into()));
            }
            Endpoint::Command(argv)
        }
        other => return Err(Error::Config(format!("unknown answerer {other:?}"))),
    };
    RemoteAnswerer::from_endpoint(&endpoint, Duration::from_secs(60), 1, pool)
}

fn eval(a: EvalArgs, args: Vec<String>) -> Result<()> {
    let traces = read_traces(&a.traces)?;
    let mut questions = load_dataset(a.dataset, &a.data)?;
    let mut manifest = RunManifest::start("eval", args, 0);
    manifest.input("traces", &a.traces)?.input("dataset", &a.data)?;

    let report = if a.dataset.is_boolean() {
        let mut pool = ConnectionPool::default();
        let answerer = answerer_from_spec(&a.answerer, &mut pool)?;
        manifest.component("answerer", a.answerer.clone());
        boolean_accuracy(a.dataset.name(), &traces, &questions, answerer.as_ref(), a.k)?
    } else {
        let mut extra = Vec::new();
        if a.dataset == DatasetKind::Hotpot && !a.keep_yes_no {
            let (kept, removed, warnings) = filter_yes_no(questions);
            questions = kept;
            extra = warnings;
            eprintln!("removed {removed} yes/no questions");
        }
        let mut report = recall_at_k(a.dataset.name(), &traces, &questions, &a.ks)?;
        report.warnings.extend(extra);
        report
    };

    let body = match a.format {
        Format::Json => report.to_json(),
        Format::Table => report.to_table(),
    };
    match &a.out {
        Some(path) => {
            std::fs::write(path, &body).map_err(|e| Error::io(path, e))?;
            manifest.config(&serde_json::json!({
                "dataset": a.dataset,
                "ks": a.ks,
                "k": a.k,
                "keep_yes_no": a.keep_yes_no,
            }));
            manifest.finish(&manifest_path(path))?;
        }
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn summarize(a: SummarizeArgs) -> Result<()> {
    let mut reports = Vec::new();
    for p in &a.reports {
        let raw = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let report: MetricReport =
            serde_json::from_str(&raw).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
        let kind: DatasetKind = report.dataset.parse()?;
        reports.push((kind, report));
    }
    let refs: Vec<(DatasetKind, &MetricReport)> = reports.iter().map(|(k, r)| (*k, r)).collect();
    let row = SummaryRow::from_reports(&a.system, &refs);
    let body = match a.format {
        Format::Table => render_summary(&[row]),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&row).expect("row serializes");
            s.push('\n');
            s
        }
    };
    std::io::stdout().write_all(body.as_bytes())?;
    Ok(())
}

fn export_train(a: ExportArgs, args: Vec<String>) -> Result<()> {
    let nq_size = match (a.recipe, a.size) {
        (Recipe::Nq, None) => return Err(Error::Config("--size is required for the nq recipe".into())),
        (_, size) => size,
    };
    let mut manifest = RunManifest::start("export-train", args, a.seed);
    manifest.input("data", &a.data)?;
    let export = match a.recipe {
        Recipe::Hotpot => export_hotpot_pairs(&load_hotpot_records(&a.data)?, a.seed),
        Recipe::Nq => export_nq_pairs(&load_nq_records(&a.data)?, nq_size.unwrap_or_default(), a.seed),
    };
    export.save_tsv(&a.out)?;
    for w in &export.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "wrote {} pairs ({} pos / {} neg) to {}",
        export.pairs.len(),
        export.positives(),
        export.negatives(),
        a.out.display()
    );
    manifest.config(&serde_json::json!({
        "recipe": format!("{:?}", a.recipe).to_lowercase(),
        "size": a.size,
        "seed": a.seed,
    }));
    manifest.finish(&manifest_path(&a.out))
}

fn serve(a: ServeArgs) -> Result<()> {
    let cfg = a.pipeline.resolve()?;
    let (pipeline, pool) = a.pipeline.build(&cfg)?;
    let workers = a.pipeline.jobs.unwrap_or(4);
    let handle = crate::server::serve_retrieval(Arc::new(pipeline), pool, &a.addr, workers)?;
    eprintln!("listening on {}", handle.url());
    handle.wait();
    Ok(())
}

fn replay_provider(a: ReplayArgs) -> Result<()> {
    let replay = ReplayTransport::load(&a.fixture)?;
    match &a.http {
        Some(addr) => {
            let handle = crate::server::serve_provider(Arc::new(replay), addr, 2)?;
            eprintln!("listening on {}", handle.url());
            handle.wait();
        }
        None => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            serve_lines(&replay, stdin.lock(), stdout.lock())?;
        }
    }
    Ok(())
}
