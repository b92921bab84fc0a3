//! The `recite` command-line tool.
//!
//! Exit codes: 0 completed, 1 configuration error, 2 fatal backend error,
//! 3 data error, 130 interrupted (completed records are kept; rerun with
//! `--resume`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use recite_core::bm25::{Bm25Index, Bm25Params};
use recite_core::eval::{aggregate_report, path_subsample_curve, EvalReport, NormProfile};
use recite_core::prompting::{DialectName, PromptDialect};
use recite_core::QuestionRecord;
use serde::{Deserialize, Serialize};

use crate::backend::{
    Backend, CacheStore, CachedBackend, CancelFlag, RemoteBackend, RemoteConfig, RetryPolicy, RetryingBackend,
    ScriptedBackend,
};
use crate::config::{BackendKind, BackendSection, RunConfig};
use crate::corpus::{self, CorpusStore};
use crate::pipeline::{run_dataset, Bm25Context, Pipeline, RunDir, RunOptions, RunSummary};
use crate::promptset::PromptSet;
use crate::report_io::{self, SeedResult, SweepSummary};
use crate::{datasets, index_file, jsonl};

#[derive(Debug, Parser)]
#[command(name = "recite", version, about = "Recite-and-answer closed-book QA runs and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer a dataset with one configured scheme.
    Run(RunArgs),
    /// Score a finished run directory and write report tables and the path curve.
    Analyze(AnalyzeArgs),
    /// Turn a page dump into a passage-hint corpus.
    BuildCorpus(BuildCorpusArgs),
    /// Generate synthetic (question, hint, passage) triples from a corpus.
    GenQuestions(GenQuestionsArgs),
    /// Build or query a BM25 index over a corpus.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Repeat a run over several exemplar seeds and summarize.
    SeedSweep(SeedSweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Overrides {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Use the scripted backend with this script instead of the configured one.
    #[arg(long)]
    pub scripted: Option<PathBuf>,
    /// Answer only the first N questions.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Number of self-consistency paths.
    #[arg(long)]
    pub paths: Option<u32>,
    /// Number of few-shot exemplars.
    #[arg(long)]
    pub shots: Option<u32>,
    /// Output run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Exemplar sampling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep completed records from a previous run with the same configuration.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub run_dir: PathBuf,
    /// Path counts for the subsampling curve; counts above the stored paths are skipped.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10, 20])]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DumpFormat {
    /// One JSON page per line.
    Jsonl,
    /// WikiText-103 heading-marked plain text.
    Wikitext,
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    pub dump: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = DumpFormat::Jsonl)]
    pub format: DumpFormat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DialectArg {
    Default,
    Ul2,
}

impl From<DialectArg> for DialectName {
    fn from(d: DialectArg) -> Self {
        match d {
            DialectArg::Default => DialectName::Default,
            DialectArg::Ul2 => DialectName::UL2,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenQuestionsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Prompt-set directory; its qgen pool must hold exactly five exemplars.
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSONL of triples.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = DialectArg::Default)]
    pub dialect: DialectArg,
    #[arg(long, default_value_t = 8)]
    pub parallelism: usize,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long, conflicts_with = "base_url")]
    pub scripted: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    pub token_env: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Index every passage of a corpus, keyed by hint.
    Build {
        corpus: PathBuf,
        /// Defaults to `<corpus>/bm25.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        k1: f64,
        #[arg(long, default_value_t = 0.4)]
        b: f64,
    },
    /// Print the top passages for a query.
    Query {
        index: PathBuf,
        query: String,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
}

#[derive(Debug, Args)]
pub struct SeedSweepArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
    pub seeds: Vec<u64>,
}

/// A failure mapped onto the exit-code contract.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Backend(anyhow::Error),
    Data(anyhow::Error),
    Interrupted,
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Backend(_) => 2,
            Failure::Data(_) => 3,
            Failure::Interrupted => 130,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Backend(e) => write!(f, "backend error: {e:#}"),
            Failure::Data(e) => write!(f, "data error: {e:#}"),
            Failure::Interrupted => write!(f, "interrupted; completed records kept, rerun with --resume"),
        }
    }
}

fn config_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}
fn data_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Data(e.into())
}
fn backend_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Backend(e.into())
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(1);
        }
    };
    match rt.block_on(execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

pub async fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(a) => cmd_run(a).await,
        Command::Analyze(a) => cmd_analyze(a),
        Command::BuildCorpus(a) => cmd_build_corpus(a),
        Command::GenQuestions(a) => cmd_gen_questions(a).await,
        Command::Index(c) => cmd_index(c),
        Command::SeedSweep(a) => cmd_seed_sweep(a).await,
    }
}

fn load_config(o: &Overrides) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&o.config).map_err(config_err)?;
    if let Some(s) = &o.scripted {
        cfg.backend = BackendSection {
            kind: BackendKind::Scripted,
            script: Some(s.clone()),
            base_url: None,
            model: None,
            token_env: None,
            cache: None,
            ..cfg.backend
        };
    }
    if o.limit.is_some() {
        cfg.dataset.limit = o.limit;
    }
    if o.paths.is_some() {
        cfg.scheme.paths = o.paths;
    }
    if let Some(s) = o.shots {
        cfg.scheme.shots = s;
    }
    if let Some(out) = &o.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn build_backend(section: &BackendSection) -> Result<Arc<dyn Backend>, Failure> {
    let policy = RetryPolicy { max_attempts: section.max_attempts, ..RetryPolicy::default() };
    let inner: Arc<dyn Backend> = match section.kind {
        BackendKind::Scripted => {
            let path = section.script.as_ref().expect("validated");
            let b = ScriptedBackend::from_file(path)
                .with_context(|| format!("loading script {}", path.display()))
                .map_err(config_err)?;
            Arc::new(b)
        }
        BackendKind::Remote => {
            let mut rc = RemoteConfig::new(
                section.base_url.clone().expect("validated"),
                section.model.clone().expect("validated"),
            );
            rc.token_env = section.token_env.clone();
            rc.timeout_secs = section.timeout_secs;
            Arc::new(RetryingBackend::new(RemoteBackend::new(rc).map_err(backend_err)?, policy))
        }
    };
    Ok(match &section.cache {
        Some(path) => Arc::new(CachedBackend::new(inner, Arc::new(CacheStore::open(path)))),
        None => inner,
    })
}

fn unix_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Serialize, Deserialize)]
struct RunFile {
    fingerprint: String,
    config: RunConfig,
}

#[derive(Debug, Serialize)]
struct MetaFile {
    started_unix: u64,
    finished_unix: u64,
    elapsed_ms: u64,
    executed: usize,
    reused: usize,
    failed: usize,
    cancelled: bool,
}

struct RunOutcome {
    summary: RunSummary,
    report: Option<EvalReport>,
}

async fn execute_run(cfg: &RunConfig, resume: bool) -> Result<RunOutcome, Failure> {
    let questions = datasets::load(&cfg.dataset.path, cfg.dataset.adapter).map_err(data_err)?;
    let prompts = PromptSet::load(&cfg.prompts).map_err(config_err)?;
    let backend = build_backend(&cfg.backend)?;

    let mut pipeline = Pipeline::new(backend, cfg.scheme_config(), &prompts, cfg.dialect(), cfg.normalization.clone())
        .map_err(config_err)?;
    if let Some(c) = &cfg.corpus {
        let store = CorpusStore::load(&c.dir).map_err(data_err)?;
        if let Some(idx) = &c.index {
            let index = index_file::load(idx).map_err(data_err)?;
            let texts: BTreeMap<String, String> =
                store.passages().iter().map(|p| (p.hint.clone(), p.text.clone())).collect();
            pipeline = pipeline.with_retrieval(Arc::new(Bm25Context::new(index, texts)));
        }
        if c.filter_hints {
            pipeline = pipeline.with_hint_corpus(store.passages().iter().map(|p| p.hint.clone()));
        }
    }

    let dir = RunDir::create(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))
        .map_err(data_err)?;
    let limit = cfg.dataset.limit.unwrap_or(questions.len()).min(questions.len());
    let questions: &[QuestionRecord] = &questions[..limit];
    report_io::write_json(&dir.config(), &RunFile { fingerprint: pipeline.fingerprint().into(), config: cfg.clone() })
        .map_err(data_err)?;
    jsonl::write_all(&dir.questions(), questions.iter()).map_err(data_err)?;

    let cancel = CancelFlag::new();
    let watcher = {
        let cancel = cancel.clone();
        tokio::spawn(async move {
            if tokio::signal::ctrl_c().await.is_ok() {
                log::warn!("interrupt received; finishing in-flight questions");
                cancel.cancel();
            }
        })
    };
    let opts = RunOptions {
        limit: None,
        resume,
        question_parallelism: cfg.parallelism.questions,
        cancel: Some(cancel),
    };
    let started = unix_secs();
    let clock = Instant::now();
    log::info!("answering {} questions ({:?}, fingerprint {})", questions.len(), cfg.scheme.name, &pipeline.fingerprint()[..12]);
    let summary = run_dataset(&pipeline, questions, &opts, &dir).await.map_err(data_err);
    watcher.abort();
    let summary = summary?;

    report_io::write_json(
        &dir.meta(),
        &MetaFile {
            started_unix: started,
            finished_unix: unix_secs(),
            elapsed_ms: clock.elapsed().as_millis() as u64,
            executed: summary.executed,
            reused: summary.reused,
            failed: summary.failed,
            cancelled: summary.cancelled,
        },
    )
    .map_err(data_err)?;

    let report = if summary.records.is_empty() {
        None
    } else {
        let r = aggregate_report(&summary.records, questions, &cfg.normalization).map_err(data_err)?;
        report_io::write_report(dir.root(), &r).map_err(data_err)?;
        Some(r)
    };
    Ok(RunOutcome { summary, report })
}

/// Every executed question failing on backend errors means the backend is
/// unusable, which the exit-code contract treats as fatal.
fn check_outcome(o: &RunOutcome) -> Result<(), Failure> {
    if o.summary.cancelled {
        return Err(Failure::Interrupted);
    }
    if o.summary.executed > 0 && o.summary.backend_failed == o.summary.executed && o.summary.reused == 0 {
        return Err(Failure::Backend(anyhow!(
            "all {} questions failed with backend errors; see records.jsonl",
            o.summary.executed
        )));
    }
    Ok(())
}

async fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&a.common)?;
    if let Some(s) = a.seed {
        cfg.scheme.exemplar_seed = s;
    }
    let outcome = execute_run(&cfg, a.resume).await?;
    if let Some(r) = &outcome.report {
        println!("{}", r.summary_line());
    }
    println!(
        "{} executed, {} reused, {} failed; results in {}",
        outcome.summary.executed,
        outcome.summary.reused,
        outcome.summary.failed,
        cfg.out_dir.display()
    );
    check_outcome(&outcome)
}

async fn cmd_seed_sweep(a: SeedSweepArgs) -> Result<(), Failure> {
    if a.seeds.len() < 2 {
        return Err(config_err(anyhow!("a seed sweep needs at least two seeds, got {}", a.seeds.len())));
    }
    let base = load_config(&a.common)?;
    let mut results = Vec::with_capacity(a.seeds.len());
    for &seed in &a.seeds {
        let mut cfg = base.clone();
        cfg.scheme.exemplar_seed = seed;
        cfg.out_dir = base.out_dir.join(format!("seed-{seed}"));
        let outcome = execute_run(&cfg, false).await?;
        check_outcome(&outcome)?;
        let r = outcome.report.ok_or_else(|| data_err(anyhow!("seed {seed}: no questions answered")))?;
        println!("seed {seed}: {}", r.summary_line());
        results.push(SeedResult { seed, em: r.em, f1: r.f1, n_failed: r.n_failed });
    }
    let sweep = SweepSummary::new(results);
    report_io::write_json(&base.out_dir.join("sweep.json"), &sweep).map_err(data_err)?;
    println!("{}", sweep.summary_line());
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), Failure> {
    let dir = RunDir::open(&a.run_dir);
    if !a.run_dir.is_dir() {
        return Err(data_err(anyhow!("{} is not a run directory", a.run_dir.display())));
    }
    let records = crate::pipeline::read_records_tolerant(&dir.records()).map_err(data_err)?;
    if records.is_empty() {
        return Err(data_err(anyhow!("{} holds no readable records", dir.records().display())));
    }
    let questions: Vec<QuestionRecord> = jsonl::read_all(&dir.questions()).map_err(data_err)?;
    let norm = match report_io::read_json::<RunFile>(&dir.config()) {
        Ok(f) => f.config.normalization,
        Err(e) => {
            log::warn!("{e}; using the default normalization profile");
            NormProfile::default()
        }
    };
    let report = aggregate_report(&records, &questions, &norm).map_err(data_err)?;
    report_io::write_report(dir.root(), &report).map_err(data_err)?;

    let available = records.iter().map(|r| r.paths.len()).min().unwrap_or(0);
    let counts: Vec<usize> = a.counts.iter().copied().filter(|&c| c >= 1 && c <= available).collect();
    if counts.len() < a.counts.len() {
        log::info!("curve limited to path counts <= {available}");
    }
    if !counts.is_empty() {
        let curve = path_subsample_curve(&records, &questions, &counts, a.trials, a.seed, &norm).map_err(data_err)?;
        report_io::write_curve(&dir.root().join("curve.csv"), &curve).map_err(data_err)?;
    }
    println!("{}", report.summary_line());
    println!();
    print!("{}", report.category_table());
    println!();
    print!("{}", report.quadrant_table());
    Ok(())
}

fn cmd_build_corpus(a: BuildCorpusArgs) -> Result<(), Failure> {
    let pages = match a.format {
        DumpFormat::Jsonl => corpus::read_dump(&a.dump).map_err(data_err)?,
        DumpFormat::Wikitext => {
            let f = std::fs::File::open(&a.dump)
                .with_context(|| format!("opening {}", a.dump.display()))
                .map_err(data_err)?;
            corpus::parse_wikitext(std::io::BufReader::new(f), &a.dump.display().to_string()).map_err(data_err)?
        }
    };
    let n_pages = pages.len();
    let store = CorpusStore::build(pages, &a.dump.display().to_string()).map_err(data_err)?;
    store.save(&a.out).map_err(data_err)?;
    println!("{} passages from {} pages written to {}", store.len(), n_pages, a.out.display());
    Ok(())
}

fn default_index_path(corpus: &Path) -> PathBuf {
    corpus.join("bm25.jsonl")
}

fn cmd_index(c: IndexCommand) -> Result<(), Failure> {
    match c {
        IndexCommand::Build { corpus, out, k1, b } => {
            let store = CorpusStore::load(&corpus).map_err(data_err)?;
            let index = Bm25Index::build(
                store.passages().iter().map(|p| (p.hint.clone(), p.text.as_str())),
                Bm25Params { k1, b },
            )
            .map_err(config_err)?;
            let out = out.unwrap_or_else(|| default_index_path(&corpus));
            index_file::save(&index, &out).map_err(data_err)?;
            println!("indexed {} passages into {}", index.doc_count(), out.display());
        }
        IndexCommand::Query { index, query, top } => {
            let index = index_file::load(&index).map_err(data_err)?;
            for (rank, (hint, score)) in index.top_k(&query, top).into_iter().enumerate() {
                println!("{}\t{score:.4}\t{hint}", rank + 1);
            }
        }
    }
    Ok(())
}

async fn cmd_gen_questions(a: GenQuestionsArgs) -> Result<(), Failure> {
    let section = match (&a.backend.scripted, &a.backend.base_url) {
        (Some(s), _) => BackendSection {
            kind: BackendKind::Scripted,
            script: Some(s.clone()),
            base_url: None,
            model: None,
            token_env: None,
            timeout_secs: 120,
            cache: None,
            max_attempts: 5,
        },
        (None, Some(url)) => BackendSection {
            kind: BackendKind::Remote,
            script: None,
            base_url: Some(url.clone()),
            model: a.backend.model.clone(),
            token_env: a.backend.token_env.clone(),
            timeout_secs: 120,
            cache: None,
            max_attempts: 5,
        },
        (None, None) => return Err(config_err(anyhow!("pass --scripted or --base-url/--model"))),
    };
    let backend = build_backend(&section)?;
    let store = CorpusStore::load(&a.corpus).map_err(data_err)?;
    let prompts = PromptSet::load(&a.prompts).map_err(config_err)?;
    let dialect = PromptDialect::from_name(a.dialect.into());
    let report = corpus::generate_synthetic_triples(
        &store,
        a.n,
        &prompts.qgen,
        backend.as_ref(),
        a.seed,
        &dialect,
        a.parallelism,
    )
    .await
    .map_err(|e| match e {
        corpus::CorpusError::QgenShots(_) => config_err(e),
        other => data_err(other),
    })?;
    jsonl::write_all(&a.out, report.triples.iter()).map_err(data_err)?;
    println!(
        "{} triples written to {} ({} empty, {} failed)",
        report.triples.len(),
        a.out.display(),
        report.dropped_empty,
        report.dropped_errors
    );
    if a.n > 0 && report.triples.is_empty() && report.dropped_errors == a.n {
        return Err(backend_err(anyhow!("every generation failed")));
    }
    Ok(())
}
