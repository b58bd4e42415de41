//! Command-line front end: ingest, run, score, eval, report.
//!
//! Exit codes: 0 success, 1 operational failure, 2 invalid input.

use std::fmt;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::analytics::{self, report, EvalReport, DEFAULT_TOP_K};
use crate::corpus::{
    self, drop_short_abstracts, generate_synthetic_corpus, load_corpus, load_proxy_scores, Article,
    CorpusFormat, CorpusSummary, MainPanel,
};
use crate::gateway::{
    run_batch, Gateway, GatewayConfig, HttpTransport, RecordKey, ResponseStore, RetryPolicy,
    SimulatedEndpoint, StoreIndex, Transport, API_KEY_ENV, DEFAULT_BASE_URL, DEFAULT_MODEL,
};
use crate::prompting::{Strategy, SystemInstructionSet};
use crate::scoring::{
    read_scored_csv, read_scored_jsonl, score_record, write_scored_csv, write_scored_jsonl,
    ScoreOptions, ScoredResult,
};

pub const EXIT_OPERATIONAL: u8 = 1;
pub const EXIT_INVALID_INPUT: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "starscore",
    version,
    about = "Probability-weighted research quality scores from chat-completion models"
)]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus (or generate a synthetic one) and print counts.
    Ingest(IngestArgs),
    /// Query the model (or replay a store) for every article and iteration.
    Run(RunArgs),
    /// Parse stored responses into a scored table.
    Score(ScoreArgs),
    /// Correlate scores with the proxy and write report files.
    Eval(EvalArgs),
    /// Print the text tables of a saved report.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Classification,
    Token,
    Standard,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Classification => Strategy::ClassificationTable,
            StrategyArg::Token => Strategy::TokenScore,
            StrategyArg::Standard => Strategy::Standard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Send requests to the configured endpoint.
    Live,
    /// Read responses from the store only.
    Replay,
    /// Answer from a local simulator driven by the proxy table.
    Simulate,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus file (.jsonl or .csv).
    #[arg(long, required_unless_present = "synthetic")]
    pub corpus: Option<PathBuf>,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Generate a synthetic corpus instead of reading one.
    #[arg(long, conflicts_with = "corpus", requires = "out")]
    pub synthetic: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(short = 'n', long = "n", default_value_t = 200)]
    pub n: usize,
    /// Units for the synthetic corpus, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u8, 8])]
    pub units: Vec<u8>,
    /// Drop the shortest tenth of abstracts within each unit.
    #[arg(long)]
    pub drop_short_abstracts: bool,
    /// Write the validated (or generated) corpus here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the synthetic proxy table (default: next to --out).
    #[arg(long)]
    pub proxy_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    #[arg(long)]
    pub iterations: Option<u32>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Directory holding panel_a.txt .. panel_d.txt.
    #[arg(long)]
    pub instructions: Option<PathBuf>,
    /// Run even if the instruction files are the shipped placeholders.
    #[arg(long)]
    pub allow_placeholder_instructions: bool,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Proxy table driving the simulator (simulate mode).
    #[arg(long)]
    pub proxy: Option<PathBuf>,
    /// Simulator seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Half-width of the simulator's uniform noise on article quality.
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
    /// Also write the scored table here (.jsonl or .csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep classification tables that do not add up to 100.
    #[arg(long)]
    pub accept_off_sum_tables: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Only score this strategy.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Only score articles present in this corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Scored table (.jsonl or .csv).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub accept_off_sum_tables: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// One or more scored tables.
    #[arg(long, required = true, num_args = 1..)]
    pub scored: Vec<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub proxy: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub top_k: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub report: PathBuf,
}

/// Values a config file may set. Flags win over these.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub store: Option<PathBuf>,
    pub instructions: Option<PathBuf>,
    pub iterations: Option<u32>,
    pub concurrency: Option<usize>,
    pub max_retries: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub mode: Option<Mode>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(CliError::invalid)?;
        toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(CliError::invalid)
    }
}

/// Resolved settings for `run`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus_path: PathBuf,
    pub instructions_dir: PathBuf,
    pub strategy: Strategy,
    pub iterations: u32,
    pub model_id: String,
    pub store_path: PathBuf,
    pub concurrency_limit: usize,
    pub mode: Mode,
    pub base_url: String,
    pub max_retries: u32,
    pub timeout: Duration,
}

impl RunConfig {
    pub fn resolve(args: &RunArgs, file: &FileConfig) -> Result<Self, CliError> {
        let config = RunConfig {
            corpus_path: args.corpus.clone(),
            instructions_dir: args
                .instructions
                .clone()
                .or_else(|| file.instructions.clone())
                .unwrap_or_else(|| PathBuf::from("instructions")),
            strategy: args.strategy.into(),
            iterations: args.iterations.or(file.iterations).unwrap_or(5),
            model_id: args
                .model
                .clone()
                .or_else(|| file.model.clone())
                .unwrap_or_else(|| DEFAULT_MODEL.to_string()),
            store_path: args
                .store
                .clone()
                .or_else(|| file.store.clone())
                .unwrap_or_else(|| PathBuf::from("responses.jsonl")),
            concurrency_limit: args.concurrency.or(file.concurrency).unwrap_or(4),
            mode: args.mode.or(file.mode).unwrap_or(Mode::Live),
            base_url: args
                .base_url
                .clone()
                .or_else(|| file.base_url.clone())
                .unwrap_or_else(|| DEFAULT_BASE_URL.to_string()),
            max_retries: args.max_retries.or(file.max_retries).unwrap_or(5),
            timeout: Duration::from_secs(file.timeout_secs.unwrap_or(120)),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.iterations == 0 {
            return Err(CliError::invalid(anyhow!(
                "--iterations must be at least 1"
            )));
        }
        if self.concurrency_limit == 0 {
            return Err(CliError::invalid(anyhow!(
                "--concurrency must be at least 1"
            )));
        }
        if self.mode == Mode::Replay {
            let populated = std::fs::metadata(&self.store_path)
                .map(|m| m.len() > 0)
                .unwrap_or(false);
            if !populated {
                return Err(CliError::invalid(anyhow!(
                    "replay mode needs a populated store; {} is missing or empty",
                    self.store_path.display()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn invalid(error: impl Into<anyhow::Error>) -> Self {
        CliError {
            code: EXIT_INVALID_INPUT,
            error: error.into(),
        }
    }

    pub fn operational(error: impl Into<anyhow::Error>) -> Self {
        CliError {
            code: EXIT_OPERATIONAL,
            error: error.into(),
        }
    }
}

impl fmt::Display for CliError {
    /// The error and its causes, skipping causes whose text the message
    /// already contains.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut text = String::new();
        for cause in self.error.chain() {
            let part = cause.to_string();
            if text.contains(&part) {
                continue;
            }
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&part);
        }
        f.write_str(&text)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&args).map(|summary| print!("{summary}")),
        Command::Run(args) => cmd_run(&args, &file),
        Command::Score(args) => cmd_score(&args),
        Command::Eval(args) => cmd_eval(&args).map(|_| ()),
        Command::Report(args) => cmd_report(&args),
    }
}

fn read_corpus(path: &Path, format: Option<FormatArg>) -> Result<Vec<Article>, CliError> {
    let format = match format {
        Some(FormatArg::Jsonl) => CorpusFormat::Jsonl,
        Some(FormatArg::Csv) => CorpusFormat::Csv,
        None => CorpusFormat::from_path(path),
    };
    load_corpus(path, format)
        .with_context(|| format!("loading corpus {}", path.display()))
        .map_err(CliError::invalid)
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<CorpusSummary, CliError> {
    let articles = if args.synthetic {
        let out = args
            .out
            .as_ref()
            .expect("clap requires --out with --synthetic");
        let generated =
            generate_synthetic_corpus(args.seed, args.n, &args.units).map_err(CliError::invalid)?;
        let proxy_out = args
            .proxy_out
            .clone()
            .unwrap_or_else(|| out.with_extension("proxy.csv"));
        let file = std::fs::File::create(&proxy_out)
            .with_context(|| format!("creating {}", proxy_out.display()))
            .map_err(CliError::operational)?;
        corpus::write_proxy_csv(file, &generated.proxy).map_err(CliError::operational)?;
        println!("wrote proxy table {}", proxy_out.display());
        generated.articles
    } else {
        let path = args.corpus.as_ref().expect("clap requires --corpus");
        read_corpus(path, args.format)?
    };
    let articles = if args.drop_short_abstracts {
        drop_short_abstracts(articles, 0.1)
    } else {
        articles
    };
    if let Some(out) = &args.out {
        corpus::write_corpus(out, &articles).map_err(CliError::operational)?;
        println!("wrote corpus {}", out.display());
    }
    Ok(CorpusSummary::of(&articles))
}

fn score_all(
    records: impl IntoIterator<Item = crate::gateway::ResponseRecord>,
    options: ScoreOptions,
) -> Vec<ScoredResult> {
    records
        .into_iter()
        .map(|r| score_record(&r, options))
        .collect()
}

fn write_scored(path: &Path, results: &[ScoredResult]) -> Result<(), CliError> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(CliError::operational)?;
    let written = match CorpusFormat::from_path(path) {
        CorpusFormat::Csv => write_scored_csv(file, results),
        CorpusFormat::Jsonl => write_scored_jsonl(std::io::BufWriter::new(file), results),
    };
    written
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::operational)
}

fn print_scored_summary(results: &[ScoredResult]) {
    let usable = results.iter().filter(|r| r.is_usable()).count();
    println!(
        "{} scored iterations, {} usable, {} flagged",
        results.len(),
        usable,
        results.len() - usable
    );
}

pub fn cmd_run(args: &RunArgs, file: &FileConfig) -> Result<(), CliError> {
    let config = RunConfig::resolve(args, file)?;
    let options = ScoreOptions {
        accept_off_sum_tables: args.accept_off_sum_tables,
    };

    let api_key = if config.mode == Mode::Live {
        Some(std::env::var(API_KEY_ENV).map_err(|_| {
            CliError::invalid(anyhow!(
                "live mode needs the API credential in the {API_KEY_ENV} environment variable"
            ))
        })?)
    } else {
        None
    };
    let articles = read_corpus(&config.corpus_path, None)?;

    if config.mode == Mode::Replay {
        let index = StoreIndex::load(&config.store_path).map_err(CliError::invalid)?;
        let mut records = Vec::new();
        let mut missing = Vec::new();
        for article in &articles {
            for iteration in 1..=config.iterations {
                let key = RecordKey {
                    article_id: article.id.clone(),
                    strategy: config.strategy,
                    iteration,
                };
                match index.get(&key) {
                    Some(r) => records.push(r.clone()),
                    None => missing.push(key),
                }
            }
        }
        let results = score_all(records, options);
        println!(
            "replayed {} records from {}",
            results.len(),
            config.store_path.display()
        );
        print_scored_summary(&results);
        if let Some(out) = &args.out {
            write_scored(out, &results)?;
        }
        if !missing.is_empty() {
            for key in missing.iter().take(10) {
                eprintln!("missing: {key}");
            }
            return Err(CliError::invalid(anyhow!(
                "{} (article, iteration) pairs are not in the store",
                missing.len()
            )));
        }
        return Ok(());
    }

    let transport: Box<dyn Transport> = match config.mode {
        Mode::Live => Box::new(
            HttpTransport::new(
                &config.base_url,
                api_key.expect("checked above"),
                config.timeout,
            )
            .map_err(CliError::operational)?,
        ),
        Mode::Simulate => {
            let proxy_path = args.proxy.as_ref().ok_or_else(|| {
                CliError::invalid(anyhow!(
                    "simulate mode needs --proxy to drive the simulator"
                ))
            })?;
            let proxy = load_proxy_scores(proxy_path)
                .with_context(|| format!("loading proxy {}", proxy_path.display()))
                .map_err(CliError::invalid)?;
            Box::new(SimulatedEndpoint::from_proxy(
                &articles, &proxy, args.seed, args.noise,
            ))
        }
        Mode::Replay => unreachable!("handled above"),
    };

    // the simulator never reads the instructions, so it accepts placeholders
    // and runs without a directory unless one was named
    let instructions = if config.mode == Mode::Simulate && !config.instructions_dir.exists() {
        if args.instructions.is_some() || file.instructions.is_some() {
            return Err(CliError::invalid(anyhow!(
                "instructions directory {} does not exist",
                config.instructions_dir.display()
            )));
        }
        MainPanel::ALL
            .into_iter()
            .fold(SystemInstructionSet::new(), |set, p| {
                set.with(p, format!("Simulated assessor for main panel {p}."))
            })
    } else {
        let allow = args.allow_placeholder_instructions || config.mode == Mode::Simulate;
        SystemInstructionSet::load_dir(&config.instructions_dir, allow)
            .map_err(CliError::invalid)?
    };

    let store = ResponseStore::open(&config.store_path).map_err(CliError::operational)?;
    let gateway = Gateway::new(
        transport,
        GatewayConfig {
            model_id: config.model_id.clone(),
            temperature: None,
            retry: RetryPolicy {
                max_retries: config.max_retries,
                ..RetryPolicy::default()
            },
        },
        store,
    );
    let outcome = run_batch(
        &gateway,
        &articles,
        config.strategy,
        &instructions,
        config.iterations,
        config.concurrency_limit,
    )
    .map_err(CliError::operational)?;

    println!(
        "{} fetched, {} already stored, {} failed",
        outcome.fetched,
        outcome.skipped,
        outcome.failures.len()
    );
    let results = score_all(outcome.records, options);
    print_scored_summary(&results);
    if let Some(out) = &args.out {
        write_scored(out, &results)?;
    }
    if !outcome.failures.is_empty() {
        for f in outcome.failures.iter().take(10) {
            eprintln!(
                "failed: {} iteration {}: {}",
                f.article_id, f.iteration, f.message
            );
        }
        return Err(CliError::operational(anyhow!(
            "{} requests failed; rerun to retry only the missing pairs",
            outcome.failures.len()
        )));
    }
    Ok(())
}

pub fn cmd_score(args: &ScoreArgs) -> Result<(), CliError> {
    let index = StoreIndex::load(&args.store).map_err(CliError::invalid)?;
    let keep: Option<std::collections::HashSet<String>> = match &args.corpus {
        Some(path) => Some(read_corpus(path, None)?.into_iter().map(|a| a.id).collect()),
        None => None,
    };
    let strategy = args.strategy.map(Strategy::from);
    let options = ScoreOptions {
        accept_off_sum_tables: args.accept_off_sum_tables,
    };
    let records = index
        .records()
        .iter()
        .filter(|r| strategy.is_none_or(|s| r.strategy == s))
        .filter(|r| keep.as_ref().is_none_or(|k| k.contains(&r.article_id)))
        .cloned();
    let mut results = score_all(records, options);
    results.sort_by(|a, b| {
        (a.strategy, &a.article_id, a.iteration).cmp(&(b.strategy, &b.article_id, b.iteration))
    });
    print_scored_summary(&results);
    write_scored(&args.out, &results)
}

fn read_scored(path: &Path) -> Result<Vec<ScoredResult>, CliError> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening scored table {}", path.display()))
        .map_err(CliError::invalid)?;
    let parsed = match CorpusFormat::from_path(path) {
        CorpusFormat::Csv => read_scored_csv(file),
        CorpusFormat::Jsonl => read_scored_jsonl(BufReader::new(file)),
    };
    parsed
        .with_context(|| format!("reading scored table {}", path.display()))
        .map_err(CliError::invalid)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    let mut results = Vec::new();
    for path in &args.scored {
        results.extend(read_scored(path)?);
    }
    let articles = read_corpus(&args.corpus, None)?;
    let proxy = load_proxy_scores(&args.proxy)
        .with_context(|| format!("loading proxy {}", args.proxy.display()))
        .map_err(CliError::invalid)?;
    let report = analytics::build_report(&results, &articles, &proxy, args.top_k)
        .map_err(CliError::invalid)?;
    let written = report::write_report_files(&report, &args.out_dir)
        .with_context(|| format!("writing report to {}", args.out_dir.display()))
        .map_err(CliError::operational)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    Ok(report)
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))
        .map_err(CliError::invalid)?;
    let report: EvalReport = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.report.display()))
        .map_err(CliError::invalid)?;
    print!("{}", report::render_text(&report));
    Ok(())
}
