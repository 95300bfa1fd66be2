//! The `framekit` command line: preprocessing, LLM annotation, the validation
//! service, classifier training and prediction, agreement and corpus statistics.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
pub mod config;
pub mod manifest;
pub mod server;

pub use config::Config;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration; exit code 2.
    Usage(String),
    /// Failure while running; exit code 1.
    Operational(anyhow::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Operational(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Operational(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Operational(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "framekit", version, about = "Frame annotation and corpus statistics pipeline")]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest, clean, deduplicate, keyword-filter and optionally split a corpus.
    Preprocess(PreprocessArgs),
    /// Label posts with the two-stage LLM protocol.
    AnnotateLlm(AnnotateArgs),
    /// Run the expert validation HTTP service.
    Serve(ServeArgs),
    /// Train the linear multi-label classifier.
    Train(TrainArgs),
    /// Predict labels for a corpus with a trained model.
    Predict(PredictArgs),
    /// Convert a `post_id \t labels` predictions file into model annotations.
    ImportPredictions(ImportArgs),
    /// Inter-annotator agreement and reference-based scores.
    Agreement(AgreementArgs),
    /// Corpus statistics.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

/// Posts plus the annotations to attach to them.
#[derive(Debug, Clone, Args, Serialize)]
pub struct CorpusArgs {
    /// Corpus JSONL.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Annotation JSONL; repeatable, later files override earlier labels.
    #[arg(long = "annotations")]
    pub annotations: Vec<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PreprocessArgs {
    /// Raw corpus JSONL.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Keep posts containing this keyword (case-insensitive).
    #[arg(long)]
    pub keyword: Option<String>,
    /// Annotations used by the split's test restriction.
    #[arg(long = "annotations")]
    pub annotations: Vec<PathBuf>,
    /// Also write train/val/test partitions.
    #[arg(long)]
    pub split: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fractions as `train,val,test`.
    #[arg(long, value_parser = parse_fractions)]
    pub fractions: Option<(f64, f64, f64)>,
    /// File of post ids forced into test, one per line.
    #[arg(long)]
    pub pinned_ids: Option<PathBuf>,
    /// Annotator kind whose posts may be drawn into test.
    #[arg(long)]
    pub restrict_test: Option<String>,
    /// How many restriction-qualifying posts to draw into test.
    #[arg(long)]
    pub restricted_draws: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Annotation JSONL to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Resume file; posts recorded here are not re-sent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Raw request/response log.
    #[arg(long)]
    pub raw_log: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub max_retries: Option<usize>,
    #[arg(long)]
    pub annotator_id: Option<String>,
    /// Require every response line to be `<tag> because reason`.
    #[arg(long)]
    pub strict: bool,
    /// Relevance prompt template (JSON); the built-in one otherwise.
    #[arg(long)]
    pub filter_prompt: Option<PathBuf>,
    /// Frame prompt template (JSON); the built-in one otherwise.
    #[arg(long)]
    pub frames_prompt: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// Posts that proposals may refer to.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<String>,
    /// Append-only event log; replayed on start. In-memory when absent.
    #[arg(long)]
    pub event_log: Option<PathBuf>,
    #[arg(long)]
    pub lease_ttl_secs: Option<i64>,
    /// LLM annotation JSONL to enqueue before serving.
    #[arg(long)]
    pub batch: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// Gold annotations for both splits.
    #[arg(long = "annotations")]
    pub annotations: Vec<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training report JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub min_df: Option<usize>,
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Predictions TSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Gold annotations; with `--metrics`, scores predictions against them.
    #[arg(long = "gold")]
    pub gold: Vec<PathBuf>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ImportArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "model")]
    pub annotator_id: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AgreementArgs {
    /// Annotation JSONL files holding every rater's labels.
    #[arg(long = "annotations", required = true)]
    pub annotations: Vec<PathBuf>,
    /// Rater scored against all others; without it raters are scored among themselves.
    #[arg(long)]
    pub subject: Option<String>,
    /// Report CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Full report as JSON as well.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormArg {
    Row,
    Column,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GranularityArg {
    Month,
    Day,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantArg {
    Welch,
    Student,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Weighted log-odds of n-grams between two groups.
    LogOdds(LogOddsArgs),
    /// Frame shares per US state.
    States(StatesArgs),
    /// Frame shares per group of posts.
    Proportions(ProportionsArgs),
    /// Frame-by-frame or term-by-term co-occurrence.
    Cooccur(CooccurArgs),
    /// Frame counts per month or day.
    Timeseries(TimeseriesArgs),
    /// Linear regression of state frame shares on a state-level factor.
    Regress(RegressArgs),
    /// t-test of an imported score between posts with and without a frame.
    Ttest(TtestArgs),
    /// Two-proportion z-test of every frame in a subset against its complement.
    SubsetSig(SubsetSigArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct LogOddsArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Compare posts carrying this frame against the rest of the corpus.
    #[arg(long, conflicts_with_all = ["group_a", "group_b"])]
    pub frame: Option<String>,
    /// First group corpus JSONL.
    #[arg(long, requires = "group_b")]
    pub group_a: Option<PathBuf>,
    #[arg(long, requires = "group_a")]
    pub group_b: Option<PathBuf>,
    /// Background corpus JSONL for the prior; the union of both groups otherwise.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// 1 for unigrams, 2 for bigrams.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub n: u8,
    #[arg(long)]
    pub alpha_total: Option<f64>,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatesArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// `alias \t state` lines added to the built-in state names.
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    /// `post_id \t state` tags used instead of name matching.
    #[arg(long)]
    pub state_tags: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = NormArg::Row)]
    pub normalize: NormArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ProportionsArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// `NAME=PATH` group corpora; the whole corpus when absent.
    #[arg(long = "group", value_parser = parse_group)]
    pub groups: Vec<(String, PathBuf)>,
    #[arg(long, value_enum, default_value_t = NormArg::Row)]
    pub normalize: NormArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CooccurArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Comma-separated row terms; frames are used when absent.
    #[arg(long, value_delimiter = ',', requires = "terms_b")]
    pub terms_a: Vec<String>,
    #[arg(long, value_delimiter = ',', requires = "terms_a")]
    pub terms_b: Vec<String>,
    #[arg(long, value_enum, default_value_t = NormArg::Row)]
    pub normalize: NormArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TimeseriesArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    #[arg(long, value_enum, default_value_t = GranularityArg::Month)]
    pub granularity: GranularityArg,
    /// Restrict to posts mentioning this state code.
    #[arg(long)]
    pub state: Option<String>,
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RegressArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// `state \t value` rows.
    #[arg(long)]
    pub factors: PathBuf,
    /// One frame; every frame when absent.
    #[arg(long)]
    pub frame: Option<String>,
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TtestArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// `post_id \t score_name \t value` rows.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub score: String,
    #[arg(long)]
    pub frame: String,
    #[arg(long, value_enum, default_value_t = VariantArg::Welch)]
    pub variant: VariantArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Histogram CSV of both samples.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SubsetSigArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Subset = posts mentioning this state code.
    #[arg(long, conflicts_with = "subset_ids")]
    pub state: Option<String>,
    /// Subset = post ids listed one per line.
    #[arg(long)]
    pub subset_ids: Option<PathBuf>,
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_fractions(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err("expected three comma-separated fractions".into()),
    }
}

fn parse_group(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected NAME=PATH")?;
    if name.is_empty() {
        return Err("group name is empty".into());
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
