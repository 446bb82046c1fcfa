//! The `selgen` command line.
//!
//! Exit codes: 0 on success, 1 on a usage error (synopsis on stderr), 2 on a
//! data error. Flags may also come from a JSON object passed with
//! `--config`; keys are flag names (`_` or `-`), and flags given on the
//! command line win. Every run records its configuration, seeds and input
//! checksums in `manifest.json` next to its primary output.

mod manifest;
pub mod svg;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::attribution::{sentence_attribution, AttributionMode, SegmentedDocument};
use crate::classifier_ood::{
    train_logistic, KnnIndex, LogisticConfig, DEFAULT_KNN_ALPHA, DEFAULT_KNN_K, DEFAULT_L2,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::combiner::{LinearCombiner, PercentileReference};
use crate::error::Error;
use crate::evaluation::{
    auroc, default_alpha_grid, kendall_test, qa_curve, roc_points, survival_counts,
};
use crate::gaussian_ood::{
    batch_score, CovarianceMode, GaussianModel, GaussianPair, RmdScorer, Side, DEFAULT_RIDGE,
};
use crate::linalg::Matrix;
use crate::rng::SplitMix64;
use crate::score_table::{ScoreRow, ScoreTable, QUALITY_PREFIX, SCORE_COLUMNS};
use crate::store::{
    load_classifier, load_gaussian, load_linear_combiner, load_model, read_csv_store, save_model,
    sidecar_path, EmbeddingStore, ModelFile,
};
use crate::synth::{
    gen_domain, gen_selective_scenario, CovSpec, DomainSpec, ScenarioConfig, IN_DOMAIN,
};
use crate::textstats::{build_profile, overlap_report, TokenId};
use crate::OodScorer;

use manifest::{record_run, sha256_file, RunRecord};

pub use manifest::MANIFEST_NAME;

/// Default cap on rows used to fit a model.
pub const DEFAULT_MAX_FIT_ROWS: usize = 10_000;

pub const THREADS_ENV: &str = "SELGEN_THREADS";

const SYNOPSIS: &str = "\
usage: selgen [--threads N] [--config FILE] <command> [flags]

commands:
  synth scenario|domain   generate synthetic embedding stores
  fit-gaussian            fit a Gaussian (or a foreground/background pair)
  fit-classifier          train the background-vs-in-domain logistic model
  score                   score a store into a CSV score table
  combine                 add prsum and linreg columns to a score table
  eval auroc|kendall|qa|survival
  attribute               per-segment leave-one-out attribution
  ngram                   n-gram overlap between token corpora

run `selgen <command> --help` for flags";

#[derive(Parser, Debug)]
#[command(
    name = "selgen",
    version,
    about = "Embedding OOD scoring and selective generation",
    args_override_self = true
)]
struct Cli {
    /// Worker threads for batch work [default: $SELGEN_THREADS, else all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON object of default flag values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic embedding stores
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Fit a Gaussian on a store; with --background, fit an RMD pair
    FitGaussian(FitGaussianArgs),
    /// Train a logistic model separating background (positive) from in-domain rows
    FitClassifier(FitClassifierArgs),
    /// Score every row of a store and write a score table
    Score(ScoreArgs),
    /// Add combined abstention scores to a score table
    Combine(CombineArgs),
    /// Evaluate one or more score columns
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Leave-one-out segment attribution for segmented documents
    Attribute(AttributeArgs),
    /// n-gram overlap between a test and a training token corpus
    Ngram(NgramArgs),
}

#[derive(Subcommand, Debug)]
enum SynthCommand {
    /// Planted selective-generation scenario: fg/bg fit sets and a scored pool
    Scenario(SynthScenarioArgs),
    /// One Gaussian domain
    Domain(SynthDomainArgs),
}

#[derive(Args, Debug, Serialize)]
struct SynthScenarioArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    n_in: usize,
    #[arg(long, default_value_t = 2000)]
    n_ood: usize,
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 6.0)]
    shift: f64,
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    /// Foreground fit rows [default: n-in]
    #[arg(long)]
    n_fit_fg: Option<usize>,
    /// Background fit rows [default: n-in + n-ood]
    #[arg(long)]
    n_fit_bg: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct SynthDomainArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "domain")]
    name: String,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    d: usize,
    /// Per-coordinate mean
    #[arg(long, default_value_t = 0.0)]
    shift: f64,
    /// Per-coordinate standard deviation
    #[arg(long, default_value_t = 1.0)]
    std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct RowFilter {
    /// Keep rows from these datasets (comma separated)
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    split: Option<String>,
    /// Keep rows tagged with this side (input|output)
    #[arg(long)]
    side: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct FitGaussianArgs {
    #[arg(long)]
    store: PathBuf,
    #[command(flatten)]
    filter: RowFilter,
    /// Background store; produces an RMD pair instead of a single Gaussian
    #[arg(long)]
    background: Option<PathBuf>,
    #[arg(long)]
    background_dataset: Option<String>,
    /// Fit one within-class covariance shared by both Gaussians
    #[arg(long)]
    pooled: bool,
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    ridge: f64,
    /// Background ridge [default: --ridge]
    #[arg(long)]
    background_ridge: Option<f64>,
    /// Rows beyond this are dropped by a seeded subsample
    #[arg(long, default_value_t = DEFAULT_MAX_FIT_ROWS)]
    max_rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct FitClassifierArgs {
    /// Background (positive) store
    #[arg(long)]
    pos: PathBuf,
    #[arg(long)]
    pos_dataset: Option<String>,
    /// In-domain (negative) store
    #[arg(long)]
    neg: PathBuf,
    #[arg(long)]
    neg_dataset: Option<String>,
    #[arg(long, default_value_t = DEFAULT_L2)]
    l2: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Train on the classes as given instead of downsampling the larger one
    #[arg(long)]
    no_balance: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_FIT_ROWS)]
    max_rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ScoreArgs {
    #[arg(long)]
    store: PathBuf,
    /// Foreground Gaussian (md column)
    #[arg(long)]
    fg: Option<PathBuf>,
    /// Background Gaussian (rmd column, with --fg)
    #[arg(long)]
    bg: Option<PathBuf>,
    /// RMD pair model (md and rmd columns)
    #[arg(long)]
    rmd_model: Option<PathBuf>,
    /// Side of the RMD pair model to use
    #[arg(long, default_value = "input")]
    side: String,
    /// Logistic model (logit column)
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Reference store for the knn column
    #[arg(long)]
    knn_ref: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_KNN_K)]
    knn_k: usize,
    /// Percentage of reference rows drawn per query seed
    #[arg(long, default_value_t = DEFAULT_KNN_ALPHA)]
    knn_alpha: f64,
    #[arg(long, default_value_t = 0)]
    knn_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CombineArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "perplexity")]
    ppx_column: String,
    #[arg(long, default_value = "rmd")]
    ood_column: String,
    #[arg(long, default_value = "prsum")]
    prsum_name: String,
    /// Percentile reference: `pool` (all scored rows) or `in-domain`
    #[arg(long, default_value = "pool")]
    reference: String,
    /// In-domain datasets (comma separated), for --reference in-domain
    #[arg(long, default_value = IN_DOMAIN)]
    in_domain: String,
    /// Fit a linear quality predictor on these columns (comma separated)
    #[arg(long)]
    linreg_features: Option<String>,
    /// Apply a saved linear predictor instead of fitting one
    #[arg(long)]
    linreg_model: Option<PathBuf>,
    #[arg(long)]
    linreg_model_out: Option<PathBuf>,
    #[arg(long, default_value = "linreg")]
    linreg_name: String,
    #[arg(long, default_value = "quality.quality")]
    quality_column: String,
    /// Fraction of rows used to fit; these rows get no linreg value
    #[arg(long, default_value_t = 0.1)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// AUROC of a score column, in-domain rows as negatives
    Auroc(EvalAurocArgs),
    /// Kendall tau-b between confidence (negated score) and quality
    Kendall(EvalKendallArgs),
    /// Quality-vs-abstention curves
    Qa(EvalQaArgs),
    /// Per-dataset survival counts under abstention
    Survival(EvalSurvivalArgs),
}

#[derive(Args, Debug, Serialize)]
struct EvalOutput {
    #[arg(long)]
    scores: PathBuf,
    /// Output prefix: writes PREFIX.json (and PREFIX.csv, PREFIX.svg for curves)
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug, Serialize)]
struct EvalAurocArgs {
    #[command(flatten)]
    io: EvalOutput,
    #[arg(long, default_value = "rmd")]
    column: String,
    #[arg(long, default_value = IN_DOMAIN)]
    in_domain: String,
}

#[derive(Args, Debug, Serialize)]
struct EvalKendallArgs {
    #[command(flatten)]
    io: EvalOutput,
    #[arg(long, default_value = "prsum")]
    column: String,
    #[arg(long, default_value = "quality.quality")]
    quality_column: String,
    /// Correlate the column as is, without negation
    #[arg(long)]
    raw: bool,
}

#[derive(Args, Debug, Serialize)]
struct EvalQaArgs {
    #[command(flatten)]
    io: EvalOutput,
    /// Abstention score columns (comma separated)
    #[arg(long, default_value = "prsum")]
    column: String,
    #[arg(long, default_value = "quality.quality")]
    quality_column: String,
    /// Alpha grid (comma separated, starting at 0) [default: 0, 0.01, …, 0.99]
    #[arg(long)]
    alphas: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct EvalSurvivalArgs {
    #[command(flatten)]
    io: EvalOutput,
    #[arg(long, default_value = "prsum")]
    column: String,
    #[arg(long)]
    alphas: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct AttributeArgs {
    /// JSONL of segmented documents
    #[arg(long)]
    docs: PathBuf,
    /// Gaussian or RMD pair model
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "input")]
    side: String,
    /// `md` or `rmd` [default: md for a Gaussian, rmd for a pair]
    #[arg(long)]
    score: Option<String>,
    /// `compositional` or `exact`
    #[arg(long, default_value = "compositional")]
    mode: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct NgramArgs {
    /// JSONL of `{"id", "tokens"}` records
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long, default_value_t = 4)]
    n_max: usize,
    /// Seeded subsample of this many sequences from each corpus
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// What a finished command reports for its manifest.
struct RunInfo {
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    /// The first output names the manifest entry and its directory.
    outputs: Vec<PathBuf>,
}

impl RunInfo {
    fn new(config: &impl Serialize) -> CliResult<Self> {
        Ok(RunInfo {
            config: serde_json::to_value(config)?,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    fn inputs<'a>(mut self, paths: impl IntoIterator<Item = &'a PathBuf>) -> Self {
        self.inputs.extend(paths.into_iter().cloned());
        self
    }

    fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.to_path_buf());
        self
    }
}

/// Runs the command line `argv` (including the program name) and returns
/// the process exit code.
pub fn dispatch(argv: &[String]) -> i32 {
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}\n\n{SYNOPSIS}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    eprintln!("\n{SYNOPSIS}");
                    1
                }
            };
        }
    };
    let threads = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) => Some(n),
                Err(_) => {
                    eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                    return 1;
                }
            },
            Err(_) => None,
        },
    };
    let result = match threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli.command)),
            Err(e) => Err(usage(format!("cannot start {n} threads: {e}"))),
        },
        None => run(cli.command),
    };
    match result.and_then(write_manifest) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{SYNOPSIS}");
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn write_manifest(info: RunInfo) -> CliResult<()> {
    let primary = info
        .outputs
        .first()
        .expect("every command writes an output");
    let dir = match primary.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let key = primary
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut inputs = BTreeMap::new();
    for path in &info.inputs {
        inputs.insert(path.display().to_string(), sha256_file(path)?);
        let sidecar = sidecar_path(path);
        if is_embedding_file(path) && sidecar.exists() {
            inputs.insert(sidecar.display().to_string(), sha256_file(&sidecar)?);
        }
    }
    let command = info
        .config
        .get("command")
        .and_then(|c| c.as_str())
        .unwrap_or_default()
        .to_string();
    let run = RunRecord {
        command,
        config: info.config,
        seeds: info.seeds,
        inputs,
        outputs: info
            .outputs
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
    };
    record_run(&dir, &key, run)?;
    Ok(())
}

/// Splices `--config` values into `argv` just after the subcommand path, so
/// that later command-line flags override them. Keys the subcommand does
/// not accept are ignored, which lets one file serve a whole pipeline.
fn expand_config(argv: &[String]) -> std::result::Result<Vec<String>, String> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().ok_or("--config needs a file")?.clone());
        } else if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.to_string());
        } else {
            rest.push(a.clone());
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("{path}: {e}"))?;
    let serde_json::Value::Object(entries) = value else {
        return Err(format!("{path}: config must be a JSON object"));
    };

    let (at, names) = subcommand_path(&rest);
    let root = Cli::command();
    let mut cmd = &root;
    for name in &names {
        match cmd.find_subcommand(name) {
            Some(c) => cmd = c,
            // Let the parser report the bad subcommand.
            None => return Ok(rest),
        }
    }
    let mut known: HashSet<String> = cmd
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    known.insert("threads".into());

    let mut extra = Vec::new();
    for (key, v) in entries {
        let flag = key.replace('_', "-");
        if !known.contains(&flag) {
            continue;
        }
        let flag = format!("--{flag}");
        match v {
            serde_json::Value::Null | serde_json::Value::Bool(false) => {}
            serde_json::Value::Bool(true) => extra.push(flag),
            serde_json::Value::Array(items) => {
                let parts: Vec<String> = items
                    .iter()
                    .map(scalar_text)
                    .collect::<Option<_>>()
                    .ok_or_else(|| format!("{path}: `{key}` must be a list of scalars"))?;
                extra.push(flag);
                extra.push(parts.join(","));
            }
            other => {
                let text = scalar_text(&other)
                    .ok_or_else(|| format!("{path}: `{key}` must be a scalar or a list"))?;
                extra.push(flag);
                extra.push(text);
            }
        }
    }
    rest.splice(at..at, extra);
    Ok(rest)
}

fn scalar_text(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Index just past the subcommand names, and the names themselves.
fn subcommand_path(args: &[String]) -> (usize, Vec<String>) {
    let mut names = Vec::new();
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if a.starts_with('-') {
            if !names.is_empty() {
                break;
            }
            i += if a == "--threads" { 2 } else { 1 };
            continue;
        }
        names.push(a.clone());
        i += 1;
        if !matches!(a.as_str(), "synth" | "eval") || names.len() == 2 {
            break;
        }
    }
    (i.min(args.len()), names)
}

fn run(command: Command) -> CliResult<RunInfo> {
    match command {
        Command::Synth(SynthCommand::Scenario(a)) => synth_scenario(a),
        Command::Synth(SynthCommand::Domain(a)) => synth_domain(a),
        Command::FitGaussian(a) => fit_gaussian(a),
        Command::FitClassifier(a) => fit_classifier(a),
        Command::Score(a) => score(a),
        Command::Combine(a) => combine(a),
        Command::Eval(EvalCommand::Auroc(a)) => eval_auroc(a),
        Command::Eval(EvalCommand::Kendall(a)) => eval_kendall(a),
        Command::Eval(EvalCommand::Qa(a)) => eval_qa(a),
        Command::Eval(EvalCommand::Survival(a)) => eval_survival(a),
        Command::Attribute(a) => attribute(a),
        Command::Ngram(a) => ngram(a),
    }
}

fn with_command(name: &str, args: &impl Serialize) -> CliResult<RunInfo> {
    let mut info = RunInfo::new(args)?;
    info.config = json!({ "command": name, "args": info.config });
    Ok(info)
}

fn is_embedding_file(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "emb")
}

fn load_store(path: &Path) -> CliResult<EmbeddingStore> {
    if path.extension().is_some_and(|e| e == "csv") {
        Ok(read_csv_store(path)?)
    } else {
        Ok(EmbeddingStore::load(path)?)
    }
}

fn list(text: &str) -> Vec<String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_side(text: &str) -> CliResult<Side> {
    text.parse()
        .map_err(|_| usage(format!("side must be `input` or `output`, got `{text}`")))
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Rows matching the filter, then capped at `max_rows` by a seeded
/// subsample that keeps the original order.
fn select_rows(
    store: &EmbeddingStore,
    filter: &RowFilter,
    max_rows: usize,
    seed: u64,
    stream: u64,
) -> CliResult<Matrix> {
    let datasets: Option<BTreeSet<String>> = filter
        .dataset
        .as_deref()
        .map(|d| list(d).into_iter().collect());
    let side = filter.side.as_deref().map(parse_side).transpose()?;
    let kept = store.filter(|m| {
        datasets.as_ref().is_none_or(|d| d.contains(&m.dataset))
            && filter.split.as_ref().is_none_or(|s| *s == m.split)
            && side.is_none_or(|s| s == m.side)
    });
    Ok(cap_rows(&kept.matrix, max_rows, seed, stream))
}

fn cap_rows(rows: &Matrix, max_rows: usize, seed: u64, stream: u64) -> Matrix {
    if rows.nrows() <= max_rows {
        return rows.clone();
    }
    let mut idx = SplitMix64::derive(seed, stream).sample_indices(rows.nrows(), max_rows);
    idx.sort_unstable();
    rows.select_rows(&idx)
}

fn synth_scenario(a: SynthScenarioArgs) -> CliResult<RunInfo> {
    let mut cfg = ScenarioConfig::new(a.seed, a.n_in, a.n_ood, a.shift, a.noise);
    cfg.d = a.d;
    if let Some(n) = a.n_fit_fg {
        cfg.n_fit_fg = n;
    }
    if let Some(n) = a.n_fit_bg {
        cfg.n_fit_bg = n;
    }
    let scenario = gen_selective_scenario(&cfg)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let description = a.out_dir.join("scenario.json");
    write_json(
        &description,
        &json!({ "config": scenario.config, "coefficients": scenario.coefficients }),
    )?;
    let mut info = with_command("synth scenario", &a)?
        .seed("seed", a.seed)
        .output(&description);
    for (name, store) in [
        ("fg_train.emb", &scenario.fg_train),
        ("bg_train.emb", &scenario.bg_train),
        ("pool.emb", &scenario.pool),
    ] {
        let path = a.out_dir.join(name);
        store.save(&path)?;
        info = info.output(&path);
    }
    Ok(info)
}

fn synth_domain(a: SynthDomainArgs) -> CliResult<RunInfo> {
    if !(a.std > 0.0) {
        return Err(usage("--std must be positive"));
    }
    let cov = if a.std == 1.0 {
        CovSpec::Identity
    } else {
        CovSpec::Diagonal(vec![a.std * a.std; a.d])
    };
    let spec = DomainSpec {
        split: a.split.clone(),
        cov,
        ..DomainSpec::standard(&a.name, a.n, a.d, a.shift, a.seed)
    };
    let store = gen_domain(&spec)?;
    ensure_parent(&a.out)?;
    store.save(&a.out)?;
    Ok(with_command("synth domain", &a)?
        .seed("seed", a.seed)
        .output(&a.out))
}

fn fit_gaussian(a: FitGaussianArgs) -> CliResult<RunInfo> {
    let fg_store = load_store(&a.store)?;
    let fg_rows = select_rows(&fg_store, &a.filter, a.max_rows, a.seed, 1)?;
    let mut info = with_command("fit-gaussian", &a)?
        .seed("seed", a.seed)
        .input(&a.store)
        .output(&a.out);
    let model = match &a.background {
        None => {
            if a.pooled {
                return Err(usage("--pooled needs --background"));
            }
            ModelFile::Gaussian(GaussianModel::fit(&fg_rows, a.ridge)?)
        }
        Some(bg_path) => {
            let bg_store = load_store(bg_path)?;
            let bg_filter = RowFilter {
                dataset: a.background_dataset.clone(),
                split: None,
                side: a.filter.side.clone(),
            };
            let bg_rows = select_rows(&bg_store, &bg_filter, a.max_rows, a.seed, 2)?;
            let mode = if a.pooled {
                CovarianceMode::Pooled
            } else {
                CovarianceMode::PerClass
            };
            let pair = GaussianPair::fit(
                &fg_rows,
                &bg_rows,
                a.ridge,
                a.background_ridge.unwrap_or(a.ridge),
                mode,
            )?;
            let side = a
                .filter
                .side
                .as_deref()
                .map(parse_side)
                .transpose()?
                .unwrap_or(Side::Input);
            info = info.input(bg_path);
            ModelFile::RmdScorer(RmdScorer::default().with_side(side, pair))
        }
    };
    ensure_parent(&a.out)?;
    save_model(&a.out, &model)?;
    Ok(info)
}

fn fit_classifier(a: FitClassifierArgs) -> CliResult<RunInfo> {
    let filter = |dataset: &Option<String>| RowFilter {
        dataset: dataset.clone(),
        split: None,
        side: None,
    };
    let pos = select_rows(
        &load_store(&a.pos)?,
        &filter(&a.pos_dataset),
        a.max_rows,
        a.seed,
        1,
    )?;
    let neg = select_rows(
        &load_store(&a.neg)?,
        &filter(&a.neg_dataset),
        a.max_rows,
        a.seed,
        2,
    )?;
    let cfg = LogisticConfig {
        l2: a.l2,
        max_iter: a.max_iter,
        tol: a.tol,
        balance_seed: (!a.no_balance).then_some(a.seed),
    };
    let model = train_logistic(&pos, &neg, &cfg)?;
    if !model.converged {
        eprintln!(
            "warning: logistic fit stopped after {} iterations without converging",
            model.n_iter
        );
    }
    ensure_parent(&a.out)?;
    save_model(&a.out, &ModelFile::BinaryClassifier(model))?;
    Ok(with_command("fit-classifier", &a)?
        .seed("seed", a.seed)
        .input(&a.pos)
        .input(&a.neg)
        .output(&a.out))
}

fn some(values: Vec<f64>) -> Vec<Option<f64>> {
    values.into_iter().map(Some).collect()
}

fn score(a: ScoreArgs) -> CliResult<RunInfo> {
    let store = load_store(&a.store)?;
    let n = store.len();
    let mut info = with_command("score", &a)?
        .seed("knn_seed", a.knn_seed)
        .input(&a.store)
        .output(&a.out);
    let mut md = vec![None; n];
    let mut rmd = vec![None; n];
    let mut logit = vec![None; n];
    let mut knn = vec![None; n];

    if a.rmd_model.is_some() && (a.fg.is_some() || a.bg.is_some()) {
        return Err(usage("use either --rmd-model or --fg/--bg, not both"));
    }
    if a.bg.is_some() && a.fg.is_none() {
        return Err(usage("--bg needs --fg"));
    }
    if let Some(path) = &a.rmd_model {
        let side = parse_side(&a.side)?;
        let scorer = match load_model(path)? {
            ModelFile::RmdScorer(s) => s,
            other => {
                return Err(Error::SchemaMismatch(format!(
                    "expected an rmd_scorer model, found {}",
                    other.kind()
                ))
                .into())
            }
        };
        let pair = scorer.pair(side)?;
        md = some(batch_score(&pair.foreground, &store.matrix)?);
        rmd = some(batch_score(pair, &store.matrix)?);
        info = info.input(path);
    } else if let Some(fg_path) = &a.fg {
        let fg = load_gaussian(fg_path)?;
        md = some(batch_score(&fg, &store.matrix)?);
        info = info.input(fg_path);
        if let Some(bg_path) = &a.bg {
            let pair = GaussianPair::new(fg, load_gaussian(bg_path)?)?;
            rmd = some(batch_score(&pair, &store.matrix)?);
            info = info.input(bg_path);
        }
    }
    if let Some(path) = &a.classifier {
        let clf = load_classifier(path)?;
        logit = some(batch_score(&clf, &store.matrix)?);
        info = info.input(path);
    }
    if let Some(path) = &a.knn_ref {
        let reference = load_store(path)?;
        let index = KnnIndex::new(&reference.matrix, a.knn_k, a.knn_alpha)?;
        knn = some(index.batch_score(&store.matrix, a.knn_seed)?);
        info = info.input(path);
    }
    let ppx: Vec<Option<f64>> = store.meta.iter().map(|m| m.perplexity).collect();

    let metrics: BTreeSet<&String> = store.meta.iter().flat_map(|m| m.quality.keys()).collect();
    let mut columns: Vec<String> = SCORE_COLUMNS.iter().map(|c| c.to_string()).collect();
    columns.extend(metrics.iter().map(|k| format!("{QUALITY_PREFIX}{k}")));
    let mut table = ScoreTable::new(columns);
    for (i, m) in store.meta.iter().enumerate() {
        let mut values = vec![md[i], rmd[i], logit[i], knn[i], ppx[i]];
        values.extend(metrics.iter().map(|k| m.quality.get(*k).copied()));
        table.rows.push(ScoreRow {
            id: m.id.clone(),
            dataset: m.dataset.clone(),
            side: m.side.to_string(),
            values,
        });
    }
    ensure_parent(&a.out)?;
    table.save(&a.out)?;
    Ok(info)
}

fn combine(a: CombineArgs) -> CliResult<RunInfo> {
    let mut table = ScoreTable::load(&a.scores)?;
    let mut info = with_command("combine", &a)?
        .seed("seed", a.seed)
        .input(&a.scores)
        .output(&a.out);

    let ppx = table.column(&a.ppx_column)?;
    let ood = table.column(&a.ood_column)?;
    let both: Vec<usize> = (0..table.len())
        .filter(|&i| ppx[i].is_some() && ood[i].is_some())
        .collect();
    let reference_rows: Vec<usize> = match a.reference.as_str() {
        "pool" => both.clone(),
        "in-domain" => {
            let names: BTreeSet<String> = list(&a.in_domain).into_iter().collect();
            both.iter()
                .copied()
                .filter(|&i| names.contains(&table.rows[i].dataset))
                .collect()
        }
        other => {
            return Err(usage(format!(
                "--reference must be `pool` or `in-domain`, got `{other}`"
            )))
        }
    };
    let pick = |col: &[Option<f64>]| -> Vec<f64> {
        reference_rows
            .iter()
            .map(|&i| col[i].expect("row has both values"))
            .collect()
    };
    let ref_ppx = PercentileReference::new(&pick(&ppx))?;
    let ref_ood = PercentileReference::new(&pick(&ood))?;
    let mut prsum = vec![None; table.len()];
    for &i in &both {
        let (p, o) = (ppx[i].expect("present"), ood[i].expect("present"));
        prsum[i] = Some(ref_ppx.percentile_rank(p)? + ref_ood.percentile_rank(o)?);
    }
    table.set_column(&a.prsum_name, prsum)?;

    match (&a.linreg_model, &a.linreg_features) {
        (Some(_), Some(_)) => {
            return Err(usage(
                "use either --linreg-model or --linreg-features, not both",
            ));
        }
        (Some(path), None) => {
            let model = load_linear_combiner(path)?;
            let mut col = vec![None; table.len()];
            for (i, cell) in col.iter_mut().enumerate() {
                *cell = model.abstention_score(&table.row_map(i)).ok();
            }
            table.set_column(&a.linreg_name, col)?;
            info = info.input(path);
        }
        (None, Some(features)) => {
            let col = fit_linreg(&table, &a, &list(features))?;
            table.set_column(&a.linreg_name, col)?;
        }
        (None, None) => {}
    }
    ensure_parent(&a.out)?;
    table.save(&a.out)?;
    Ok(info)
}

/// Fits on a seeded `train_fraction` of the complete rows and scores every
/// other row with all features present. Training rows are left empty so
/// evaluation never sees them.
fn fit_linreg(
    table: &ScoreTable,
    a: &CombineArgs,
    features: &[String],
) -> CliResult<Vec<Option<f64>>> {
    if features.is_empty() {
        return Err(usage("--linreg-features is empty"));
    }
    if !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
        return Err(usage("--train-fraction must lie in (0, 1)"));
    }
    let cols: Vec<Vec<Option<f64>>> = features
        .iter()
        .map(|f| table.column(f))
        .collect::<Result<_, _>>()?;
    let quality = table.column(&a.quality_column)?;
    let has_features = |i: usize| cols.iter().all(|c| c[i].is_some());
    let complete: Vec<usize> = (0..table.len())
        .filter(|&i| has_features(i) && quality[i].is_some())
        .collect();
    let n_train =
        ((a.train_fraction * complete.len() as f64).round() as usize).max(features.len() + 1);
    let mut picks = SplitMix64::derive(a.seed, 1).sample_indices(complete.len(), n_train);
    picks.sort_unstable();
    let train: Vec<usize> = picks.iter().map(|&p| complete[p]).collect();

    let mut x = Matrix::zeros(train.len(), features.len());
    let mut y = Vec::with_capacity(train.len());
    for (r, &i) in train.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            x[(r, j)] = c[i].expect("complete row");
        }
        y.push(quality[i].expect("complete row"));
    }
    let model = LinearCombiner::fit(features, &x, &y)?;
    if let Some(path) = &a.linreg_model_out {
        ensure_parent(path)?;
        save_model(path, &ModelFile::LinearCombiner(model.clone()))?;
    }
    let train: HashSet<usize> = train.into_iter().collect();
    Ok((0..table.len())
        .map(|i| {
            if train.contains(&i) || !has_features(i) {
                None
            } else {
                let row: BTreeMap<String, f64> = features
                    .iter()
                    .zip(&cols)
                    .map(|(f, c)| (f.clone(), c[i].expect("checked")))
                    .collect();
                model.abstention_score(&row).ok()
            }
        })
        .collect())
}

fn parse_alphas(text: Option<&str>) -> CliResult<Vec<f64>> {
    match text {
        None => Ok(default_alpha_grid()),
        Some(t) => list(t)
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| usage(format!("bad alpha `{s}`")))
            })
            .collect(),
    }
}

/// Rows where every named column has a value.
fn complete_rows(table: &ScoreTable, columns: &[&str]) -> CliResult<(Vec<usize>, Vec<Vec<f64>>)> {
    let cols: Vec<Vec<Option<f64>>> = columns
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<_, _>>()?;
    let rows: Vec<usize> = (0..table.len())
        .filter(|&i| cols.iter().all(|c| c[i].is_some()))
        .collect();
    let values = cols
        .iter()
        .map(|c| rows.iter().map(|&i| c[i].expect("complete")).collect())
        .collect();
    Ok((rows, values))
}

fn report(io: &EvalOutput, value: &serde_json::Value) -> CliResult<()> {
    write_json(&with_suffix(&io.out, "json"), value)?;
    // A closed stdout (e.g. piped into `head`) is not an error; the file is written.
    let _ = writeln!(
        std::io::stdout(),
        "{}",
        serde_json::to_string_pretty(value)?
    );
    Ok(())
}

fn eval_info(name: &str, args: &impl Serialize, io: &EvalOutput) -> CliResult<RunInfo> {
    Ok(with_command(name, args)?
        .input(&io.scores)
        .output(&with_suffix(&io.out, "json")))
}

fn write_curve_csv(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> CliResult<()> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(Error::from)?;
    for r in rows {
        w.write_record(&r).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn eval_auroc(a: EvalAurocArgs) -> CliResult<RunInfo> {
    let table = ScoreTable::load(&a.io.scores)?;
    let names: BTreeSet<String> = list(&a.in_domain).into_iter().collect();
    let (rows, values) = complete_rows(&table, &[&a.column])?;
    let (mut neg, mut pos) = (Vec::new(), Vec::new());
    for (&i, &s) in rows.iter().zip(&values[0]) {
        if names.contains(&table.rows[i].dataset) {
            neg.push(s);
        } else {
            pos.push(s);
        }
    }
    let value = auroc(&neg, &pos)?;
    let points = roc_points(&neg, &pos)?;
    report(
        &a.io,
        &json!({
            "column": a.column,
            "auroc": value,
            "n_negative": neg.len(),
            "n_positive": pos.len(),
            "n_skipped": table.len() - rows.len(),
        }),
    )?;
    let mut info = eval_info("eval auroc", &a, &a.io)?;
    let csv_path = with_suffix(&a.io.out, "csv");
    write_curve_csv(
        &csv_path,
        &["fpr".into(), "tpr".into()],
        points
            .iter()
            .map(|(f, t)| vec![f.to_string(), t.to_string()]),
    )?;
    info = info.output(&csv_path);
    if a.io.svg {
        let path = with_suffix(&a.io.out, "svg");
        let chart = svg::line_chart(
            &format!("ROC ({}), AUROC {value:.4}", a.column),
            "false positive rate",
            "true positive rate",
            &[svg::Series {
                name: a.column.clone(),
                points,
            }],
        );
        write_text(&path, &chart)?;
        info = info.output(&path);
    }
    Ok(info)
}

fn eval_kendall(a: EvalKendallArgs) -> CliResult<RunInfo> {
    let table = ScoreTable::load(&a.io.scores)?;
    let (rows, values) = complete_rows(&table, &[&a.column, &a.quality_column])?;
    let score: Vec<f64> = if a.raw {
        values[0].clone()
    } else {
        values[0].iter().map(|s| -s).collect()
    };
    let result = kendall_test(&score, &values[1])?;
    report(
        &a.io,
        &json!({
            "column": a.column,
            "quality_column": a.quality_column,
            "orientation": if a.raw { "raw" } else { "negated" },
            "tau": result.tau,
            "p_value": result.p_value,
            "n": result.n,
            "n_skipped": table.len() - rows.len(),
        }),
    )?;
    eval_info("eval kendall", &a, &a.io)
}

fn eval_qa(a: EvalQaArgs) -> CliResult<RunInfo> {
    let table = ScoreTable::load(&a.io.scores)?;
    let columns = list(&a.column);
    if columns.is_empty() {
        return Err(usage("--column is empty"));
    }
    let alphas = parse_alphas(a.alphas.as_deref())?;
    let mut wanted: Vec<&str> = columns.iter().map(String::as_str).collect();
    wanted.push(&a.quality_column);
    let (rows, values) = complete_rows(&table, &wanted)?;
    let quality = values.last().expect("quality column");
    let mut curves = BTreeMap::new();
    let mut ordered = Vec::with_capacity(columns.len());
    for (name, scores) in columns.iter().zip(&values) {
        let curve = qa_curve(scores, quality, &alphas)?;
        curves.insert(name.clone(), curve.clone());
        ordered.push(curve);
    }
    report(
        &a.io,
        &json!({
            "quality_column": a.quality_column,
            "n": rows.len(),
            "n_skipped": table.len() - rows.len(),
            "curves": curves,
        }),
    )?;
    let mut info = eval_info("eval qa", &a, &a.io)?;
    let csv_path = with_suffix(&a.io.out, "csv");
    let mut header = vec!["alpha".to_string(), "n_kept".to_string()];
    header.extend(columns.iter().cloned());
    write_curve_csv(
        &csv_path,
        &header,
        (0..alphas.len()).map(|p| {
            let mut rec = vec![
                alphas[p].to_string(),
                ordered[0].points[p].n_kept.to_string(),
            ];
            rec.extend(ordered.iter().map(|c| c.points[p].mean_quality.to_string()));
            rec
        }),
    )?;
    info = info.output(&csv_path);
    if a.io.svg {
        let path = with_suffix(&a.io.out, "svg");
        let series: Vec<svg::Series> = columns
            .iter()
            .zip(&ordered)
            .map(|(name, c)| svg::Series {
                name: format!("{name} (area {:.4})", c.area),
                points: c.points.iter().map(|p| (p.alpha, p.mean_quality)).collect(),
            })
            .collect();
        let chart = svg::line_chart(
            "Quality vs abstention",
            "abstention rate",
            &a.quality_column,
            &series,
        );
        write_text(&path, &chart)?;
        info = info.output(&path);
    }
    Ok(info)
}

fn eval_survival(a: EvalSurvivalArgs) -> CliResult<RunInfo> {
    let table = ScoreTable::load(&a.io.scores)?;
    let alphas = parse_alphas(a.alphas.as_deref())?;
    let (rows, values) = complete_rows(&table, &[&a.column])?;
    let labels: Vec<&str> = rows
        .iter()
        .map(|&i| table.rows[i].dataset.as_str())
        .collect();
    let surv = survival_counts(&values[0], &labels, &alphas)?;
    report(
        &a.io,
        &json!({
            "column": a.column,
            "n": rows.len(),
            "n_skipped": table.len() - rows.len(),
            "survival": surv,
        }),
    )?;
    let mut info = eval_info("eval survival", &a, &a.io)?;
    let csv_path = with_suffix(&a.io.out, "csv");
    let mut header = vec!["alpha".to_string()];
    header.extend(surv.counts.keys().cloned());
    write_curve_csv(
        &csv_path,
        &header,
        (0..alphas.len()).map(|p| {
            let mut rec = vec![alphas[p].to_string()];
            rec.extend(surv.counts.values().map(|c| c[p].to_string()));
            rec
        }),
    )?;
    info = info.output(&csv_path);
    if a.io.svg {
        let path = with_suffix(&a.io.out, "svg");
        let series: Vec<svg::Series> = surv
            .counts
            .iter()
            .map(|(name, c)| svg::Series {
                name: name.clone(),
                points: alphas.iter().zip(c).map(|(&x, &y)| (x, y as f64)).collect(),
            })
            .collect();
        let chart = svg::line_chart(
            &format!("Survival under {}", a.column),
            "abstention rate",
            "examples kept",
            &series,
        );
        write_text(&path, &chart)?;
        info = info.output(&path);
    }
    Ok(info)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

fn attribute(a: AttributeArgs) -> CliResult<RunInfo> {
    let mode = match a.mode.as_str() {
        "compositional" => AttributionMode::Compositional,
        "exact" => AttributionMode::Exact,
        other => {
            return Err(usage(format!(
                "--mode must be `compositional` or `exact`, got `{other}`"
            )))
        }
    };
    let side = parse_side(&a.side)?;
    let model = load_model(&a.model)?;
    let scorer: Box<dyn OodScorer> = match (&model, a.score.as_deref()) {
        (ModelFile::Gaussian(g), None | Some("md")) => Box::new(g.clone()),
        (ModelFile::RmdScorer(s), None | Some("rmd")) => Box::new(s.pair(side)?.clone()),
        (ModelFile::RmdScorer(s), Some("md")) => Box::new(s.pair(side)?.foreground.clone()),
        (_, Some(other)) if !matches!(other, "md" | "rmd") => {
            return Err(usage(format!(
                "--score must be `md` or `rmd`, got `{other}`"
            )));
        }
        (m, _) => {
            return Err(Error::SchemaMismatch(format!(
                "cannot attribute with a {} model",
                m.kind()
            ))
            .into());
        }
    };
    let docs: Vec<SegmentedDocument> = read_jsonl(&a.docs)?;
    ensure_parent(&a.out)?;
    let file = fs::File::create(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut w = BufWriter::new(file);
    for doc in &docs {
        for rec in sentence_attribution(doc, scorer.as_ref(), mode)? {
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(&a.out, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    Ok(with_command("attribute", &a)?
        .input(&a.docs)
        .input(&a.model)
        .output(&a.out))
}

#[derive(Deserialize)]
struct TokenRecord {
    #[allow(dead_code)]
    id: String,
    tokens: Vec<TokenId>,
}

fn ngram(a: NgramArgs) -> CliResult<RunInfo> {
    if a.n_max == 0 {
        return Err(usage("--n-max must be at least 1"));
    }
    let load = |path: &Path, stream: u64| -> CliResult<Vec<Vec<TokenId>>> {
        let mut seqs: Vec<Vec<TokenId>> = read_jsonl::<TokenRecord>(path)?
            .into_iter()
            .map(|r| r.tokens)
            .collect();
        if let Some(k) = a.sample.filter(|&k| k < seqs.len()) {
            let mut idx = SplitMix64::derive(a.seed, stream).sample_indices(seqs.len(), k);
            idx.sort_unstable();
            seqs = idx
                .into_iter()
                .map(|i| std::mem::take(&mut seqs[i]))
                .collect();
        }
        Ok(seqs)
    };
    let test = load(&a.test, 1)?;
    let train = load(&a.train, 2)?;
    let tp = build_profile(&test, a.n_max);
    let rp = build_profile(&train, a.n_max);
    let rep = overlap_report(&tp, &rp);
    write_json(
        &a.out,
        &json!({
            "n_test_sequences": test.len(),
            "n_train_sequences": train.len(),
            "test_tokens": tp.token_count(),
            "train_tokens": rp.token_count(),
            "orders": rep.orders,
            "overall": rep.overall,
        }),
    )?;
    Ok(with_command("ngram", &a)?
        .seed("seed", a.seed)
        .inputs([&a.test, &a.train])
        .output(&a.out))
}
