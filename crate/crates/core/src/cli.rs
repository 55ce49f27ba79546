//! Command-line front end: one subcommand per pipeline stage plus `pipeline`,
//! which chains expand → rerank → evaluate (→ compare when committee
//! statistics are given).
//!
//! Options may also come from a flat `key = value` file passed with
//! `--config`; keys are long flag names without dashes. Command-line flags
//! override the file, which overrides built-in defaults. Data goes to files,
//! logs to stderr, and a short human-readable summary to stdout.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::bm25::{self, Bm25Params, InvertedIndex, QueryWeighting, INDEX_FORMAT_VERSION};
use crate::corpus::{self, CandidateSet, PassageStore, QueryRecord, QueryStore, RecordStore};
use crate::eval::{self, Gain, Metric, MetricConfig};
use crate::expansion::{self, ExpansionMap, FetchOptions, FilterPolicy};
use crate::pairs::{self, PairOrdering};
use crate::reranker::{
    self, ConstantScorer, LexicalOverlapScorer, NegativePool, OracleScorer, RelevanceScorer,
    RemoteScorer, Reranker, SamplingConfig, Tokenization, TruncationConfig, WordPiece,
};
use crate::service::ServiceClient;
use crate::text::{read_stopwords, Analyzer, AnalyzerConfig};

static VERSION: LazyLock<String> = LazyLock::new(|| {
    format!(
        "{} (index format {})",
        env!("CARGO_PKG_VERSION"),
        INDEX_FORMAT_VERSION
    )
});

#[derive(Parser, Debug)]
#[command(name = "passage-rerank", about = "Query expansion, BM25 candidates, re-ranking and evaluation for passage retrieval")]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel stages [default: available parallelism].
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Mine equivalent-query pairs from qrels and export seq2seq training files.
    MinePairs(MinePairsArgs),
    /// Build a BM25 index over a passage collection.
    BuildIndex(BuildIndexArgs),
    /// Retrieve BM25 top-k candidates for each query.
    Retrieve(RetrieveArgs),
    /// Append paraphrase beams to queries.
    Expand(ExpandArgs),
    /// Score and sort candidates for each query into a run file.
    Rerank(RerankArgs),
    /// Compute MAP, nDCG and P@10 for a run file.
    Evaluate(EvaluateArgs),
    /// Classify per-topic scores against committee best/median/worst.
    Compare(CompareArgs),
    /// expand → rerank → evaluate (→ compare).
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OrderingArg {
    Unordered,
    BothDirections,
}

#[derive(Args, Debug, Clone)]
pub struct MinePairsArgs {
    #[arg(long)]
    pub qrels: PathBuf,
    /// Query texts; required for the seq2seq export.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub min_grade: u32,
    #[arg(long, value_enum, default_value_t = OrderingArg::BothDirections)]
    pub ordering: OrderingArg,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzerOpts {
    /// English stemming.
    #[arg(long)]
    pub stem: bool,
    /// Stopword list, one word per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub collection: PathBuf,
    /// Index file to write.
    #[arg(long)]
    pub index: PathBuf,
    #[command(flatten)]
    pub analyzer: AnalyzerOpts,
}

#[derive(Args, Debug, Clone)]
pub struct Bm25Opts {
    #[arg(long, default_value_t = 0.9)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.4)]
    pub b: f64,
    /// Weight query terms by their frequency in the query.
    #[arg(long)]
    pub query_tf: bool,
    #[arg(long, default_value_t = 1000)]
    pub topk: usize,
}

impl Bm25Opts {
    fn params(&self) -> Result<Bm25Params> {
        let mut p = Bm25Params::new(self.k1, self.b)?;
        if self.query_tf {
            p.weighting = QueryWeighting::TermFrequency;
        }
        Ok(p)
    }
}

#[derive(Args, Debug, Clone)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// Passage texts, needed for `--out`.
    #[arg(long)]
    pub collection: Option<PathBuf>,
    /// Candidates in top1000 format.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// BM25 ranking as a run file.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long, default_value = "bm25")]
    pub tag: String,
    #[command(flatten)]
    pub bm25: Bm25Opts,
}

#[derive(Args, Debug, Clone)]
pub struct ExpansionOpts {
    /// Precomputed beams: query_id, beam_rank, log_likelihood, text.
    #[arg(long)]
    pub expansions: Option<PathBuf>,
    /// Paraphrase service base URL.
    #[arg(long)]
    pub service: Option<String>,
    /// Beams to request and append.
    #[arg(long, default_value_t = expansion::DEFAULT_EXPANSION_BEAMS)]
    pub num_beams: usize,
    /// none | dedup-exact | min-log-likelihood:<θ> | lexical-overlap:<τ>
    #[arg(long, default_value = "none")]
    pub filter: String,
    /// Use the original queries.
    #[arg(long)]
    pub no_expansion: bool,
    /// Where to save beams fetched from the service.
    #[arg(long)]
    pub beams_out: Option<PathBuf>,
}

impl Default for ExpansionOpts {
    fn default() -> Self {
        ExpansionOpts {
            expansions: None,
            service: None,
            num_beams: expansion::DEFAULT_EXPANSION_BEAMS,
            filter: "none".into(),
            no_expansion: false,
            beams_out: None,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ExpandArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[command(flatten)]
    pub expansion: ExpansionOpts,
    /// Expanded queries as `id <TAB> text`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct CandidateOpts {
    /// Candidate sets in top1000 format.
    #[arg(long)]
    pub top1000: Option<PathBuf>,
    /// BM25 index to retrieve candidates from when no top1000 file is given.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Passage texts for candidates that carry none.
    #[arg(long)]
    pub collection: Option<PathBuf>,
    #[command(flatten)]
    pub bm25: Bm25Opts,
}

#[derive(Args, Debug, Clone)]
pub struct ScorerOpts {
    /// lexical | oracle | constant[:<p>] | file:<path> | remote:<url>
    #[arg(long, default_value = "lexical")]
    pub scorer: String,
    #[arg(long, default_value_t = reranker::DEFAULT_MAX_QUERY_TOKENS)]
    pub max_query_tokens: usize,
    #[arg(long, default_value_t = reranker::DEFAULT_TOTAL_BUDGET)]
    pub total_budget: usize,
    #[arg(long, default_value_t = reranker::DEFAULT_SPECIAL_TOKEN_OVERHEAD)]
    pub special_tokens: usize,
    /// Subword vocabulary; token budgets then count subword pieces.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Pairs per request for the remote scorer.
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Concurrent requests per query for the remote scorer.
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NegativesFrom {
    Candidates,
    Collection,
}

#[derive(Args, Debug, Clone)]
pub struct RerankArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[command(flatten)]
    pub candidates: CandidateOpts,
    #[command(flatten)]
    pub expansion: ExpansionOpts,
    #[command(flatten)]
    pub scorer: ScorerOpts,
    /// Judgments for the oracle scorer and training-pair sampling.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value = "run")]
    pub tag: String,
    /// Also write labeled training pairs (query_id, passage_id, label).
    #[arg(long)]
    pub training_pairs_out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub negatives_per_positive: usize,
    #[arg(long, value_enum, default_value_t = NegativesFrom::Candidates)]
    pub negatives_from: NegativesFrom,
    #[arg(long, default_value_t = 1)]
    pub min_grade: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Map,
    Ndcg,
    P10,
    All,
}

impl MetricArg {
    fn metrics(self) -> Vec<Metric> {
        match self {
            MetricArg::Map => vec![Metric::Map],
            MetricArg::Ndcg => vec![Metric::Ndcg],
            MetricArg::P10 => vec![Metric::P10],
            MetricArg::All => Metric::ALL.to_vec(),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct EvalOpts {
    #[arg(long, value_enum, default_value_t = MetricArg::All)]
    pub metric: MetricArg,
    /// exponential | linear
    #[arg(long, default_value = "exponential")]
    pub ndcg_gain: String,
    #[arg(long)]
    pub ndcg_cutoff: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub binarize_threshold: u32,
}

impl EvalOpts {
    fn config(&self) -> Result<MetricConfig> {
        let cfg = MetricConfig {
            binarize_threshold: self.binarize_threshold,
            ndcg_gain: self.ndcg_gain.parse::<Gain>()?,
            ndcg_cutoff: self.ndcg_cutoff,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[command(flatten)]
    pub eval: EvalOpts,
    /// Per-topic scores as `topic_id <TAB> metric <TAB> value`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    /// Per-topic scores written by `evaluate`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Run file to evaluate when no scores file is given.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Committee statistics: topic_id, metric, best, median, worst.
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long, default_value_t = eval::DEFAULT_BUCKET_EPSILON)]
    pub epsilon: f64,
    #[command(flatten)]
    pub eval: EvalOpts,
    /// Bucket report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct PipelineArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[command(flatten)]
    pub candidates: CandidateOpts,
    #[command(flatten)]
    pub expansion: ExpansionOpts,
    #[command(flatten)]
    pub scorer: ScorerOpts,
    #[command(flatten)]
    pub eval: EvalOpts,
    /// Committee statistics; adds a bucket report.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long, default_value_t = eval::DEFAULT_BUCKET_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value = "run")]
    pub tag: String,
    /// Directory for expanded.tsv, run.txt, eval.tsv and buckets.tsv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status: 0 on success, 1 on failure, 2 on usage errors.
pub fn run_subcommand<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match apply_config_file(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    let matches = match command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn command() -> clap::Command {
    Cli::command()
        .version(VERSION.as_str())
        .args_override_self(true)
        .mut_subcommands(|s| s.args_override_self(true))
}

/// Reads `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key = value", i + 1))?;
        out.push((k.trim().replace('_', "-"), v.trim().to_owned()));
    }
    Ok(out)
}

const GLOBAL_VALUE_FLAGS: [&str; 3] = ["--config", "--threads", "--seed"];

/// Splices options from a `--config` file in front of the user's own flags,
/// right after the subcommand name, so that the later command-line
/// occurrence wins.
fn apply_config_file(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut config_path = None;
    let mut sub_pos = None;
    let mut i = 1;
    while i < strs.len() {
        let a = &strs[i];
        if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_owned());
        } else if a == "--config" {
            config_path = strs.get(i + 1).cloned();
            i += 1;
        } else if GLOBAL_VALUE_FLAGS.contains(&a.as_str()) {
            i += 1;
        } else if sub_pos.is_none() && !a.starts_with('-') {
            sub_pos = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(sub_pos)) = (config_path, sub_pos) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let root = Cli::command();
    let Some(sub) = root.find_subcommand(&strs[sub_pos]) else {
        return Ok(argv);
    };
    let mut takes_value: HashMap<String, bool> = HashMap::new();
    for arg in sub.get_arguments().chain(root.get_arguments()) {
        if let Some(long) = arg.get_long() {
            takes_value.insert(long.to_owned(), arg.get_action().takes_values());
        }
    }
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in parse_config_file(&text)? {
        match takes_value.get(&key) {
            Some(true) => {
                injected.push(format!("--{key}").into());
                injected.push(value.into());
            }
            Some(false) => {
                if matches!(value.to_ascii_lowercase().as_str(), "true" | "yes" | "1" | "on") {
                    injected.push(format!("--{key}").into());
                }
            }
            None => log::debug!("config key {key:?} does not apply to {}", strs[sub_pos]),
        }
    }
    let mut out = argv;
    out.splice(sub_pos + 1..sub_pos + 1, injected);
    Ok(out)
}

fn execute(cli: &Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building thread pool")?;
    pool.install(|| match &cli.command {
        Command::MinePairs(a) => mine_pairs(a),
        Command::BuildIndex(a) => build_index(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Expand(a) => expand(a).map(|_| ()),
        Command::Rerank(a) => rerank(a, cli.seed),
        Command::Evaluate(a) => evaluate(a).map(|_| ()),
        Command::Compare(a) => compare(a),
        Command::Pipeline(a) => pipeline(a, cli.seed),
    })
}

fn require_inputs<'a>(paths: impl IntoIterator<Item = Option<&'a PathBuf>>) -> Result<()> {
    let missing: Vec<String> = paths
        .into_iter()
        .flatten()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        bail!("missing input file(s): {}", missing.join(", "));
    }
    Ok(())
}

fn check_tag(tag: &str) -> Result<()> {
    if tag.is_empty() || tag.chars().any(char::is_whitespace) {
        bail!("run tag must be non-empty and contain no whitespace, got {tag:?}");
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn read_with<T>(path: &Path, f: impl FnOnce(BufReader<File>) -> crate::Result<T>) -> Result<T> {
    f(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> crate::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn mine_pairs(a: &MinePairsArgs) -> Result<()> {
    require_inputs([Some(&a.qrels), a.queries.as_ref()])?;
    let qrels = read_with(&a.qrels, corpus::parse_qrels)?;
    let groups = pairs::group_by_passage(&qrels, a.min_grade)?;
    let report = pairs::mining_report(&groups);
    let ordering = match a.ordering {
        OrderingArg::Unordered => PairOrdering::Unordered,
        OrderingArg::BothDirections => PairOrdering::BothDirections,
    };
    let mined = pairs::mine_pairs(&groups, ordering);

    write_with(&a.out.join("report.tsv"), |w| report.write_tsv(w))?;
    write_with(&a.out.join("pairs.tsv"), |w| {
        for p in &mined {
            writeln!(w, "{}\t{}\t{}", p.via_passage_id, p.source_query_id, p.target_query_id)?;
        }
        Ok(())
    })?;
    if let Some(qpath) = &a.queries {
        let queries = read_with(qpath, corpus::parse_queries)?;
        let mut src = create(&a.out.join("source.txt"))?;
        let mut tgt = create(&a.out.join("target.txt"))?;
        pairs::export_seq2seq(&mined, &queries, &mut src, &mut tgt).context("exporting pairs")?;
        src.flush()?;
        tgt.flush()?;
    }

    println!("Num. passages\tNum. matched queries");
    for (k, n) in report.capped_histogram(10) {
        let label = if k >= 10 { "≥10".to_string() } else { k.to_string() };
        println!("{n}\t{label}");
    }
    println!("judgments: {}", report.total_judgments);
    println!("unique unordered pairs: {}", report.unique_unordered_pairs);
    println!("pair occurrences: {}", report.pair_occurrences);
    println!("multi-query passages: {:.2}%", 100.0 * report.multi_query_fraction);
    println!("exported pairs: {}", mined.len());
    Ok(())
}

fn analyzer_from(opts: &AnalyzerOpts) -> Result<Analyzer> {
    let stopwords = match &opts.stopwords {
        Some(p) => read_with(p, read_stopwords)?,
        None => Default::default(),
    };
    Ok(Analyzer::new(AnalyzerConfig {
        stem: opts.stem,
        stopwords,
    }))
}

fn build_index(a: &BuildIndexArgs) -> Result<()> {
    require_inputs([Some(&a.collection), a.analyzer.stopwords.as_ref()])?;
    let passages = read_with(&a.collection, corpus::parse_collection)?;
    let index = InvertedIndex::build(&passages, &analyzer_from(&a.analyzer)?)?;
    write_with(&a.index, |w| index.write_to(w))?;
    println!(
        "indexed {} passages, {} terms, avgdl {:.3}",
        index.num_docs(),
        index.num_terms(),
        index.avgdl()
    );
    Ok(())
}

fn load_index(path: &Path) -> Result<InvertedIndex> {
    read_with(path, InvertedIndex::read_from)
}

fn retrieve_sets(
    index: &InvertedIndex,
    queries: &[QueryRecord],
    opts: &Bm25Opts,
) -> Result<Vec<(CandidateSet, corpus::Ranking)>> {
    use rayon::prelude::*;
    let params = opts.params()?;
    let analyzer = index.analyzer();
    queries
        .par_iter()
        .map(|q| {
            let mut ranking = bm25::search(
                index,
                &analyzer.analyze(&q.text),
                opts.topk.min(corpus::MAX_CANDIDATES),
                &params,
            )?;
            ranking.query_id = q.id.clone();
            let mut set = CandidateSet::new(&q.id);
            set.query_text = Some(q.text.clone());
            for e in &ranking.entries {
                set.push(e.passage_id.clone(), None)?;
            }
            Ok((set, ranking))
        })
        .collect()
}

fn retrieve(a: &RetrieveArgs) -> Result<()> {
    require_inputs([Some(&a.index), Some(&a.queries), a.collection.as_ref()])?;
    check_tag(&a.tag)?;
    if a.out.is_none() && a.run.is_none() {
        bail!("nothing to write: pass --out and/or --run");
    }
    let index = load_index(&a.index)?;
    let queries = read_with(&a.queries, corpus::parse_queries)?;
    let results = retrieve_sets(&index, queries.records(), &a.bm25)?;
    if let Some(out) = &a.out {
        let path = a
            .collection
            .as_ref()
            .ok_or_else(|| anyhow!("--out needs --collection for passage texts"))?;
        let passages = read_with(path, corpus::parse_collection)?;
        let sets: Vec<CandidateSet> = results.iter().map(|(s, _)| s.clone()).collect();
        write_with(out, |w| corpus::write_top1000(&sets, Some(&queries), Some(&passages), w))?;
    }
    if let Some(run) = &a.run {
        let rankings: Vec<corpus::Ranking> = results.into_iter().map(|(_, r)| r).collect();
        write_with(run, |w| corpus::write_run_file(&rankings, &a.tag, w))?;
    }
    println!("retrieved candidates for {} queries", queries.len());
    Ok(())
}

/// Loads beams from a file or the service, per the options. Returns an empty
/// map and `k = 0` when expansion is disabled.
fn load_beams(opts: &ExpansionOpts, queries: &QueryStore) -> Result<Option<ExpansionMap>> {
    if opts.no_expansion {
        return Ok(None);
    }
    if let Some(path) = &opts.expansions {
        return Ok(Some(read_with(path, expansion::load_precomputed_expansions)?));
    }
    if let Some(url) = &opts.service {
        let client = ServiceClient::new(url);
        let fetched = expansion::fetch_expansions(
            queries.records(),
            &client,
            &FetchOptions {
                num_beams: opts.num_beams,
                ..Default::default()
            },
        )
        .context("fetching paraphrases")?;
        for (id, why) in &fetched.failed {
            log::warn!("query {id} not expanded: {why}");
        }
        if let Some(out) = &opts.beams_out {
            write_with(out, |w| expansion::write_expansions(&fetched.beams, w))?;
        }
        return Ok(Some(fetched.beams));
    }
    Ok(None)
}

fn expanded_store(opts: &ExpansionOpts, queries: &QueryStore) -> Result<QueryStore> {
    let policy: FilterPolicy = opts.filter.parse()?;
    let Some(beams) = load_beams(opts, queries)? else {
        return Ok(queries.clone());
    };
    let (expanded, missing) =
        expansion::expand_queries(queries.records(), &beams, opts.num_beams, &policy)?;
    for id in &missing {
        log::warn!("no paraphrases for query {id}; using it unexpanded");
    }
    Ok(RecordStore::from_records(
        expanded
            .into_iter()
            .map(|e| QueryRecord::new(e.query_id, e.assembled_text))
            .collect(),
    )?)
}

fn expand(a: &ExpandArgs) -> Result<QueryStore> {
    require_inputs([Some(&a.queries), a.expansion.expansions.as_ref()])?;
    if !a.expansion.no_expansion && a.expansion.expansions.is_none() && a.expansion.service.is_none()
    {
        bail!("pass --expansions <file>, --service <url> or --no-expansion");
    }
    let queries = read_with(&a.queries, corpus::parse_queries)?;
    let expanded = expanded_store(&a.expansion, &queries)?;
    write_with(&a.out, |w| corpus::write_records(&expanded, w))?;
    println!("expanded {} queries", expanded.len());
    Ok(expanded)
}

fn build_scorer<'a>(
    opts: &ScorerOpts,
    qrels: Option<&'a corpus::Qrels>,
    min_grade: u32,
) -> Result<Box<dyn RelevanceScorer + 'a>> {
    let spec = opts.scorer.as_str();
    let scorer: Box<dyn RelevanceScorer> = if spec == "lexical" {
        Box::new(LexicalOverlapScorer)
    } else if spec == "oracle" {
        let qrels = qrels.ok_or_else(|| anyhow!("the oracle scorer needs --qrels"))?;
        Box::new(OracleScorer { qrels, min_grade })
    } else if spec == "constant" {
        Box::new(ConstantScorer(0.5))
    } else if let Some(v) = spec.strip_prefix("constant:") {
        let v: f64 = v.parse().context("constant scorer value")?;
        if !(0.0..=1.0).contains(&v) {
            bail!("constant score {v} outside [0, 1]");
        }
        Box::new(ConstantScorer(v))
    } else if let Some(path) = spec.strip_prefix("file:") {
        let path = PathBuf::from(path);
        require_inputs([Some(&path)])?;
        Box::new(read_with(&path, reranker::load_precomputed_scores)?)
    } else if let Some(url) = spec.strip_prefix("remote:") {
        let mut remote = RemoteScorer::new(ServiceClient::new(url));
        remote.batch_size = opts.batch_size;
        remote.max_in_flight = opts.max_in_flight;
        Box::new(remote)
    } else {
        bail!("unknown scorer {spec:?}");
    };
    Ok(scorer)
}

fn build_reranker(opts: &ScorerOpts) -> Result<Reranker> {
    let tokenization = match &opts.vocab {
        Some(p) => Tokenization::WordPiece(Arc::new(read_with(p, WordPiece::from_reader)?)),
        None => Tokenization::Whitespace,
    };
    Ok(Reranker::new(
        TruncationConfig {
            max_query_tokens: opts.max_query_tokens,
            total_budget: opts.total_budget,
            special_token_overhead: opts.special_tokens,
        },
        tokenization,
    )?)
}

fn load_candidates(
    opts: &CandidateOpts,
    queries: &QueryStore,
) -> Result<(Vec<CandidateSet>, Option<PassageStore>)> {
    let passages = match &opts.collection {
        Some(p) => Some(read_with(p, corpus::parse_collection)?),
        None => None,
    };
    if let Some(path) = &opts.top1000 {
        return Ok((read_with(path, corpus::parse_top1000)?, passages));
    }
    if let Some(path) = &opts.index {
        if passages.is_none() {
            bail!("--index needs --collection for passage texts");
        }
        let index = load_index(path)?;
        let sets = retrieve_sets(&index, queries.records(), &opts.bm25)?
            .into_iter()
            .map(|(s, _)| s)
            .collect();
        return Ok((sets, passages));
    }
    bail!("pass --top1000 <file> or --index <file> with --collection <file>")
}

fn rerank(a: &RerankArgs, seed: u64) -> Result<()> {
    require_inputs([
        Some(&a.queries),
        a.candidates.top1000.as_ref(),
        a.candidates.index.as_ref(),
        a.candidates.collection.as_ref(),
        a.expansion.expansions.as_ref(),
        a.scorer.vocab.as_ref(),
        a.qrels.as_ref(),
    ])?;
    check_tag(&a.tag)?;
    let queries = read_with(&a.queries, corpus::parse_queries)?;
    let queries = expanded_store(&a.expansion, &queries)?;
    let (sets, passages) = load_candidates(&a.candidates, &queries)?;
    let qrels = match &a.qrels {
        Some(p) => Some(read_with(p, corpus::parse_qrels)?),
        None => None,
    };

    let mut expanded: Vec<expansion::ExpandedQuery> = queries
        .iter()
        .map(expansion::ExpandedQuery::unexpanded)
        .collect();
    for set in &sets {
        if queries.get(&set.query_id).is_none() {
            let text = set
                .query_text
                .as_ref()
                .ok_or_else(|| anyhow!("no text for query {}", set.query_id))?;
            log::warn!("query {} missing from queries file; using candidate file text", set.query_id);
            expanded.push(expansion::ExpandedQuery::unexpanded(&QueryRecord::new(
                &set.query_id,
                text,
            )));
        }
    }

    let scorer = build_scorer(&a.scorer, qrels.as_ref(), a.min_grade)?;
    let reranker = build_reranker(&a.scorer)?;
    let rankings = reranker.rerank_all(&sets, &expanded, scorer.as_ref(), passages.as_ref())?;
    write_with(&a.run, |w| corpus::write_run_file(&rankings, &a.tag, w))?;

    if let Some(out) = &a.training_pairs_out {
        let qrels = qrels
            .as_ref()
            .ok_or_else(|| anyhow!("--training-pairs-out needs --qrels"))?;
        let pool = match a.negatives_from {
            NegativesFrom::Candidates => NegativePool::Candidates(&sets),
            NegativesFrom::Collection => NegativePool::Collection(
                passages
                    .as_ref()
                    .ok_or_else(|| anyhow!("--negatives-from collection needs --collection"))?,
            ),
        };
        let sampled = reranker::sample_training_pairs(
            qrels,
            pool,
            &SamplingConfig {
                negatives_per_positive: a.negatives_per_positive,
                seed,
                min_grade: a.min_grade,
            },
        )?;
        write_with(out, |w| reranker::write_training_pairs(&sampled.pairs, w))?;
        println!(
            "sampled {} training pairs ({} shortfalls)",
            sampled.pairs.len(),
            sampled.shortfalls.len()
        );
    }
    println!("reranked {} queries", rankings.len());
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<eval::EvalReport> {
    require_inputs([Some(&a.run), Some(&a.qrels)])?;
    let rankings = read_with(&a.run, corpus::read_rankings)?;
    let qrels = read_with(&a.qrels, corpus::parse_qrels)?;
    let report = eval::evaluate_run(&rankings, &qrels, &a.eval.config()?)?;
    let metrics = a.eval.metric.metrics();
    if let Some(out) = &a.out {
        write_with(out, |w| report.write_tsv(&metrics, w))?;
    }
    for m in metrics {
        match report.mean(m) {
            Ok(v) => println!("{m}\t{v:.6}"),
            Err(_) => println!("{m}\tn/a"),
        }
    }
    Ok(report)
}

fn own_scores(
    report: &eval::EvalReport,
    metrics: &[Metric],
) -> BTreeMap<(String, Metric), f64> {
    let mut out = BTreeMap::new();
    for &m in metrics {
        for (t, v) in report.scores(m) {
            out.insert((t, m), v);
        }
    }
    out
}

fn bucket_report(
    own: &BTreeMap<(String, Metric), f64>,
    stats_path: &Path,
    epsilon: f64,
    out: Option<&Path>,
) -> Result<()> {
    let stats = read_with(stats_path, eval::parse_committee_stats)?;
    let report = eval::classify_buckets(own, &stats, epsilon)?;
    let mut text = report.render_table();
    for (m, f) in eval::summarize_fractions(&report) {
        text.push_str(&format!(
            "# {m}\tmedian_or_better\t{:.4}\tabove_median\t{:.4}\n",
            f.median_or_better, f.above_median
        ));
    }
    if let Some(out) = out {
        write_with(out, |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    print!("{text}");
    Ok(())
}

fn compare(a: &CompareArgs) -> Result<()> {
    require_inputs([Some(&a.stats), a.scores.as_ref(), a.run.as_ref(), a.qrels.as_ref()])?;
    let metrics = a.eval.metric.metrics();
    let own: BTreeMap<(String, Metric), f64> = if let Some(path) = &a.scores {
        read_with(path, eval::parse_topic_scores)?
            .into_iter()
            .filter(|((_, m), _)| metrics.contains(m))
            .collect()
    } else {
        let (Some(run), Some(qrels)) = (&a.run, &a.qrels) else {
            bail!("pass --scores <file>, or --run and --qrels");
        };
        let rankings = read_with(run, corpus::read_rankings)?;
        let qrels = read_with(qrels, corpus::parse_qrels)?;
        own_scores(&eval::evaluate_run(&rankings, &qrels, &a.eval.config()?)?, &metrics)
    };
    bucket_report(&own, &a.stats, a.epsilon, a.out.as_deref())
}

fn pipeline(a: &PipelineArgs, seed: u64) -> Result<()> {
    require_inputs([Some(&a.queries), Some(&a.qrels), a.stats.as_ref()])?;
    check_tag(&a.tag)?;
    let expanded_path = a.out_dir.join("expanded.tsv");
    let run_path = a.out_dir.join("run.txt");
    let eval_path = a.out_dir.join("eval.tsv");

    let mut expansion = a.expansion.clone();
    if expansion.expansions.is_none() && expansion.service.is_none() {
        expansion.no_expansion = true;
    }
    expand(&ExpandArgs {
        queries: a.queries.clone(),
        expansion,
        out: expanded_path.clone(),
    })?;
    rerank(
        &RerankArgs {
            queries: expanded_path,
            candidates: a.candidates.clone(),
            expansion: ExpansionOpts {
                no_expansion: true,
                ..Default::default()
            },
            scorer: a.scorer.clone(),
            qrels: Some(a.qrels.clone()),
            run: run_path.clone(),
            tag: a.tag.clone(),
            training_pairs_out: None,
            negatives_per_positive: 1,
            negatives_from: NegativesFrom::Candidates,
            min_grade: 1,
        },
        seed,
    )?;
    let report = evaluate(&EvaluateArgs {
        run: run_path,
        qrels: a.qrels.clone(),
        eval: a.eval.clone(),
        out: Some(eval_path),
    })?;
    if let Some(stats) = &a.stats {
        let own = own_scores(&report, &a.eval.metric.metrics());
        bucket_report(&own, stats, a.epsilon, Some(&a.out_dir.join("buckets.tsv")))?;
    }
    Ok(())
}
