use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use pairank::bm25::{Bm25Params, QueryTemplate};
use pairank::bridge::{
    Bm25Endpoint, ProcessEndpoint, RecordingEndpoint, ReplayEndpoint, ReplayTable, ScoreEndpoint,
    SCORER_ENV,
};
use pairank::fixtures::{generate, SyntheticConfig};
use pairank::metrics::robustness_report;
use pairank::pipeline::{assemble_pools, rank_bm25, rerank, QueryPool};
use pairank::pooling::{build_pool, parse_pools, write_pools, DEFAULT_MAX_POOL};
use pairank::reporting::{dataset_stats, variant_delta_report, write_delta_tsv, write_stats_tsv};
use pairank::textproc::{read_documents, read_passages, write_documents, write_passages, Document};
use pairank::train_filter::{
    filter_training_set, read_candidates, score_candidates, write_candidates, DEFAULT_THRESHOLD,
};
use pairank::{
    chunk_document, evaluate_standard, load_dataset, paired_evaluate, parse_qrels, parse_run,
    validate_pairing, ChunkConfig, Dataset, InstructionChoice, MetricReport, MetricSpec, Qrels,
    Relevance, Run,
};

const FORMATS: &str = "\
File formats (one example line each):
  run (TREC, 6 columns)     q1 Q0 doc7 1 12.5 bm25
  qrels (TREC, 4 columns)   q1 0 doc7 2
  dataset (JSON lines)      {\"query_id\":\"q1\",\"text\":\"...\",\"instruction\":\"...\",\"instruction_modified\":\"...\",\"variants\":{\"short\":\"...\"}}
  corpus (JSON lines)       {\"doc_id\":\"doc7\",\"text\":\"...\"}
  passages (JSON lines)     {\"doc_id\":\"doc7\",\"passage_index\":0,\"start_word\":0,\"text\":\"...\"}
  pool                      q1 doc7 run:bm25
  replay table (JSON lines) {\"hash\":\"<sha256 hex>\",\"score\":1.25}
  candidates (JSON lines)   {\"query_id\":\"q1\",\"instruction_text\":\"...\",\"doc_text\":\"...\",\"generated_label\":\"relevant\",\"scorer_prob\":0.91}
  scorer request            {\"request_id\":\"q1/doc7#0\",\"query_text\":\"...\",\"instruction_text\":\"...\",\"passage_text\":\"...\"}
  scorer response           {\"request_id\":\"q1/doc7#0\",\"score\":0.8}  or  {\"request_id\":\"q1/doc7#0\",\"logit_true\":1.2,\"logit_false\":-0.3}

Exit status: 0 success, 1 usage or validation error, 2 runtime error.";

#[derive(Parser, Debug)]
#[command(name = "pairank", version, about = "Instruction-following retrieval evaluation", after_help = FORMATS)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for anything that samples.
    #[arg(long, global = true, default_value_t = 13)]
    seed: u64,
    /// Only log errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Write the main output here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split documents into overlapping word windows.
    Chunk {
        /// Corpus .jsonl files, plain-text files or directories of text files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = pairank::textproc::DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = pairank::textproc::DEFAULT_STRIDE)]
        stride: usize,
    },
    /// Build reranking pools from original judgments and system runs.
    Pool {
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_POOL)]
        max_size: usize,
    },
    /// Rank pools with the built-in BM25 and MaxP.
    RankBm25 {
        #[command(flatten)]
        input: RankInput,
        #[command(flatten)]
        bm25: Bm25Args,
        #[arg(long, default_value = "bm25")]
        tag: String,
    },
    /// Rank pools with an external or replayed scorer.
    Rerank {
        #[command(flatten)]
        input: RankInput,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long, default_value = "rerank")]
        tag: String,
    },
    /// Score a run with MAP, nDCG@k, MRR or Robustness@k.
    Evaluate {
        /// Run file; repeat as NAME=PATH, one per variant, for robustness@K.
        #[arg(long = "run", required = true)]
        runs: Vec<String>,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value = "map", value_parser = parse_metric)]
        metric: MetricSpec,
        #[arg(long, value_enum, default_value_t = Format::Tsv)]
        format: Format,
        #[arg(long, default_value_t = 4)]
        decimals: usize,
    },
    /// Standard metric and p-MRR for a pair of runs.
    PairedEval {
        #[arg(long)]
        run_og: PathBuf,
        #[arg(long)]
        run_new: PathBuf,
        #[arg(long)]
        qrels_og: PathBuf,
        #[arg(long)]
        qrels_new: PathBuf,
        #[arg(long, default_value = "map", value_parser = parse_metric)]
        metric: MetricSpec,
        #[arg(long, default_value = "corpus")]
        corpus: String,
        /// Also write one line per changed document.
        #[arg(long)]
        details: bool,
    },
    /// Score deltas of instruction variants against a baseline variant.
    Ablate {
        /// CORPUS=PATH, once per corpus.
        #[arg(long = "qrels", required = true)]
        qrels: Vec<String>,
        /// CORPUS:VARIANT=PATH, once per run.
        #[arg(long = "run", required = true)]
        runs: Vec<String>,
        #[arg(long, default_value = "original")]
        baseline: String,
        #[arg(long, default_value = "ndcg@5", value_parser = parse_metric)]
        metric: MetricSpec,
    },
    /// Query, instruction and judgment statistics per corpus.
    Stats {
        /// NAME=DATASET,QRELS_OG[,QRELS_NEW], once per corpus.
        #[arg(long = "corpus", required = true)]
        corpora: Vec<String>,
    },
    /// Keep generated training documents the scorer agrees with, balanced per query.
    FilterTrain {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Score candidates first; without one, scorer_prob must be present.
        #[command(flatten)]
        scorer: OptionalScorerArgs,
    },
    /// Check that modified judgments only remove relevance.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        qrels_og: PathBuf,
        #[arg(long)]
        qrels_new: PathBuf,
    },
    /// Write a synthetic paired corpus (uses --seed).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        queries: usize,
        #[arg(long, default_value_t = 30)]
        pool_size: usize,
        #[arg(long, default_value_t = 3)]
        systems: usize,
    },
}

#[derive(Args, Debug)]
struct RankInput {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    passages: PathBuf,
    /// Pool file; without it every query ranks every passage.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// original, modified, none, or a variant name.
    #[arg(long, default_value = "original", value_parser = parse_choice)]
    instruction: InstructionChoice,
}

#[derive(Args, Debug)]
struct Bm25Args {
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
    /// Joins query and instruction; must contain {query}.
    #[arg(long, default_value = "{query} {instruction}")]
    template: String,
}

impl Bm25Args {
    fn params(&self) -> Result<(Bm25Params, QueryTemplate), Failure> {
        Ok((
            Bm25Params::new(self.k1, self.b)?,
            QueryTemplate::new(&self.template)?,
        ))
    }
}

#[derive(Args, Debug)]
struct ScorerArgs {
    #[command(flatten)]
    inner: OptionalScorerArgs,
}

#[derive(Args, Debug)]
struct OptionalScorerArgs {
    /// Scorer command, run with sh -c (default: $PAIRANK_SCORER).
    #[arg(long, conflicts_with_all = ["replay", "builtin_bm25"])]
    scorer: Option<String>,
    /// Answer requests from a replay table.
    #[arg(long, conflicts_with = "builtin_bm25")]
    replay: Option<PathBuf>,
    /// Answer requests with the built-in BM25.
    #[arg(long)]
    builtin_bm25: bool,
    /// Per-response timeout in seconds for an external scorer.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Save every answer to a replay table.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Tsv,
    Jsonl,
}

fn parse_metric(s: &str) -> Result<MetricSpec, String> {
    s.parse().map_err(|e: pairank::Error| e.to_string())
}

fn parse_choice(s: &str) -> Result<InstructionChoice, String> {
    s.parse().map_err(|e: pairank::Error| e.to_string())
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }

    fn runtime(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }
}

impl From<pairank::Error> for Failure {
    fn from(e: pairank::Error) -> Self {
        use pairank::Error as E;
        let code = match e {
            E::Parse { .. }
            | E::DuplicateJudgment { .. }
            | E::DuplicateQuery { .. }
            | E::Config(_)
            | E::InvalidRank(_)
            | E::UnknownMetric(_)
            | E::NonFinite(_)
            | E::MissingProbability { .. } => 1,
            _ => 2,
        };
        Self {
            code,
            error: e.into(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::runtime(e.into())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

trait Context2<T> {
    fn with_file(self, path: &Path) -> CliResult<T>;
}

impl<T> Context2<T> for pairank::Result<T> {
    fn with_file(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| {
            let mut f = Failure::from(e);
            f.error = f.error.context(format!("reading {}", path.display()));
            f
        })
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(Failure::usage)
}

fn read_run(path: &Path) -> CliResult<Run> {
    let parsed = parse_run(open(path)?).with_file(path)?;
    for w in &parsed.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(parsed.run)
}

fn read_qrels(path: &Path) -> CliResult<Qrels> {
    parse_qrels(open(path)?).with_file(path)
}

fn read_dataset(path: &Path) -> CliResult<Dataset> {
    load_dataset(open(path)?).with_file(path)
}

fn split_pair<'a>(s: &'a str, what: &str) -> CliResult<(&'a str, &'a str)> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k, v)),
        _ => Err(Failure::usage(anyhow!("expected {what}, got {s:?}"))),
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn text_document(path: &Path) -> CliResult<Document> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::usage)?;
    let doc_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Document { doc_id, text })
}

fn collect_documents(inputs: &[PathBuf]) -> CliResult<Vec<Document>> {
    let mut docs = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.is_file()
                        && !p
                            .file_name()
                            .is_some_and(|n| n.to_string_lossy().starts_with('.'))
                })
                .collect();
            files.sort();
            for f in files {
                docs.push(text_document(&f)?);
            }
        } else if input.extension().is_some_and(|e| e == "jsonl") {
            docs.extend(read_documents(open(input)?).with_file(input)?);
        } else {
            docs.push(text_document(input)?);
        }
    }
    Ok(docs)
}

fn chunk(inputs: &[PathBuf], window: usize, stride: usize, out: &mut dyn Write) -> CliResult {
    let config = ChunkConfig::new(window, stride)?;
    let docs = collect_documents(inputs)?;
    let passages: Vec<_> = docs
        .par_iter()
        .flat_map_iter(|d| chunk_document(&d.doc_id, &d.text, config))
        .collect();
    log::info!("{} documents, {} passages", docs.len(), passages.len());
    write_passages(&passages, out)?;
    Ok(())
}

fn query_pools(input: &RankInput) -> CliResult<Vec<QueryPool>> {
    let dataset = read_dataset(&input.dataset)?;
    let passages = read_passages(open(&input.passages)?).with_file(&input.passages)?;
    let pools = match &input.pool {
        Some(p) => Some(parse_pools(open(p)?).with_file(p)?),
        None => None,
    };
    let queries = assemble_pools(&dataset, pools.as_ref(), &passages, &input.instruction)?;
    if queries.is_empty() {
        return Err(Failure::usage(anyhow!(
            "no query has a {} instruction and a pool",
            input.instruction
        )));
    }
    Ok(queries)
}

fn endpoint(args: &OptionalScorerArgs) -> CliResult<Option<Box<dyn ScoreEndpoint>>> {
    if args.builtin_bm25 {
        return Ok(Some(Box::new(Bm25Endpoint::default())));
    }
    if let Some(path) = &args.replay {
        let table = ReplayTable::read(open(path)?).with_file(path)?;
        return Ok(Some(Box::new(ReplayEndpoint { table })));
    }
    let command = match &args.scorer {
        Some(c) => c.clone(),
        None => match std::env::var(SCORER_ENV) {
            Ok(c) if !c.trim().is_empty() => c,
            _ => return Ok(None),
        },
    };
    let mut process = ProcessEndpoint::spawn(&command)?;
    if args.batch_size == 0 {
        return Err(Failure::usage(anyhow!("--batch-size must be at least 1")));
    }
    process.batch_size = args.batch_size;
    if let Some(t) = args.timeout {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::usage(anyhow!(
                "--timeout must be a positive number of seconds"
            )));
        }
        process.timeout = Some(Duration::from_secs_f64(t));
    }
    Ok(Some(Box::new(process)))
}

/// Runs `f` against the chosen endpoint, closing the session and writing the
/// replay table afterwards if requested.
fn with_endpoint<T>(
    args: &OptionalScorerArgs,
    f: impl FnOnce(&mut dyn ScoreEndpoint) -> pairank::Result<T>,
) -> CliResult<Option<T>> {
    let Some(inner) = endpoint(args)? else {
        return Ok(None);
    };
    let mut recorder = RecordingEndpoint::new(inner);
    let result = f(&mut recorder);
    let closed = recorder.close();
    let value = result?;
    closed?;
    if let Some(path) = &args.record {
        let file = File::create(path)
            .with_context(|| format!("cannot create {}", path.display()))
            .map_err(Failure::runtime)?;
        recorder.table.write(BufWriter::new(file))?;
    }
    Ok(Some(value))
}

fn write_report(
    report: &MetricReport,
    format: Format,
    decimals: usize,
    out: &mut dyn Write,
) -> CliResult {
    match format {
        Format::Tsv => report.write_tsv(out, decimals)?,
        Format::Jsonl => {
            serde_json::to_writer(&mut *out, report).map_err(|e| Failure::runtime(e.into()))?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn evaluate(
    runs: &[String],
    qrels: &Path,
    metric: MetricSpec,
    format: Format,
    decimals: usize,
    out: &mut dyn Write,
) -> CliResult {
    let qrels = read_qrels(qrels)?;
    let report = match metric {
        MetricSpec::PMrr => {
            return Err(Failure::usage(anyhow!(
                "p-mrr needs paired runs; use paired-eval"
            )))
        }
        MetricSpec::Robustness(k) => {
            let mut variants = BTreeMap::new();
            for spec in runs {
                let (name, path) = split_pair(spec, "NAME=PATH")?;
                let run = read_run(Path::new(path))?;
                if variants
                    .insert(
                        name.to_string(),
                        evaluate_standard(&run, &qrels, MetricSpec::Ndcg(k))?,
                    )
                    .is_some()
                {
                    return Err(Failure::usage(anyhow!("variant {name} given twice")));
                }
            }
            robustness_report(variants.values(), k)?
        }
        _ => {
            let [path] = runs else {
                return Err(Failure::usage(anyhow!("{metric} takes exactly one --run")));
            };
            evaluate_standard(&read_run(Path::new(path))?, &qrels, metric)?
        }
    };
    write_report(&report, format, decimals, out)
}

#[allow(clippy::too_many_arguments)]
fn paired_eval(
    run_og: &Path,
    run_new: &Path,
    qrels_og: &Path,
    qrels_new: &Path,
    metric: MetricSpec,
    corpus: &str,
    details: bool,
    out: &mut dyn Write,
) -> CliResult {
    if !matches!(
        metric,
        MetricSpec::Map | MetricSpec::Ndcg(_) | MetricSpec::Mrr
    ) {
        return Err(Failure::usage(anyhow!(
            "--metric must be map, ndcg@K or mrr"
        )));
    }
    let report = paired_evaluate(
        &read_run(run_og)?,
        &read_run(run_new)?,
        &read_qrels(qrels_og)?,
        &read_qrels(qrels_new)?,
        metric,
    )?;
    let (score, p_mrr) = report.row();
    writeln!(out, "corpus\tmetric\tscore\tp-mrr")?;
    writeln!(out, "{corpus}\t{metric}\t{score}\t{p_mrr}")?;
    if details {
        writeln!(out, "query_id\tdoc_id\trank_og\trank_new\tp-mrr")?;
        for (qid, deltas) in &report.per_doc {
            for d in deltas {
                writeln!(
                    out,
                    "{qid}\t{}\t{}\t{}\t{:.6}",
                    d.doc_id, d.rank_og, d.rank_new, d.p_mrr
                )?;
            }
        }
    }
    Ok(())
}

fn ablate(
    qrels: &[String],
    runs: &[String],
    baseline: &str,
    metric: MetricSpec,
    out: &mut dyn Write,
) -> CliResult {
    if !matches!(
        metric,
        MetricSpec::Map | MetricSpec::Ndcg(_) | MetricSpec::Mrr
    ) {
        return Err(Failure::usage(anyhow!(
            "--metric must be map, ndcg@K or mrr"
        )));
    }
    let mut judged = BTreeMap::new();
    for spec in qrels {
        let (corpus, path) = split_pair(spec, "CORPUS=PATH")?;
        judged.insert(corpus.to_string(), read_qrels(Path::new(path))?);
    }
    let mut results: BTreeMap<String, BTreeMap<String, MetricReport>> = BTreeMap::new();
    for spec in runs {
        let (key, path) = split_pair(spec, "CORPUS:VARIANT=PATH")?;
        let (corpus, variant) = key
            .split_once(':')
            .filter(|(c, v)| !c.is_empty() && !v.is_empty())
            .ok_or_else(|| Failure::usage(anyhow!("expected CORPUS:VARIANT=PATH, got {spec:?}")))?;
        let q = judged
            .get(corpus)
            .ok_or_else(|| Failure::usage(anyhow!("no --qrels for corpus {corpus}")))?;
        let report = evaluate_standard(&read_run(Path::new(path))?, q, metric)?;
        if results
            .entry(corpus.to_string())
            .or_default()
            .insert(variant.to_string(), report)
            .is_some()
        {
            return Err(Failure::usage(anyhow!("run {key} given twice")));
        }
    }
    let table = variant_delta_report(&results, baseline)?;
    write_delta_tsv(&table, out)?;
    Ok(())
}

fn stats(corpora: &[String], out: &mut dyn Write) -> CliResult {
    let mut rows = Vec::new();
    for spec in corpora {
        let (name, files) = split_pair(spec, "NAME=DATASET,QRELS_OG[,QRELS_NEW]")?;
        let parts: Vec<&str> = files.split(',').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(Failure::usage(anyhow!(
                "expected NAME=DATASET,QRELS_OG[,QRELS_NEW], got {spec:?}"
            )));
        }
        let dataset = read_dataset(Path::new(parts[0]))?;
        let og = read_qrels(Path::new(parts[1]))?;
        let new = match parts.get(2) {
            Some(p) => Some(read_qrels(Path::new(p))?),
            None => None,
        };
        rows.push(dataset_stats(name, &dataset, &og, new.as_ref()));
    }
    write_stats_tsv(&rows, out)?;
    Ok(())
}

fn filter_train(
    path: &Path,
    threshold: f64,
    scorer: &OptionalScorerArgs,
    quiet: bool,
    out: &mut dyn Write,
) -> CliResult {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Failure::usage(anyhow!("--threshold must lie in [0, 1]")));
    }
    let mut candidates = read_candidates(open(path)?).with_file(path)?;
    with_endpoint(scorer, |e| score_candidates(&mut candidates, e))?;
    let (kept, summary) = filter_training_set(candidates, threshold)?;
    write_candidates(&kept, out)?;
    if !quiet {
        eprintln!(
            "input {} ({} queries), after verdict {}, output {} ({} queries)",
            summary.input,
            summary.queries_in,
            summary.after_verdict,
            summary.output,
            summary.queries_out
        );
    }
    Ok(())
}

fn validate(dataset: &Path, qrels_og: &Path, qrels_new: &Path, out: &mut dyn Write) -> CliResult {
    let report = validate_pairing(
        &read_dataset(dataset)?,
        &read_qrels(qrels_og)?,
        &read_qrels(qrels_new)?,
    );
    for q in &report.missing_modified_instruction {
        writeln!(out, "missing-modified-instruction\t{q}")?;
    }
    for q in &report.missing_modified_qrels {
        writeln!(out, "missing-modified-qrels\t{q}")?;
    }
    for v in &report.violations {
        let og = match v.grade_og {
            Relevance::Judged(g) => g.to_string(),
            Relevance::Unjudged => "unjudged".to_string(),
        };
        writeln!(
            out,
            "gain\t{}\t{}\t{og}\t{}",
            v.query_id, v.doc_id, v.grade_new
        )?;
    }
    if report.is_clean() {
        writeln!(out, "ok")?;
        Ok(())
    } else {
        Err(Failure::usage(anyhow!("pairing check failed")))
    }
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(Failure::runtime)
}

fn synth(out: &Path, seed: u64, queries: usize, pool_size: usize, systems: usize) -> CliResult {
    let defaults = SyntheticConfig::default();
    if queries == 0 || systems == 0 || pool_size < defaults.relevant_per_query {
        return Err(Failure::usage(anyhow!(
            "need --queries >= 1, --systems >= 1 and --pool-size >= {}",
            defaults.relevant_per_query
        )));
    }
    let corpus = generate(&SyntheticConfig {
        seed,
        queries,
        pool_size,
        systems,
        ..defaults
    });
    std::fs::create_dir_all(out)?;
    corpus.dataset.write(create(out, "queries.jsonl")?)?;
    write_documents(&corpus.documents, create(out, "corpus.jsonl")?)?;
    corpus.qrels_og.write(create(out, "qrels_og.txt")?)?;
    corpus.qrels_new.write(create(out, "qrels_new.txt")?)?;
    for (i, run) in corpus.runs.iter().enumerate() {
        run.write(create(out, &format!("run_sys{i}.txt"))?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let mut sink: Box<dyn Write> = match &cli.output {
        Some(p) => Box::new(BufWriter::new(
            File::create(p)
                .with_context(|| format!("cannot create {}", p.display()))
                .map_err(Failure::usage)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let out: &mut dyn Write = &mut sink;
    match &cli.command {
        Command::Chunk {
            inputs,
            window,
            stride,
        } => chunk(inputs, *window, *stride, out)?,
        Command::Pool {
            qrels,
            runs,
            max_size,
        } => {
            let qrels = read_qrels(qrels)?;
            let runs = runs
                .iter()
                .map(|r| read_run(r))
                .collect::<CliResult<Vec<_>>>()?;
            write_pools(&build_pool(&qrels, &runs, *max_size)?, out)?;
        }
        Command::RankBm25 { input, bm25, tag } => {
            let (params, template) = bm25.params()?;
            let queries = query_pools(input)?;
            rank_bm25(&queries, params, &template, tag)?.write(out)?;
        }
        Command::Rerank { input, scorer, tag } => {
            let queries = query_pools(input)?;
            let run =
                with_endpoint(&scorer.inner, |e| rerank(&queries, e, tag))?.ok_or_else(|| {
                    Failure::usage(anyhow!(
                        "no scorer: pass --scorer, --replay or --builtin-bm25, or set {SCORER_ENV}"
                    ))
                })?;
            run.write(out)?;
        }
        Command::Evaluate {
            runs,
            qrels,
            metric,
            format,
            decimals,
        } => evaluate(runs, qrels, *metric, *format, *decimals, out)?,
        Command::PairedEval {
            run_og,
            run_new,
            qrels_og,
            qrels_new,
            metric,
            corpus,
            details,
        } => paired_eval(
            run_og, run_new, qrels_og, qrels_new, *metric, corpus, *details, out,
        )?,
        Command::Ablate {
            qrels,
            runs,
            baseline,
            metric,
        } => ablate(qrels, runs, baseline, *metric, out)?,
        Command::Stats { corpora } => stats(corpora, out)?,
        Command::FilterTrain {
            candidates,
            threshold,
            scorer,
        } => filter_train(candidates, *threshold, scorer, cli.quiet, out)?,
        Command::Validate {
            dataset,
            qrels_og,
            qrels_new,
        } => validate(dataset, qrels_og, qrels_new, out)?,
        Command::Synth {
            out: dir,
            queries,
            pool_size,
            systems,
        } => synth(dir, cli.seed, *queries, *pool_size, *systems)?,
    }
    sink.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Error
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
