//! parapipe - batch pipeline for paraphrase annotation corpora built from
//! two-person interview transcripts.
//!
//! Subcommands cover the full path from raw transcripts to model scores:
//!
//! ```text
//! preprocess    transcripts.jsonl -> (guest, host) pairs
//! sample        seeded sampling of consecutive pair windows
//! split         seeded train/dev/test partition
//! aggregate     annotations -> majority gold labels + highlights
//! agree         inter-annotator agreement reports
//! allocate-sim  annotator-allocation strategy simulation
//! extract       model responses -> resolved word-index predictions
//! evaluate      predictions vs gold: P/R/F1, Jaccard, error rates
//! ```
//!
//! All randomness flows from `--seed`; identical inputs, configuration,
//! and seed produce byte-identical outputs, with or without parallelism.

mod config;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use parapipe::allocation::{
    evaluate_strategies, AdmissibilityCaps, AllocationStrategy, DEFAULT_KRR_RESAMPLES,
};
use parapipe::annotations::{
    aggregate, validate, AggregateOptions, Annotation, HighlightDenominator, ValidationMode,
};
use parapipe::corpus::{self, TranscriptRecord, UtterancePair};
use parapipe::evaluation::{
    classification_error_rate, evaluate as evaluate_outcomes, render_table, threshold_token_probs,
    EvalReport, ItemOutcome, JaccardDenominator, TokenProbPrediction,
};
use parapipe::jsonl::read_jsonl;
use parapipe::metrics::{agreement_report, AgreementConfig, JaccardAggregation, LabelMatrix};
use parapipe::response_parser::{
    parse_response, resolve, self_consistency, ErrorKind, ExtractionError, MatchParams,
    ParsedResponse, Prediction,
};

use config::RunConfig;
use output::{write_json_atomic, write_jsonl_atomic};

#[derive(Parser)]
#[command(
    name = "parapipe",
    version,
    about = "Batch toolkit for paraphrase annotation corpora over dialog transcripts"
)]
struct Cli {
    /// JSON configuration file; flags override configuration values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run single-threaded; output is byte-identical either way.
    #[arg(long, global = true)]
    no_parallel: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn MediaSum-layout transcripts into (guest, host) pairs.
    Preprocess(PreprocessArgs),
    /// Sample interviews and consecutive pair windows.
    Sample(SampleArgs),
    /// Partition pairs into train/dev/test.
    Split(SplitArgs),
    /// Aggregate annotations into majority gold labels and highlights.
    Aggregate(AggregateArgs),
    /// Compute inter-annotator agreement reports.
    Agree(AgreeArgs),
    /// Simulate annotator-allocation strategies over a recorded pool.
    AllocateSim(AllocateSimArgs),
    /// Parse model responses and resolve quotes to word indices.
    Extract(ExtractArgs),
    /// Score predictions against aggregated gold.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Transcripts file (JSONL, MediaSum layout).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output pairs file (JSONL).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Pairs file to sample from.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output pairs file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of interviews to sample.
    #[arg(long)]
    interviews: usize,
    /// Consecutive pairs taken per interview.
    #[arg(long, default_value_t = 5)]
    max_consecutive: usize,
}

#[derive(Args)]
struct SplitArgs {
    /// Pairs file to split.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output file for the train split.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Output file for the dev split.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Output file for the test split.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Comma-separated train,dev,test ratios.
    #[arg(long, default_value = "0.70,0.15,0.15")]
    ratios: String,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Strict,
    Lenient,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum HighlightMajorityArg {
    /// Majority over all annotators of the pair.
    All,
    /// Majority over paraphrase-voting annotators only.
    Positive,
}

#[derive(Args)]
struct AggregateArgs {
    /// Pairs file the annotations refer to.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Annotations file(s), optionally as NAME=PATH to label datasets.
    #[arg(long = "annotations", required = false)]
    annotations: Vec<String>,
    /// Output gold file (JSONL).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional JSON summary report with per-dataset counts.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Validation mode for the annotations.
    #[arg(long, value_enum, default_value_t = ModeArg::Strict)]
    mode: ModeArg,
    /// Who counts toward the highlight majority.
    #[arg(long, value_enum, default_value_t = HighlightMajorityArg::All)]
    highlight_majority: HighlightMajorityArg,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum JaccardPoolingArg {
    /// Mean per pair, then mean over pairs.
    PerPair,
    /// One pooled mean over all annotator pairs.
    Pooled,
}

#[derive(Args)]
struct AgreeArgs {
    /// Pairs file the annotations refer to.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Annotations file(s), optionally as NAME=PATH to label datasets.
    #[arg(long = "annotations", required = false)]
    annotations: Vec<String>,
    /// Output report (JSON document); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Subset size for k-rater reliability.
    #[arg(long, default_value_t = 2)]
    krr_k: usize,
    /// Resamples per item for k-rater reliability.
    #[arg(long, default_value_t = 1000)]
    krr_resamples: usize,
    /// How pairwise highlight Jaccard is averaged.
    #[arg(long, value_enum, default_value_t = JaccardPoolingArg::PerPair)]
    jaccard_pooling: JaccardPoolingArg,
}

#[derive(Args)]
struct AllocateSimArgs {
    /// Annotation pool (JSONL annotation records).
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Strategy in compact syntax: fixed:N, agree:N:MAX, entropy:T:MIN:MAX.
    /// Repeatable; plain "entropy" uses configured defaults.
    #[arg(long = "strategy")]
    strategies: Vec<String>,
    /// Comma-separated list of seeds to average over (default: --seed).
    #[arg(long)]
    seeds: Option<String>,
    /// Output table (JSON document); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Maximum admissible average annotators per item.
    #[arg(long)]
    cost_cap: Option<f64>,
    /// Minimum admissible accuracy against the full pool.
    #[arg(long)]
    accuracy_floor: Option<f64>,
    /// Minimum admissible k-rater reliability.
    #[arg(long)]
    krr_floor: Option<f64>,
    /// Resamples per item for the reliability estimate.
    #[arg(long, default_value_t = DEFAULT_KRR_RESAMPLES)]
    krr_resamples: usize,
}

#[derive(Args)]
struct ExtractArgs {
    /// Pairs file the predictions refer to.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Predictions file: {pair_id, responses: [...]} or pre-parsed
    /// {pair_id, label, guest_quotes, host_quotes}.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Output resolved predictions file (JSONL).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output extraction-errors file (JSONL).
    #[arg(long)]
    errors: Option<PathBuf>,
    /// Skipped source tokens allowed between matched quote tokens.
    #[arg(long)]
    max_gap: Option<usize>,
    /// Minimum share of quote tokens that must match.
    #[arg(long)]
    min_coverage: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum DenominatorArg {
    /// Average over all gold-positive pairs.
    GoldPositive,
    /// Average only over pairs positive in both gold and prediction.
    BothPositive,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Aggregated gold file (JSONL).
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Resolved predictions file (JSONL).
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Extraction-errors file matching --pred.
    #[arg(long)]
    errors: Option<PathBuf>,
    /// Token-probability predictions file (JSONL).
    #[arg(long)]
    token_probs: Option<PathBuf>,
    /// Pairs file (required with --token-probs).
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Classification threshold for token probabilities.
    #[arg(long)]
    tau_cls: Option<f64>,
    /// Highlight threshold for token probabilities.
    #[arg(long)]
    tau_hl: Option<f64>,
    /// Pairs entering the highlight-Jaccard average.
    #[arg(long, value_enum, default_value_t = DenominatorArg::GoldPositive)]
    jaccard_denominator: DenominatorArg,
    /// System name for the report and table row.
    #[arg(long, default_value = "system")]
    name: String,
    /// Also print a plain-text results table.
    #[arg(long)]
    table: bool,
    /// Output report (JSON document); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.no_parallel {
        // Ignore failure: the global pool can only be set once (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    match cli.command {
        Command::Preprocess(args) => run_preprocess(args, &config),
        Command::Sample(args) => run_sample(args, &config, seed),
        Command::Split(args) => run_split(args, &config, seed),
        Command::Aggregate(args) => run_aggregate(args, &config),
        Command::Agree(args) => run_agree(args, &config, seed),
        Command::AllocateSim(args) => run_allocate_sim(args, &config, seed),
        Command::Extract(args) => run_extract(args, &config),
        Command::Evaluate(args) => run_evaluate(args, &config),
    }
}

/// Resolves a path from a flag or a configured role.
fn need_path(flag: Option<PathBuf>, config: &RunConfig, role: &str, what: &str) -> Result<PathBuf> {
    flag.or_else(|| config.path(role))
        .ok_or_else(|| anyhow!("missing {what}: pass the flag or set paths.{role} in the config"))
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

fn run_preprocess(args: PreprocessArgs, config: &RunConfig) -> Result<()> {
    let input = need_path(args.input, config, "transcripts", "--in")?;
    let out = need_path(args.out, config, "pairs", "--out")?;

    let records: Vec<TranscriptRecord> = read_jsonl(&input)?;
    let n_records = records.len();
    let interviews = records
        .into_iter()
        .map(|r| r.into_interview())
        .collect::<parapipe::Result<Vec<_>>>()?;
    let (kept, pairs) = corpus::preprocess(interviews)?;
    let written = write_jsonl_atomic(&out, &pairs)?;
    println!(
        "preprocess: {n_records} interviews read, {kept} two-person interviews kept, {} pairs -> {}",
        pairs.len(),
        written.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

fn run_sample(args: SampleArgs, config: &RunConfig, seed: u64) -> Result<()> {
    let input = need_path(args.input, config, "pairs", "--in")?;
    let out = need_path(args.out, config, "out", "--out")?;

    let pairs: Vec<UtterancePair> = read_jsonl(&input)?;
    let sampled = corpus::sample_pairs(&pairs, args.interviews, args.max_consecutive, seed)?;
    let n_interviews = {
        let mut ids: Vec<&str> = sampled.iter().map(|p| p.interview_id.as_str()).collect();
        ids.dedup();
        ids.len()
    };
    let written = write_jsonl_atomic(&out, &sampled)?;
    println!(
        "sample: {} pairs from {n_interviews} interviews (seed {seed}) -> {}",
        sampled.len(),
        written.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

fn parse_ratios(raw: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("cannot parse ratios {raw:?}"))?;
    if parts.len() != 3 {
        bail!("--ratios needs exactly three comma-separated numbers");
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn run_split(args: SplitArgs, config: &RunConfig, seed: u64) -> Result<()> {
    let input = need_path(args.input, config, "pairs", "--in")?;
    let train_path = need_path(args.train, config, "train", "--train")?;
    let dev_path = need_path(args.dev, config, "dev", "--dev")?;
    let test_path = need_path(args.test, config, "test", "--test")?;
    let ratios = parse_ratios(&args.ratios)?;

    let pairs: Vec<UtterancePair> = read_jsonl(&input)?;
    let (train, dev, test) = corpus::split_dataset(&pairs, ratios, seed)?;
    let train_out = write_jsonl_atomic(&train_path, &train)?;
    let dev_out = write_jsonl_atomic(&dev_path, &dev)?;
    let test_out = write_jsonl_atomic(&test_path, &test)?;
    println!(
        "split: {}/{}/{} pairs (seed {seed}) -> {}, {}, {}",
        train.len(),
        dev.len(),
        test.len(),
        train_out.display(),
        dev_out.display(),
        test_out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// aggregate
// ---------------------------------------------------------------------------

/// Parses repeatable `NAME=PATH` (or bare `PATH`) annotation-set flags,
/// falling back to the configured role.
fn annotation_sets(
    flags: &[String],
    config: &RunConfig,
) -> Result<Vec<(String, PathBuf)>> {
    let mut sets = Vec::new();
    if flags.is_empty() {
        let path = config
            .path("annotations")
            .ok_or_else(|| anyhow!("missing --annotations (or paths.annotations in the config)"))?;
        sets.push((set_name_from(&path), path));
        return Ok(sets);
    }
    for flag in flags {
        match flag.split_once('=') {
            Some((name, path)) if !name.is_empty() => {
                sets.push((name.to_string(), PathBuf::from(path)));
            }
            _ => {
                let path = PathBuf::from(flag);
                sets.push((set_name_from(&path), path));
            }
        }
    }
    Ok(sets)
}

fn set_name_from(path: &std::path::Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "all".to_string())
}

/// Loads and validates one annotation set. Lenient mode reports violations
/// on stderr and drops duplicate (pair, annotator) records so aggregation
/// never double-counts.
fn load_annotations(
    name: &str,
    path: &std::path::Path,
    pairs: &[UtterancePair],
    mode: ValidationMode,
) -> Result<Vec<Annotation>> {
    let annotations: Vec<Annotation> = read_jsonl(path)?;
    let report = validate(&annotations, pairs, mode)
        .with_context(|| format!("annotation set {name:?} ({})", path.display()))?;
    if !report.is_clean() {
        log::warn!(
            "annotation set {name:?}: {} violation(s) in lenient mode",
            report.violations.len()
        );
        for violation in &report.violations {
            log::warn!("  {violation}");
        }
    }
    let mut seen = std::collections::HashSet::new();
    let deduped: Vec<Annotation> = annotations
        .into_iter()
        .filter(|a| seen.insert((a.pair_id.clone(), a.annotator_id.clone())))
        .collect();
    Ok(deduped)
}

fn run_aggregate(args: AggregateArgs, config: &RunConfig) -> Result<()> {
    let pairs_path = need_path(args.pairs, config, "pairs", "--pairs")?;
    let out = need_path(args.out, config, "gold", "--out")?;
    let sets = annotation_sets(&args.annotations, config)?;
    let mode = match args.mode {
        ModeArg::Strict => ValidationMode::Strict,
        ModeArg::Lenient => ValidationMode::Lenient,
    };
    let options = AggregateOptions {
        highlight_denominator: match args.highlight_majority {
            HighlightMajorityArg::All => HighlightDenominator::AllAnnotators,
            HighlightMajorityArg::Positive => HighlightDenominator::ParaphraseVoters,
        },
    };

    let pairs: Vec<UtterancePair> = read_jsonl(&pairs_path)?;
    let mut gold = Vec::new();
    let mut per_set = BTreeMap::new();
    let mut summary_parts = Vec::new();
    for (name, path) in &sets {
        let annotations = load_annotations(name, path, &pairs, mode)?;
        let aggregated = aggregate(&pairs, &annotations, options)?;
        let positives = aggregated.iter().filter(|a| a.is_paraphrase).count();
        let mean_annotations = if aggregated.is_empty() {
            0.0
        } else {
            aggregated.iter().map(|a| a.n_annotations).sum::<usize>() as f64
                / aggregated.len() as f64
        };
        summary_parts.push(format!(
            "{name}: {} pairs, {positives} paraphrases, {mean_annotations:.1} anns/pair",
            aggregated.len()
        ));
        per_set.insert(
            name.clone(),
            json!({
                "pairs": aggregated.len(),
                "paraphrases": positives,
                "mean_annotations": mean_annotations,
            }),
        );
        gold.extend(aggregated);
    }

    let total_positive = gold.iter().filter(|a| a.is_paraphrase).count();
    let total_mean = if gold.is_empty() {
        0.0
    } else {
        gold.iter().map(|a| a.n_annotations).sum::<usize>() as f64 / gold.len() as f64
    };
    let written = write_jsonl_atomic(&out, &gold)?;

    if let Some(report_path) = args.report.or_else(|| config.path("report")) {
        let document = json!({
            "config": {
                "pairs": pairs_path,
                "sets": sets.iter().map(|(n, p)| json!({"name": n, "path": p})).collect::<Vec<_>>(),
                "mode": format!("{:?}", args.mode).to_lowercase(),
                "highlight_majority": format!("{:?}", args.highlight_majority).to_lowercase(),
            },
            "total": {
                "pairs": gold.len(),
                "paraphrases": total_positive,
                "mean_annotations": total_mean,
            },
            "per_set": per_set,
        });
        let report_out = write_json_atomic(&report_path, &document)?;
        log::info!("aggregate report -> {}", report_out.display());
    }

    println!(
        "aggregate: {} pairs, {total_positive} paraphrases, {total_mean:.1} anns/pair ({}) -> {}",
        gold.len(),
        summary_parts.join("; "),
        written.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// agree
// ---------------------------------------------------------------------------

fn run_agree(args: AgreeArgs, config: &RunConfig, seed: u64) -> Result<()> {
    let pairs_path = need_path(args.pairs, config, "pairs", "--pairs")?;
    let sets = annotation_sets(&args.annotations, config)?;
    let agreement_config = AgreementConfig {
        krr_k: args.krr_k,
        krr_resamples: args.krr_resamples,
        seed,
        jaccard_aggregation: match args.jaccard_pooling {
            JaccardPoolingArg::PerPair => JaccardAggregation::PerPairMean,
            JaccardPoolingArg::Pooled => JaccardAggregation::Pooled,
        },
    };

    let pairs: Vec<UtterancePair> = read_jsonl(&pairs_path)?;
    let mut datasets = BTreeMap::new();
    for (name, path) in &sets {
        let annotations = load_annotations(name, path, &pairs, ValidationMode::Lenient)?;
        let report = agreement_report(&pairs, &annotations, &agreement_config)?;
        datasets.insert(name.clone(), report);
    }

    let document = json!({
        "config": {
            "pairs": pairs_path,
            "sets": sets.iter().map(|(n, p)| json!({"name": n, "path": p})).collect::<Vec<_>>(),
            "krr_k": agreement_config.krr_k,
            "krr_resamples": agreement_config.krr_resamples,
            "seed": seed,
            "jaccard_aggregation": agreement_config.jaccard_aggregation,
        },
        "datasets": datasets,
    });

    match args.out.or_else(|| config.path("report")) {
        Some(path) => {
            let written = write_json_atomic(&path, &document)?;
            println!(
                "agree: {} dataset(s) (seed {seed}) -> {}",
                datasets.len(),
                written.display()
            );
        }
        None => println!("{}", serde_json::to_string_pretty(&document)?),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// allocate-sim
// ---------------------------------------------------------------------------

fn parse_seeds(raw: Option<&str>, default_seed: u64) -> Result<Vec<u64>> {
    match raw {
        None => Ok(vec![default_seed]),
        Some(raw) => raw
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u64>()
                    .with_context(|| format!("cannot parse seed {p:?}"))
            })
            .collect(),
    }
}

fn run_allocate_sim(args: AllocateSimArgs, config: &RunConfig, seed: u64) -> Result<()> {
    let pool_path = need_path(args.pool, config, "pool", "--pool")?;
    let strategy_specs: Vec<String> = if args.strategies.is_empty() {
        config.strategies.clone()
    } else {
        args.strategies.clone()
    };
    if strategy_specs.is_empty() {
        bail!("no strategies: pass --strategy or set strategies in the config");
    }
    let entropy_default = config.thresholds.entropy_t.unwrap_or(0.8);
    let grid: Vec<AllocationStrategy> = strategy_specs
        .iter()
        .map(|s| {
            if s == "entropy" {
                Ok(AllocationStrategy::Entropy { threshold: entropy_default, min: 3, max: 15 })
            } else {
                s.parse::<AllocationStrategy>().map_err(|e| anyhow!("{e}"))
            }
        })
        .collect::<Result<_>>()?;
    let seeds = parse_seeds(args.seeds.as_deref(), seed)?;
    let caps = AdmissibilityCaps {
        cost: args.cost_cap.or(config.caps.cost).unwrap_or(8.0),
        accuracy: args.accuracy_floor.or(config.caps.accuracy).unwrap_or(0.90),
        krr: args.krr_floor.or(config.caps.krr).unwrap_or(0.70),
    };

    let annotations: Vec<Annotation> = read_jsonl(&pool_path)?;
    let pool = LabelMatrix::from_annotations(&annotations)?;
    let rows = evaluate_strategies(&grid, &pool, &seeds, caps, args.krr_resamples)?;

    let document = json!({
        "config": {
            "pool": pool_path,
            "seeds": seeds,
            "caps": caps,
            "krr_resamples": args.krr_resamples,
            "items": pool.n_items(),
        },
        "rows": rows,
    });
    let summary: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{} avg={:.2} acc={:.3} krr={} {}",
                r.strategy,
                r.avg_annotators,
                r.accuracy_vs_full,
                r.krr.map(|k| format!("{k:.3}")).unwrap_or_else(|| "-".into()),
                if r.admissible { "admissible" } else { "inadmissible" }
            )
        })
        .collect();

    match args.out.or_else(|| config.path("report")) {
        Some(path) => {
            let written = write_json_atomic(&path, &document)?;
            println!("allocate-sim: {} -> {}", summary.join(" | "), written.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&document)?),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

/// One record of the predictions input: raw responses to parse, or an
/// already-parsed classification with quotes.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PredictionRecord {
    Raw {
        pair_id: String,
        responses: Vec<String>,
    },
    PreParsed {
        pair_id: String,
        label: bool,
        #[serde(default)]
        guest_quotes: Vec<String>,
        #[serde(default)]
        host_quotes: Vec<String>,
    },
}

impl PredictionRecord {
    fn pair_id(&self) -> &str {
        match self {
            PredictionRecord::Raw { pair_id, .. } => pair_id,
            PredictionRecord::PreParsed { pair_id, .. } => pair_id,
        }
    }
}

/// Errors-file row: per-response errors carry their response index; the
/// item-level outcome error carries none.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ErrorRecord {
    pair_id: String,
    response_index: Option<usize>,
    kind: ErrorKind,
    detail: String,
}

fn run_extract(args: ExtractArgs, config: &RunConfig) -> Result<()> {
    let pairs_path = need_path(args.pairs, config, "pairs", "--pairs")?;
    let pred_path = need_path(args.pred, config, "pred", "--pred")?;
    let out = need_path(args.out, config, "out", "--out")?;
    let errors_path = need_path(args.errors, config, "errors", "--errors")?;
    let params = MatchParams {
        max_gap: args.max_gap.or(config.thresholds.max_gap).unwrap_or(3),
        min_coverage: args
            .min_coverage
            .or(config.thresholds.min_coverage)
            .unwrap_or(0.8),
    };

    let pairs: Vec<UtterancePair> = read_jsonl(&pairs_path)?;
    let by_id: BTreeMap<&str, &UtterancePair> =
        pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect();
    let records: Vec<PredictionRecord> = read_jsonl(&pred_path)?;

    struct ItemResult {
        final_outcome: std::result::Result<Prediction, (String, ExtractionError)>,
        call_errors: Vec<ErrorRecord>,
        n_calls: usize,
    }

    use rayon::prelude::*;
    let results: Vec<ItemResult> = records
        .par_iter()
        .map(|record| {
            let pair = by_id
                .get(record.pair_id())
                .ok_or_else(|| anyhow!("prediction references unknown pair id {}", record.pair_id()))?;
            let outcomes: Vec<std::result::Result<Prediction, ExtractionError>> = match record {
                PredictionRecord::Raw { responses, .. } => responses
                    .iter()
                    .map(|raw| parse_response(raw).and_then(|p| resolve(&p, pair, &params)))
                    .collect(),
                PredictionRecord::PreParsed { label, guest_quotes, host_quotes, .. } => {
                    let parsed = ParsedResponse {
                        classification: Some(*label),
                        guest_quotes: guest_quotes.clone(),
                        host_quotes: host_quotes.clone(),
                        explanation: String::new(),
                    };
                    vec![resolve(&parsed, pair, &params)]
                }
            };
            let call_errors: Vec<ErrorRecord> = outcomes
                .iter()
                .enumerate()
                .filter_map(|(index, o)| {
                    o.as_ref().err().map(|e| ErrorRecord {
                        pair_id: record.pair_id().to_string(),
                        response_index: Some(index),
                        kind: e.kind,
                        detail: e.detail.clone(),
                    })
                })
                .collect();
            let final_outcome = self_consistency(&outcomes)
                .map_err(|e| (record.pair_id().to_string(), e));
            Ok(ItemResult { final_outcome, call_errors, n_calls: outcomes.len() })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut resolved_predictions = Vec::new();
    let mut error_records = Vec::new();
    let mut n_calls = 0usize;
    for result in &results {
        n_calls += result.n_calls;
        error_records.extend(result.call_errors.iter().cloned());
        match &result.final_outcome {
            Ok(prediction) => resolved_predictions.push(prediction.clone()),
            Err((pair_id, error)) => error_records.push(ErrorRecord {
                pair_id: pair_id.clone(),
                response_index: None,
                kind: error.kind,
                detail: error.detail.clone(),
            }),
        }
    }

    let n_items = results.len();
    let item_errors = n_items - resolved_predictions.len();
    let call_errors: usize = results.iter().map(|r| r.call_errors.len()).sum();
    let out_written = write_jsonl_atomic(&out, &resolved_predictions)?;
    let errors_written = write_jsonl_atomic(&errors_path, &error_records)?;
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    println!(
        "extract: {n_items} items, {} resolved, item error rate {:.3}, per-call error rate {:.3} -> {}, {}",
        resolved_predictions.len(),
        rate(item_errors, n_items),
        rate(call_errors, n_calls),
        out_written.display(),
        errors_written.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

fn load_outcomes_from_predictions(
    pred_path: &std::path::Path,
    errors_path: Option<&std::path::Path>,
) -> Result<Vec<ItemOutcome>> {
    let predictions: Vec<Prediction> = read_jsonl(pred_path)?;
    for p in &predictions {
        if p.label && (p.guest_words.is_empty() || p.host_words.is_empty()) {
            bail!(
                "prediction for pair {} is positive but has an empty highlight set",
                p.pair_id
            );
        }
    }
    let mut outcomes: Vec<ItemOutcome> =
        predictions.into_iter().map(ItemOutcome::Resolved).collect();
    if let Some(errors_path) = errors_path {
        let errors: Vec<ErrorRecord> = read_jsonl(errors_path)?;
        // Only item-level outcome errors (no response index) enter scoring.
        outcomes.extend(errors.into_iter().filter(|e| e.response_index.is_none()).map(|e| {
            ItemOutcome::Failed {
                pair_id: e.pair_id,
                error: ExtractionError::new(e.kind, e.detail),
            }
        }));
    }
    Ok(outcomes)
}

fn load_outcomes_from_token_probs(
    token_probs_path: &std::path::Path,
    pairs_path: &std::path::Path,
    tau_cls: f64,
    tau_hl: f64,
) -> Result<Vec<ItemOutcome>> {
    let pairs: Vec<UtterancePair> = read_jsonl(pairs_path)?;
    let by_id: BTreeMap<&str, &UtterancePair> =
        pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect();
    let probs: Vec<TokenProbPrediction> = read_jsonl(token_probs_path)?;
    probs
        .iter()
        .map(|tp| {
            let pair = by_id
                .get(tp.pair_id.as_str())
                .ok_or_else(|| anyhow!("token probabilities reference unknown pair id {}", tp.pair_id))?;
            let prediction = threshold_token_probs(tp, pair, tau_cls, tau_hl)?;
            Ok(ItemOutcome::Resolved(prediction))
        })
        .collect()
}

fn run_evaluate(args: EvaluateArgs, config: &RunConfig) -> Result<()> {
    let gold_path = need_path(args.gold, config, "gold", "--gold")?;
    let gold: Vec<parapipe::annotations::AggregatedPair> = read_jsonl(&gold_path)?;
    let tau_cls = args.tau_cls.or(config.thresholds.tau_cls).unwrap_or(0.5);
    let tau_hl = args.tau_hl.or(config.thresholds.tau_hl).unwrap_or(0.5);

    let pred_path = args.pred.or_else(|| config.path("pred"));
    let token_probs_path = args.token_probs.or_else(|| config.path("token_probs"));
    let errors_path = args.errors.or_else(|| config.path("errors"));
    let (outcomes, source) = match (&pred_path, &token_probs_path) {
        (Some(pred), None) => (
            load_outcomes_from_predictions(pred, errors_path.as_deref())?,
            json!({"pred": pred, "errors": errors_path}),
        ),
        (None, Some(token_probs)) => {
            let pairs_path = need_path(args.pairs, config, "pairs", "--pairs")?;
            (
                load_outcomes_from_token_probs(token_probs, &pairs_path, tau_cls, tau_hl)?,
                json!({
                    "token_probs": token_probs,
                    "pairs": pairs_path,
                    "tau_cls": tau_cls,
                    "tau_hl": tau_hl,
                }),
            )
        }
        (Some(_), Some(_)) => bail!("pass either --pred or --token-probs, not both"),
        (None, None) => bail!("pass --pred or --token-probs (or configure pred/token_probs paths)"),
    };

    let denominator = match args.jaccard_denominator {
        DenominatorArg::GoldPositive => JaccardDenominator::GoldPositive,
        DenominatorArg::BothPositive => JaccardDenominator::BothPositive,
    };
    let report: EvalReport = evaluate_outcomes(&outcomes, &gold, denominator)?;
    let scored: Vec<ItemOutcome> = {
        let gold_ids: std::collections::HashSet<&str> =
            gold.iter().map(|g| g.pair_id.as_str()).collect();
        outcomes
            .iter()
            .filter(|o| gold_ids.contains(o.pair_id()))
            .cloned()
            .collect()
    };
    let cls_error_rate = classification_error_rate(&scored)?;

    let document = json!({
        "config": {
            "gold": gold_path,
            "source": source,
            "jaccard_denominator": denominator,
            "name": args.name,
        },
        "report": report,
        "classification_error_rate": cls_error_rate,
    });

    if args.table {
        print!("{}", render_table(&[(args.name.clone(), report.clone(), cls_error_rate)]));
    }
    match args.out.or_else(|| config.path("report")) {
        Some(path) => {
            let written = write_json_atomic(&path, &document)?;
            println!(
                "evaluate: {} items, F1 {:.3}, error rate {:.3} -> {}",
                report.n_items,
                report.f1,
                report.extraction_error_rate,
                written.display()
            );
        }
        None => println!("{}", serde_json::to_string_pretty(&document)?),
    }
    Ok(())
}
