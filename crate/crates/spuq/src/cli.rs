//! Command-line entry points: `score` one prompt, `evaluate` a dataset,
//! `tune` hyperparameters, `perturb` to inspect variants.
//!
//! Exit codes: 0 success, 1 the run completed with warnings (e.g.
//! unparseable verbalized replies), 2 usage or configuration errors.
//! Every run emits a `run: config_hash=… seed=…` line on stderr from which
//! it can be reproduced.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::aggregation::{AggregationConfig, IntraSource, VerbalizedStyle};
use crate::artifacts::{self, EvaluationReportFile, RepeatSummary};
use crate::config::RunConfig;
use crate::dataset::{self, TaskType};
use crate::engine::SpuqRunner;
use crate::evaluation::{CalibrationReport, Weighting};
use crate::gateway::CountingGenerator;
use crate::harness::{mix_seed, run_method, Method};
use crate::perturb::{PerturbError, Perturber};
use crate::similarity::{MetricScorer, SimilarityMetric};
use crate::tuner::{tune, TuningSpec};

#[derive(Debug, Parser)]
#[command(
    name = "spuq",
    version,
    about = "Perturbation-based sampling for uncertainty quantification of text-generation models"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score a single prompt and print {answer, confidence, variants}.
    Score(ScoreArgs),
    /// Evaluate a method over a JSONL dataset and write calibration
    /// artifacts (report.json, buckets.csv, confidences.csv, traces.jsonl).
    Evaluate(EvaluateArgs),
    /// Grid-search perturbation/aggregation hyperparameters on a dev split.
    Tune(TuneArgs),
    /// Print the perturbed variants of a prompt without calling the model.
    Perturb(PerturbArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskTypeArg {
    Classification,
    Generation,
}

impl From<TaskTypeArg> for TaskType {
    fn from(value: TaskTypeArg) -> Self {
        match value {
            TaskTypeArg::Classification => TaskType::Classification,
            TaskTypeArg::Generation => TaskType::Generation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Spuq,
    Sampling,
    Likelihood,
    Verbalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightingArg {
    Unweighted,
    Population,
}

impl From<WeightingArg> for Weighting {
    fn from(value: WeightingArg) -> Self {
        match value {
            WeightingArg::Unweighted => Weighting::Unweighted,
            WeightingArg::Population => Weighting::Population,
        }
    }
}

#[derive(Debug, clap::Args)]
struct CommonArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Provider name from the config (defaults to `default_provider`).
    #[arg(long)]
    provider: Option<String>,
    /// Number of perturbed variants k (overrides the config).
    #[arg(long)]
    k: Option<usize>,
    /// Run seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// The prompt to score.
    #[arg(long)]
    prompt: String,
    /// Original temperature T₀ (overrides the config).
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Debug, clap::Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// JSONL dataset path.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "classification")]
    task_type: TaskTypeArg,
    #[arg(long, value_enum, default_value = "spuq")]
    method: MethodArg,
    /// Output directory for the report artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Number of ECE buckets.
    #[arg(long, default_value_t = 10)]
    buckets: usize,
    #[arg(long, value_enum, default_value = "unweighted")]
    weighting: WeightingArg,
    /// Repeat the evaluation with derived seeds and report mean ± std.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
}

#[derive(Debug, clap::Args)]
struct TuneArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "classification")]
    task_type: TaskTypeArg,
    #[arg(long)]
    out: PathBuf,
    /// Development-split size.
    #[arg(long)]
    dev_size: Option<usize>,
    /// Number of tuning repeats (resampled dev splits).
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    buckets: Option<usize>,
    #[arg(long, value_enum)]
    weighting: Option<WeightingArg>,
}

#[derive(Debug, clap::Args)]
struct PerturbArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    prompt: String,
    #[arg(long)]
    temperature: Option<f64>,
}

type CmdResult = Result<i32, Box<dyn std::error::Error>>;

/// Parses and runs a command line; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Score(args) => cmd_score(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Perturb(args) => cmd_perturb(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Loads the config and applies the common flag overrides.
fn load_config(common: &CommonArgs) -> Result<(RunConfig, String), Box<dyn std::error::Error>> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(k) = common.k {
        if k == 0 {
            return Err("--k must be ≥ 1".into());
        }
        config.spuq.perturbation.k = k;
    }
    if let Some(seed) = common.seed {
        config.spuq.seed = seed;
    }
    let provider_name = config.resolve_provider_name(common.provider.as_deref())?;
    Ok((config, provider_name))
}

fn emit_reproducibility_line(config_hash: &str, seed: u64) {
    eprintln!("run: config_hash={config_hash} seed={seed}");
}

fn cmd_score(args: ScoreArgs) -> CmdResult {
    let (mut config, provider_name) = load_config(&args.common)?;
    if let Some(t) = args.temperature {
        config.request.temperature = t;
    }

    let provider = config.build_provider(&provider_name)?;
    let paraphraser_box = match &config.paraphraser {
        Some(name) => Some(config.build_provider(name)?),
        None => None,
    };
    let embedder = config.build_embedder()?;

    let generation_counter = CountingGenerator::new(provider.as_ref());
    let paraphrase_counter =
        CountingGenerator::new(paraphraser_box.as_deref().unwrap_or(provider.as_ref()));
    let mut runner = SpuqRunner::new(&generation_counter)
        .with_paraphraser(&paraphrase_counter)
        .with_sets(config.sets.clone());
    if let Some(embedder) = &embedder {
        runner = runner.with_embedder(embedder.as_ref());
    }

    let record_free_input = crate::gateway::ModelInput {
        temperature: config.request.temperature,
        system_message: config.request.system_message.clone(),
        user_prompt: args.prompt,
        max_tokens: config.request.max_tokens,
        request_logprobs: false,
    };
    let result = runner.run_spuq(&record_free_input, &config.spuq)?;

    emit_reproducibility_line(&config.spuq.config_hash(), config.spuq.seed);
    eprintln!(
        "calls: generation={} paraphrase={}",
        generation_counter.calls(),
        paraphrase_counter.calls()
    );

    let body = serde_json::json!({
        "answer": result.original_output,
        "confidence": result.confidence,
        "variants": result.variants,
        "warnings": result.warnings,
    });
    println!("{}", serde_json::to_string_pretty(&body)?);
    Ok(if result.warnings.is_empty() { 0 } else { 1 })
}

fn method_from(args_method: MethodArg, config: &RunConfig) -> Method {
    match args_method {
        MethodArg::Spuq => Method::Spuq(config.spuq.clone()),
        MethodArg::Sampling => {
            let metric = match &config.spuq.aggregation {
                AggregationConfig::InterSample { metric, .. } => *metric,
                AggregationConfig::IntraSample { .. } => SimilarityMetric::rouge_l(),
            };
            Method::Sampling {
                k: config.spuq.perturbation.k,
                metric,
            }
        }
        MethodArg::Likelihood => Method::Likelihood,
        MethodArg::Verbalized => {
            let style = match &config.spuq.aggregation {
                AggregationConfig::IntraSample {
                    source: IntraSource::VerbalizedNumbers,
                } => VerbalizedStyle::Numbers,
                _ => VerbalizedStyle::Words,
            };
            Method::Verbalized(style)
        }
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> CmdResult {
    let (config, provider_name) = load_config(&args.common)?;
    let records = dataset::load_jsonl(&args.dataset, args.task_type.into())?;
    if records.is_empty() {
        return Err("dataset is empty".into());
    }

    let provider = config.build_provider(&provider_name)?;
    let paraphraser_box = match &config.paraphraser {
        Some(name) => Some(config.build_provider(name)?),
        None => None,
    };
    let embedder = config.build_embedder()?;
    let mut runner = SpuqRunner::new(provider.as_ref()).with_sets(config.sets.clone());
    if let Some(p) = &paraphraser_box {
        runner = runner.with_paraphraser(p.as_ref());
    }
    if let Some(embedder) = &embedder {
        runner = runner.with_embedder(embedder.as_ref());
    }

    let method = method_from(args.method, &config);
    let weighting: Weighting = args.weighting.into();
    let base_seed = config.spuq.seed;

    let mut reports: Vec<CalibrationReport> = Vec::new();
    let mut first_run = None;
    for repeat in 0..args.repeats.max(1) {
        let seed = if repeat == 0 {
            base_seed
        } else {
            mix_seed(base_seed, repeat as u64)
        };
        let run = run_method(&records, &method, &runner, &config.request, seed)?;
        reports.push(CalibrationReport::from_outcomes(
            &run.outcomes,
            args.buckets,
            weighting,
        )?);
        if first_run.is_none() {
            first_run = Some(run);
        }
    }
    let run = first_run.expect("at least one repeat");
    let report = reports[0].clone();

    let report_file = EvaluationReportFile {
        method: method.name().to_string(),
        config_hash: method.config_hash(),
        seed: base_seed,
        report: report.clone(),
        repeats: RepeatSummary::from_reports(&reports),
        warnings: run
            .traces
            .iter()
            .flat_map(|t| t.warnings.iter().cloned())
            .collect(),
    };
    artifacts::write_report_json(&args.out, &report_file)?;
    artifacts::write_buckets_csv(&args.out, &report.buckets)?;
    artifacts::write_confidences_csv(&args.out, &run.traces)?;
    artifacts::write_traces_jsonl(&args.out, &run.traces)?;

    emit_reproducibility_line(&method.config_hash(), base_seed);
    print!("{}", report.reliability_diagram());
    println!(
        "method={} n={} ece={:.4} rho={}",
        method.name(),
        report.n,
        report.ece,
        report
            .pearson_rho
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "undefined".into()),
    );

    Ok(if run.warning_count == 0 { 0 } else { 1 })
}

fn cmd_tune(args: TuneArgs) -> CmdResult {
    let (config, provider_name) = load_config(&args.common)?;
    let records = dataset::load_jsonl(&args.dataset, args.task_type.into())?;

    let provider = config.build_provider(&provider_name)?;
    let paraphraser_box = match &config.paraphraser {
        Some(name) => Some(config.build_provider(name)?),
        None => None,
    };
    let embedder = config.build_embedder()?;
    let mut runner = SpuqRunner::new(provider.as_ref()).with_sets(config.sets.clone());
    if let Some(p) = &paraphraser_box {
        runner = runner.with_paraphraser(p.as_ref());
    }
    if let Some(embedder) = &embedder {
        runner = runner.with_embedder(embedder.as_ref());
    }

    let mut spec: TuningSpec = config.tuning.clone().unwrap_or_default();
    if let Some(k) = args.common.k {
        spec.k = k;
    }
    if let Some(seed) = args.common.seed {
        spec.seed = seed;
    }
    if let Some(dev_size) = args.dev_size {
        spec.dev_size = dev_size;
    }
    if let Some(repeats) = args.repeats {
        spec.repeats = repeats;
    }
    if let Some(buckets) = args.buckets {
        spec.num_buckets = buckets;
    }
    if let Some(weighting) = args.weighting {
        spec.weighting = weighting.into();
    }

    let result = tune(&records, &spec, &runner, &config.request)?;
    artifacts::write_leaderboard_csv(&args.out, &result.leaderboard)?;
    if !result.skipped.is_empty() {
        artifacts::write_skipped_csv(&args.out, &result.skipped)?;
    }

    // The winning configuration is written back out as a reusable run
    // config.
    let mut best_config = config.clone();
    best_config.spuq = result.best.clone();
    best_config.tuning = None;
    let path = args.out.join("best_config.toml");
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(&path, best_config.to_toml())?;

    emit_reproducibility_line(&result.best.config_hash(), spec.seed);
    let winner = result
        .leaderboard
        .iter()
        .find(|r| r.index == result.best_index)
        .expect("winner is on the leaderboard");
    println!(
        "best: index={} T={} prompt={} aggregation={} ece={:.4}",
        winner.index,
        winner.temperature_mode,
        winner.prompt_mode,
        winner.aggregation.describe(),
        winner.ece,
    );
    println!("repeat winners: {:?}", result.repeat_winners);
    println!(
        "leaderboard: {} rows ({} skipped) -> {}",
        result.leaderboard.len(),
        result.skipped.len(),
        args.out.join("leaderboard.csv").display()
    );
    Ok(0)
}

fn cmd_perturb(args: PerturbArgs) -> CmdResult {
    let (mut config, provider_name) = load_config(&args.common)?;
    if let Some(t) = args.temperature {
        config.request.temperature = t;
    }
    let provider = config.build_provider(&provider_name)?;
    let paraphraser_box = match &config.paraphraser {
        Some(name) => Some(config.build_provider(name)?),
        None => None,
    };
    let embedder = config.build_embedder()?;

    let weight_metric = config.spuq.aggregation.weight_metric();
    let scorer: Box<dyn crate::similarity::TextSimilarity> = match weight_metric {
        Some(metric) => Box::new(MetricScorer {
            metric,
            embedder: embedder.as_deref(),
        }),
        None => Box::new(crate::similarity::UniformSimilarity),
    };
    let perturber = Perturber {
        profile: provider.profile(),
        paraphraser: Some(paraphraser_box.as_deref().unwrap_or(provider.as_ref())),
        weight_scorer: scorer.as_ref(),
        sets: &config.sets,
    };
    let input = crate::gateway::ModelInput {
        temperature: config.request.temperature,
        system_message: config.request.system_message.clone(),
        user_prompt: args.prompt,
        max_tokens: config.request.max_tokens,
        request_logprobs: false,
    };

    emit_reproducibility_line(&config.spuq.config_hash(), config.spuq.seed);
    let (variants, degraded) =
        match perturber.perturb(&input, &config.spuq.perturbation, config.spuq.seed) {
            Ok(v) => (v, false),
            Err(PerturbError::DegradedParaphrase {
                variants,
                fallback_indices,
                ..
            }) => {
                eprintln!("warning: paraphrase shortfall; fallback indices {fallback_indices:?}");
                (variants, true)
            }
            Err(e) => return Err(e.into()),
        };
    println!("original: T={:.2} {}", input.temperature, input.user_prompt);
    for v in &variants {
        println!(
            "variant {}: T={:.2} w={:.4} {}",
            v.index,
            v.input.temperature,
            v.prompt_weight,
            v.input.user_prompt.escape_debug(),
        );
    }
    Ok(if degraded { 1 } else { 0 })
}
