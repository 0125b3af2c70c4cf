//! Command-line plumbing: dataset generation, vocabulary building, training,
//! finetuning, prediction, evaluation, experiment suites, and artifact
//! inspection behind one binary.
//!
//! Exit codes: 0 success, 2 usage error, 3 data/runtime error, 4 training
//! divergence. Config files override flags, flags override defaults, and the
//! effective configuration is echoed into every output manifest.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_predict_study, BaselineKind};
use crate::decode::{
    sample_predictions, write_predictions_jsonl, AggregateMethod, PredictionRecord, SampleConfig,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_study, summarize, write_study_results_csv, StudyEvalResult};
use crate::experiments::{
    run_ablation_suite, run_anonymization_experiment, run_finetune_experiment,
    run_scaling_experiment, training_failed, write_json_atomic, ExperimentPlan,
};
use crate::lm::{
    finetune, init_model, pretrain, single_task_train, LMCheckpoint, TrainConfig, TrainReport,
    TransformerConfig,
};
use crate::study::{read_studies_jsonl, write_studies_jsonl, Split, Study};
use crate::taskgen::{generate_bbob_dataset, generate_conditional_dataset_sized, TaskGenConfig};
use crate::textio::{build_vocabulary, FloatTokenization, TokenScheme, Vocabulary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_TRAINING_FAILED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "textregress", version, about = "Text-to-text metric prediction")]
struct Cli {
    /// Base RNG seed for the subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config file; its values override flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory or file, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker parallelism bound (1 for bit-reproducibility).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset.
    GenData(GenDataArgs),
    /// Build a vocabulary from a dataset.
    BuildVocab(BuildVocabArgs),
    /// Pretrain or single-task-train a language model.
    Train(TrainArgs),
    /// Finetune a pretrained checkpoint on one study.
    Finetune(FinetuneArgs),
    /// Predict test-split metrics with a checkpoint or a baseline.
    Predict(PredictArgs),
    /// Score a prediction file against a dataset.
    Evaluate(EvaluateArgs),
    /// Run an experiment suite from a plan.
    Experiment(ExperimentArgs),
    /// Summarize a dataset, checkpoint, or prediction file.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Bbob,
    BbobFlipped,
    Conditional,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    suite: SuiteArg,
    #[arg(long)]
    num_studies: usize,
    #[arg(long, default_value_t = 30)]
    trials_per_study: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    SignDigitsExp,
    MergedMantissa,
    ExpBeforeMantissa,
}

impl From<SchemeArg> for TokenScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::SignDigitsExp => TokenScheme::SignDigitsExp,
            SchemeArg::MergedMantissa => TokenScheme::MergedMantissa,
            SchemeArg::ExpBeforeMantissa => TokenScheme::ExpBeforeMantissa,
        }
    }
}

#[derive(Debug, Args)]
struct BuildVocabArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = crate::textio::DEFAULT_VOCAB_SIZE)]
    size: usize,
    #[arg(long, value_enum, default_value = "sign-digits-exp")]
    scheme: SchemeArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Pretrain,
    SingleTask,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Study id; required for --mode single-task.
    #[arg(long)]
    study: Option<String>,
    /// JSON file holding a TransformerConfig; defaults to the desk config.
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Vocabulary size when one has to be built.
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    study: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AggregateArg {
    Median,
    Mean,
    Maxlik,
}

impl From<AggregateArg> for AggregateMethod {
    fn from(a: AggregateArg) -> Self {
        match a {
            AggregateArg::Median => AggregateMethod::Median,
            AggregateArg::Mean => AggregateMethod::Mean,
            AggregateArg::Maxlik => AggregateMethod::MaxLikelihood,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long, conflicts_with = "baseline")]
    checkpoint: Option<PathBuf>,
    /// One of: mlp, gp, gbt (alias tree), rf.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    data: PathBuf,
    /// Restrict to one study id.
    #[arg(long)]
    study: Option<String>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, value_enum, default_value = "median")]
    aggregate: AggregateArg,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentSuite {
    Scaling,
    Anonymization,
    Ablations,
    Finetune,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    suite: ExperimentSuite,
    /// JSON ExperimentPlan; defaults are used when absent.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Pretrained checkpoint (finetune suite only).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Unseen-study dataset (finetune suite only).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
}

/// Values loadable from `--config`; anything present overrides the
/// corresponding flag.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub num_studies: Option<usize>,
    pub trials_per_study: Option<usize>,
    pub vocab_size: Option<usize>,
    pub samples: Option<usize>,
    pub temperature: Option<f64>,
    pub max_steps: Option<usize>,
    pub batch_size: Option<usize>,
}

/// The resolved configuration echoed into output manifests.
#[derive(Debug, Clone, Serialize)]
struct EffectiveConfig {
    command: String,
    seed: u64,
    threads: usize,
    args: serde_json::Value,
}

fn usage_err(msg: &str) -> Error {
    Error::InvalidConfig(msg.to_string())
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::InvalidSpace(_) | Error::InvalidTrial(_) => EXIT_USAGE,
        Error::TrainingFailed(_) => EXIT_TRAINING_FAILED,
        _ => EXIT_DATA,
    }
}

/// Parses process arguments and runs; the binary's whole `main`.
pub fn run() -> i32 {
    run_from(std::env::args())
}

/// Same as [`run`] but with explicit arguments, for tests.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = err.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log_level).try_init();
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file_cfg: FileConfig = match &cli.config {
        Some(path) => serde_json::from_slice(&std::fs::read(path)?)?,
        None => FileConfig::default(),
    };
    let seed = file_cfg.seed.or(cli.seed).unwrap_or(0);
    let threads = file_cfg.threads.unwrap_or(cli.threads);
    let out = cli.out.clone();
    match cli.command {
        Command::GenData(args) => cmd_gen_data(args, &file_cfg, seed, threads, out),
        Command::BuildVocab(args) => cmd_build_vocab(args, &file_cfg, seed, threads, out),
        Command::Train(args) => cmd_train(args, &file_cfg, seed, threads, out),
        Command::Finetune(args) => cmd_finetune(args, seed, threads, out),
        Command::Predict(args) => cmd_predict(args, &file_cfg, seed, threads, out),
        Command::Evaluate(args) => cmd_evaluate(args, out),
        Command::Experiment(args) => cmd_experiment(args, seed, out),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

fn require_out(out: Option<PathBuf>) -> Result<PathBuf> {
    out.ok_or_else(|| usage_err("--out is required"))
}

/// `--data` may name either the JSONL file or a directory holding
/// `studies.jsonl`.
fn resolve_data(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("studies.jsonl")
    } else {
        path.to_path_buf()
    }
}

fn load_dataset(path: &Path) -> Result<Vec<Study>> {
    let file = resolve_data(path);
    if !file.exists() {
        return Err(Error::Data(format!("dataset not found: {}", file.display())));
    }
    read_studies_jsonl(&file)
}

fn write_manifest(
    dir: &Path,
    command: &str,
    seed: u64,
    threads: usize,
    args: serde_json::Value,
) -> Result<()> {
    let cfg = EffectiveConfig { command: command.to_string(), seed, threads, args };
    write_json_atomic(&dir.join("manifest.json"), &cfg)
}

// ---------------------------------------------------------------------------
// gen-data

fn cmd_gen_data(
    args: GenDataArgs,
    file_cfg: &FileConfig,
    seed: u64,
    threads: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let out = require_out(out)?;
    let num_studies = file_cfg.num_studies.unwrap_or(args.num_studies);
    let trials = file_cfg.trials_per_study.unwrap_or(args.trials_per_study);
    if num_studies == 0 {
        return Err(usage_err("--num-studies must be positive"));
    }
    if trials == 0 {
        return Err(usage_err("--trials-per-study must be positive"));
    }
    let studies = match args.suite {
        SuiteArg::Bbob | SuiteArg::BbobFlipped => {
            let mut cfg = TaskGenConfig::new(num_studies, seed);
            cfg.trials_per_study = trials;
            if matches!(args.suite, SuiteArg::BbobFlipped) {
                cfg.sign_flip_prob = 0.5;
            }
            generate_bbob_dataset(&cfg)?
        }
        SuiteArg::Conditional => generate_conditional_dataset_sized(num_studies, trials, seed)?,
    };
    std::fs::create_dir_all(&out)?;
    write_studies_jsonl(&out.join("studies.jsonl"), &studies)?;
    write_manifest(
        &out,
        "gen-data",
        seed,
        threads,
        serde_json::json!({
            "suite": format!("{:?}", args.suite),
            "num_studies": num_studies,
            "trials_per_study": trials,
            "dataset_hash": crate::lm::hash_studies(&studies),
        }),
    )?;
    println!("wrote {} studies to {}", studies.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// build-vocab

fn cmd_build_vocab(
    args: BuildVocabArgs,
    file_cfg: &FileConfig,
    seed: u64,
    threads: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let out = require_out(out)?;
    let studies = load_dataset(&args.data)?;
    let size = file_cfg.vocab_size.unwrap_or(args.size);
    let codec = FloatTokenization::with_scheme(args.scheme.into());
    let vocab = build_vocabulary(&studies, size, codec)?;
    std::fs::create_dir_all(&out)?;
    vocab.save(&out.join("vocab.json"))?;
    write_manifest(
        &out,
        "build-vocab",
        seed,
        threads,
        serde_json::json!({
            "size": vocab.size(),
            "scheme": format!("{:?}", args.scheme),
            "dataset_hash": crate::lm::hash_studies(&studies),
        }),
    )?;
    println!("wrote vocabulary ({} tokens) to {}", vocab.size(), out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train / finetune

fn load_model_config(path: Option<&Path>) -> Result<TransformerConfig> {
    match path {
        Some(p) => {
            let cfg: TransformerConfig = serde_json::from_slice(&std::fs::read(p)?)?;
            cfg.validate()?;
            Ok(cfg)
        }
        None => Ok(TransformerConfig::default()),
    }
}

/// Loads `vocab.json` next to the dataset if present, otherwise builds one
/// from the dataset and saves it into the checkpoint directory.
fn vocab_for_training(
    data: &Path,
    studies: &[Study],
    vocab_size: usize,
) -> Result<Vocabulary> {
    let candidate = if data.is_dir() {
        data.join("vocab.json")
    } else {
        data.with_file_name("vocab.json")
    };
    if candidate.exists() {
        return Vocabulary::load(&candidate);
    }
    build_vocabulary(studies, vocab_size, FloatTokenization::default())
}

fn write_metrics_csv(path: &Path, report: &TrainReport) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,train_loss,val_loss")?;
    for &(step, train) in &report.train_losses {
        let val = report
            .val_losses
            .iter()
            .find(|&&(s, _)| s == step)
            .map(|&(_, v)| format!("{v}"))
            .unwrap_or_default();
        writeln!(f, "{step},{train},{val}")?;
    }
    Ok(())
}

fn save_run(
    out: &Path,
    ckpt: &LMCheckpoint,
    report: &TrainReport,
    command: &str,
    seed: u64,
    threads: usize,
    args: serde_json::Value,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    ckpt.save(out)?;
    write_metrics_csv(&out.join("metrics.csv"), report)?;
    write_json_atomic(&out.join("train_report.json"), report)?;
    // The checkpoint owns manifest.json; the CLI echo lives alongside it.
    let cfg = EffectiveConfig { command: command.to_string(), seed, threads, args };
    write_json_atomic(&out.join("run_manifest.json"), &cfg)?;
    if training_failed(report) {
        return Err(Error::TrainingFailed(format!(
            "validation loss never dropped 5% below its first value (best {:.4})",
            report.best_val_loss
        )));
    }
    Ok(())
}

fn cmd_train(
    args: TrainArgs,
    file_cfg: &FileConfig,
    seed: u64,
    threads: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let out = require_out(out)?;
    let studies = load_dataset(&args.data)?;
    let model_cfg = load_model_config(args.model_config.as_deref())?;
    let vocab_size = file_cfg
        .vocab_size
        .or(args.vocab_size)
        .unwrap_or(crate::textio::DEFAULT_VOCAB_SIZE);
    let vocab = vocab_for_training(&args.data, &studies, vocab_size)?;
    let mut train_cfg = match args.mode {
        ModeArg::Pretrain => TrainConfig::pretrain(seed),
        ModeArg::SingleTask => TrainConfig::single_task(seed),
    };
    if let Some(steps) = file_cfg.max_steps.or(args.max_steps) {
        train_cfg.max_steps = steps;
    }
    if let Some(batch) = file_cfg.batch_size.or(args.batch_size) {
        train_cfg.batch_size = batch;
    }
    let manifest_args = serde_json::json!({
        "mode": format!("{:?}", args.mode),
        "base_lr": train_cfg.base_lr,
        "max_steps": train_cfg.max_steps,
        "batch_size": train_cfg.batch_size,
        "vocab_size": vocab.size(),
        "model_config": model_cfg,
        "dataset_hash": crate::lm::hash_studies(&studies),
    });
    let (ckpt, report) = match args.mode {
        ModeArg::Pretrain => {
            let start = init_model(&model_cfg, &vocab, seed)?;
            pretrain(&start, &studies, &train_cfg)?
        }
        ModeArg::SingleTask => {
            let id = args
                .study
                .as_deref()
                .ok_or_else(|| usage_err("--mode single-task requires --study"))?;
            let study = find_study(&studies, id)?;
            single_task_train(&model_cfg, &vocab, study, &train_cfg)?
        }
    };
    save_run(&out, &ckpt, &report, "train", seed, threads, manifest_args)?;
    println!(
        "trained to step {} (best val loss {:.4}); checkpoint at {}",
        report.final_step,
        report.best_val_loss,
        out.display()
    );
    Ok(())
}

fn find_study<'a>(studies: &'a [Study], id: &str) -> Result<&'a Study> {
    studies
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Error::Data(format!("study {id} not in dataset")))
}

fn cmd_finetune(
    args: FinetuneArgs,
    seed: u64,
    threads: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let out = require_out(out)?;
    let ckpt = LMCheckpoint::load(&args.checkpoint)?;
    let studies = load_dataset(&args.data)?;
    let study = find_study(&studies, &args.study)?;
    let cfg = TrainConfig::finetune(seed);
    let (tuned, report) = finetune(&ckpt, study, &cfg)?;
    let manifest_args = serde_json::json!({
        "checkpoint": args.checkpoint.display().to_string(),
        "study": args.study,
        "base_lr": cfg.base_lr,
    });
    save_run(&out, &tuned, &report, "finetune", seed, threads, manifest_args)?;
    println!("finetuned on {}; checkpoint at {}", args.study, out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// predict

fn cmd_predict(
    args: PredictArgs,
    file_cfg: &FileConfig,
    seed: u64,
    threads: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let out = require_out(out)?;
    let studies = load_dataset(&args.data)?;
    let selected: Vec<&Study> = match &args.study {
        Some(id) => vec![find_study(&studies, id)?],
        None => studies.iter().collect(),
    };
    let split: Split = args.split.into();
    let samples = file_cfg.samples.unwrap_or(args.samples);
    let temperature = file_cfg.temperature.unwrap_or(args.temperature);
    if samples == 0 {
        return Err(usage_err("--samples must be positive"));
    }
    let records = match (&args.checkpoint, &args.baseline) {
        (Some(dir), None) => {
            let ckpt = LMCheckpoint::load(dir)?;
            predict_lm(&ckpt, &selected, split, samples, temperature, args.aggregate.into(), seed)?
        }
        (None, Some(name)) => {
            let kind = parse_baseline(name)?;
            if split != Split::Test {
                return Err(usage_err("baselines only predict the test split"));
            }
            let mut records = vec![];
            for study in &selected {
                records.extend(fit_predict_study(study, kind, seed)?);
            }
            records
        }
        _ => return Err(usage_err("exactly one of --checkpoint or --baseline is required")),
    };
    if records.is_empty() {
        return Err(Error::Data(format!("no feasible trials in split {split:?}")));
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_predictions_jsonl(&out, &records)?;
    if let Some(parent) = out.parent() {
        write_manifest(
            parent,
            "predict",
            seed,
            threads,
            serde_json::json!({
                "samples": samples,
                "temperature": temperature,
                "aggregate": format!("{:?}", args.aggregate),
                "split": format!("{split:?}"),
                "source": args
                    .checkpoint
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .or(args.baseline.clone()),
            }),
        )?;
    }
    println!("wrote {} predictions to {}", records.len(), out.display());
    Ok(())
}

fn parse_baseline(name: &str) -> Result<BaselineKind> {
    // "tree" is the user-facing alias for the boosted-tree baseline.
    if name == "tree" {
        return Ok(BaselineKind::Gbt);
    }
    name.parse()
}

fn predict_lm(
    ckpt: &LMCheckpoint,
    studies: &[&Study],
    split: Split,
    samples: usize,
    temperature: f64,
    aggregate: AggregateMethod,
    seed: u64,
) -> Result<Vec<PredictionRecord>> {
    let mut records = vec![];
    let mut query_index = 0u64;
    for study in studies {
        for (idx, trial) in study.trials.iter().enumerate() {
            if trial.split != split || trial.y.feasible().is_none() {
                continue;
            }
            let prompt =
                crate::textio::render_prompt(&study.space, &trial.x, &study.metadata)?;
            let cfg = SampleConfig {
                n: samples,
                temperature,
                seed,
                query_index,
                aggregate_method: aggregate,
            };
            query_index += 1;
            let pred = sample_predictions(ckpt, &prompt, &cfg)?;
            records.push(PredictionRecord::new(&study.id, idx, &pred));
        }
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// evaluate

fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

fn cmd_evaluate(args: EvaluateArgs, out: Option<PathBuf>) -> Result<()> {
    let out = require_out(out)?;
    let records = read_predictions(&args.predictions)?;
    if records.is_empty() {
        return Err(Error::Data("prediction file is empty".into()));
    }
    let studies = load_dataset(&args.data)?;
    // Group by study id, preserving file order.
    let mut order: Vec<&str> = vec![];
    for r in &records {
        if !order.contains(&r.study_id.as_str()) {
            order.push(&r.study_id);
        }
    }
    let mut results: Vec<StudyEvalResult> = vec![];
    for id in order {
        let study = find_study(&studies, id)?;
        let (y_min, y_max) = study
            .y_range()
            .ok_or_else(|| Error::Data(format!("study {id} has no feasible trials")))?;
        let mut preds = vec![];
        let mut ys = vec![];
        for r in records.iter().filter(|r| r.study_id == id) {
            let trial = study.trials.get(r.trial_index).ok_or_else(|| {
                Error::Data(format!("study {id} has no trial {}", r.trial_index))
            })?;
            let y = trial.y.feasible().ok_or_else(|| {
                Error::Data(format!("trial {} of {id} is infeasible", r.trial_index))
            })?;
            preds.push(r.aggregate);
            ys.push(y);
        }
        results.push(evaluate_study(id, &preds, &ys, y_min, y_max)?);
    }
    std::fs::create_dir_all(&out)?;
    write_study_results_csv(&out.join("study_results.csv"), &results)?;
    let summary = summarize(&results)?;
    write_json_atomic(&out.join("summary.json"), &summary)?;
    println!(
        "evaluated {} studies: mean study error {:.4}",
        summary.n_studies, summary.mean_study_error
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// experiment

fn cmd_experiment(args: ExperimentArgs, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let plan = match &args.plan {
        Some(path) => serde_json::from_slice(&std::fs::read(path)?)?,
        None => {
            let out = require_out(out)?;
            ExperimentPlan::new("default", &out, seed)
        }
    };
    plan.validate()?;
    match args.suite {
        ExperimentSuite::Scaling => {
            let report = run_scaling_experiment(&plan)?;
            println!("scaling curve: {:?}", report.curve);
        }
        ExperimentSuite::Anonymization => {
            let report = run_anonymization_experiment(&plan)?;
            println!(
                "original error {:.4}, anonymized error {:.4}",
                report.original_error, report.anonymized_error
            );
        }
        ExperimentSuite::Ablations => {
            let report = run_ablation_suite(&plan)?;
            println!("tokenization table: {} rows", report.tokenization.len());
        }
        ExperimentSuite::Finetune => {
            let ckpt_dir = args
                .checkpoint
                .as_ref()
                .ok_or_else(|| usage_err("--suite finetune requires --checkpoint"))?;
            let data = args
                .data
                .as_ref()
                .ok_or_else(|| usage_err("--suite finetune requires --data"))?;
            let ckpt = LMCheckpoint::load(ckpt_dir)?;
            let unseen = load_dataset(data)?;
            let report = run_finetune_experiment(&plan, &ckpt, &unseen)?;
            println!(
                "mean errors: single-task {:.4}, zero-shot {:.4}, finetuned {:.4}",
                report.mean_single_task, report.mean_zero_shot, report.mean_finetuned
            );
        }
    }
    println!("artifacts under {}", plan.run_dir().display());
    Ok(())
}

// ---------------------------------------------------------------------------
// inspect

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let mut inspected = false;
    if let Some(data) = &args.data {
        let studies = load_dataset(data)?;
        let trials: usize = studies.iter().map(|s| s.trials.len()).sum();
        println!(
            "dataset: {} studies, {} trials, hash {}",
            studies.len(),
            trials,
            crate::lm::hash_studies(&studies)
        );
        for s in studies.iter().take(5) {
            println!(
                "  {}: {} params, {} trials, title {:?}",
                s.id,
                s.space.parameters().len(),
                s.trials.len(),
                s.metadata.title
            );
        }
        inspected = true;
    }
    if let Some(dir) = &args.checkpoint {
        let ckpt = LMCheckpoint::load(dir)?;
        println!(
            "checkpoint: step {}, {} parameters, vocab {}, best val loss {:.4}",
            ckpt.step,
            ckpt.num_parameters(),
            ckpt.vocab.size(),
            ckpt.manifest.best_val_loss
        );
        inspected = true;
    }
    if let Some(path) = &args.predictions {
        let records = read_predictions(path)?;
        let studies: std::collections::BTreeSet<&str> =
            records.iter().map(|r| r.study_id.as_str()).collect();
        println!(
            "predictions: {} rows over {} studies",
            records.len(),
            studies.len()
        );
        inspected = true;
    }
    if !inspected {
        return Err(usage_err("inspect needs --data, --checkpoint, or --predictions"));
    }
    Ok(())
}
