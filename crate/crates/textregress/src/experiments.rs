//! Experiment orchestration: task-scaling curves, anonymization pairs,
//! finetuning on unseen tasks, and the sampling/aggregation/tokenization
//! ablations. Every run lands in a plan-hash-keyed directory, reports are
//! written atomically, and completed cells are reused on rerun.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{fit_predict_study, BaselineKind};
use crate::decode::{sample_predictions, AggregateMethod, SampleConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate_study, mean_study_error, write_curve_csv, StudyEvalResult};
use crate::lm::{
    finetune, init_model, pretrain, single_task_train, LMCheckpoint, TrainConfig, TrainReport,
    TransformerConfig,
};
use crate::study::{Split, Study};
use crate::taskgen::{generate_bbob_dataset, generate_unseen_shift_tasks, TaskGenConfig};
use crate::textio::{anonymize_study, AnonymizeMode, FloatTokenization, TokenScheme};

/// Declarative description of one experiment suite run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub name: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Task-scaling sweep levels (ascending).
    pub num_studies_levels: Vec<usize>,
    /// Inference sample-count sweep.
    pub samples_levels: Vec<usize>,
    pub schemes: Vec<TokenScheme>,
    pub anonymize_mode: AnonymizeMode,
    pub trials_per_study: usize,
    pub vocab_size: usize,
    pub model_config: TransformerConfig,
    pub train_config: TrainConfig,
    /// Size of the fixed held-out evaluation set.
    pub eval_studies: usize,
    /// Samples per prediction during evaluation.
    pub eval_samples: usize,
}

impl ExperimentPlan {
    pub fn new(name: &str, out_dir: &Path, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            seed,
            out_dir: out_dir.to_path_buf(),
            num_studies_levels: vec![10, 100, 1000],
            samples_levels: vec![1, 4, 16, 64],
            schemes: vec![
                TokenScheme::SignDigitsExp,
                TokenScheme::MergedMantissa,
                TokenScheme::ExpBeforeMantissa,
            ],
            anonymize_mode: AnonymizeMode::NamesAndStrings,
            trials_per_study: 30,
            vocab_size: 1024,
            model_config: TransformerConfig::default(),
            train_config: TrainConfig::pretrain(seed),
            eval_studies: 50,
            eval_samples: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidConfig("plan needs a name".into()));
        }
        if self.num_studies_levels.is_empty()
            || self.samples_levels.is_empty()
            || self.schemes.is_empty()
        {
            return Err(Error::InvalidConfig("sweep axes must be nonempty".into()));
        }
        if !self.num_studies_levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("num_studies levels must ascend".into()));
        }
        self.model_config.validate()?;
        self.train_config.validate()
    }

    /// Content hash of the plan; keys the run directory.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("plan serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Run directory for this plan: `<out_dir>/<name>-<hash>`.
    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(format!("{}-{}", self.name, self.hash()))
    }
}

/// Writes `value` as JSON via a temp file and rename, so readers never see a
/// half-written report.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(value)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn load_cached<T: for<'de> Deserialize<'de>>(path: &Path) -> Option<T> {
    let bytes = std::fs::read(path).ok()?;
    serde_json::from_slice(&bytes).ok()
}

/// Table 4's FAIL rule: training failed if the validation loss never dropped
/// at least 5% below its first recorded value.
pub fn training_failed(report: &TrainReport) -> bool {
    let Some(&(_, first)) = report.val_losses.first() else {
        return true;
    };
    !report.val_losses.iter().any(|&(_, v)| v < 0.95 * first)
}

/// Mean study error of a checkpoint over the test splits of `studies`.
pub fn evaluate_checkpoint(
    ckpt: &LMCheckpoint,
    studies: &[Study],
    n_samples: usize,
    aggregate_method: AggregateMethod,
    seed: u64,
) -> Result<Vec<StudyEvalResult>> {
    let mut results = vec![];
    let mut query_index = 0u64;
    for study in studies {
        let Some((y_min, y_max)) = study.y_range() else {
            return Err(Error::Data(format!("study {} has no feasible trials", study.id)));
        };
        let mut preds = vec![];
        let mut ys = vec![];
        for trial in study.trials_in(Split::Test) {
            let Some(y) = trial.y.feasible() else { continue };
            let prompt =
                crate::textio::render_prompt(&study.space, &trial.x, &study.metadata)?;
            let cfg = SampleConfig {
                n: n_samples,
                seed,
                query_index,
                aggregate_method,
                ..Default::default()
            };
            query_index += 1;
            preds.push(sample_predictions(ckpt, &prompt, &cfg)?.aggregate);
            ys.push(y);
        }
        results.push(evaluate_study(&study.id, &preds, &ys, y_min, y_max)?);
    }
    Ok(results)
}

fn pretrain_on(
    plan: &ExperimentPlan,
    dataset: &[Study],
    codec: FloatTokenization,
) -> Result<(LMCheckpoint, TrainReport)> {
    let vocab = crate::textio::build_vocabulary(dataset, plan.vocab_size, codec)?;
    let start = init_model(&plan.model_config, &vocab, plan.seed)?;
    pretrain(&start, dataset, &plan.train_config)
}

// ---------------------------------------------------------------------------
// task scaling

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub plan_hash: String,
    pub dataset_hash: String,
    /// (num_studies, mean held-out study error), one row per sweep level.
    pub curve: Vec<(usize, f64)>,
    /// Horizontal reference: mean error of each baseline on the same
    /// held-out studies (fit per study on that study's train split).
    pub baseline_refs: Vec<(String, f64)>,
    pub from_cache: bool,
}

/// Nested prefix subsets: the level-k training set is the first k studies of
/// the full corpus, so smaller levels are strict subsets of larger ones.
pub fn nested_subsets<'a>(dataset: &'a [Study], levels: &[usize]) -> Result<Vec<&'a [Study]>> {
    let max = *levels.iter().max().unwrap_or(&0);
    if dataset.len() < max {
        return Err(Error::Data(format!(
            "need {max} studies for the scaling sweep, have {}",
            dataset.len()
        )));
    }
    Ok(levels.iter().map(|&k| &dataset[..k]).collect())
}

pub fn run_scaling_experiment(plan: &ExperimentPlan) -> Result<ScalingReport> {
    plan.validate()?;
    let dir = plan.run_dir();
    let report_path = dir.join("scaling.json");
    if let Some(mut cached) = load_cached::<ScalingReport>(&report_path) {
        cached.from_cache = true;
        return Ok(cached);
    }
    let max_level = *plan.num_studies_levels.iter().max().unwrap();
    let mut gen = TaskGenConfig::new(max_level, plan.seed);
    gen.trials_per_study = plan.trials_per_study;
    let dataset = generate_bbob_dataset(&gen)?;
    // Fixed held-out evaluation set: fresh tasks plus unseen shifts.
    let mut eval_gen = TaskGenConfig::new(plan.eval_studies.max(1), plan.seed ^ 0x5ca1e);
    eval_gen.trials_per_study = plan.trials_per_study;
    let eval_set = generate_unseen_shift_tasks(&eval_gen, &dataset)?;

    let mut curve = vec![];
    for subset in nested_subsets(&dataset, &plan.num_studies_levels)? {
        let (ckpt, _) = pretrain_on(plan, subset, FloatTokenization::default())?;
        let results = evaluate_checkpoint(
            &ckpt,
            &eval_set,
            plan.eval_samples,
            AggregateMethod::Median,
            plan.seed,
        )?;
        curve.push((subset.len(), mean_study_error(&results)?));
    }

    let mut baseline_refs = vec![];
    for kind in [BaselineKind::Mlp, BaselineKind::Gp, BaselineKind::Gbt, BaselineKind::Rf] {
        let mut errs = vec![];
        for study in &eval_set {
            let preds = fit_predict_study(study, kind, plan.seed)?;
            let (y_min, y_max) = study.y_range().unwrap();
            let ys: Vec<f64> = preds
                .iter()
                .map(|p| study.trials[p.trial_index].y.feasible().unwrap())
                .collect();
            let ps: Vec<f64> = preds.iter().map(|p| p.aggregate).collect();
            errs.push(crate::eval::study_error(&ps, &ys, y_min, y_max)?);
        }
        let name = format!("{kind:?}").to_lowercase();
        baseline_refs.push((name, errs.iter().sum::<f64>() / errs.len() as f64));
    }

    let report = ScalingReport {
        plan_hash: plan.hash(),
        dataset_hash: crate::lm::hash_studies(&dataset),
        curve,
        baseline_refs,
        from_cache: false,
    };
    write_json_atomic(&report_path, &report)?;
    write_curve_csv(
        &dir.join("scaling_curve.csv"),
        "num_studies",
        "mean_study_error",
        &report.curve.iter().map(|&(n, e)| (n as f64, e)).collect::<Vec<_>>(),
    )?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// anonymization

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnonymizationReport {
    pub plan_hash: String,
    pub original_error: f64,
    pub anonymized_error: f64,
    pub original_failed: bool,
    pub anonymized_failed: bool,
    pub from_cache: bool,
}

/// Trains identically seeded models on original and anonymized copies of the
/// same corpus and evaluates each on its own view of a held-out set.
pub fn run_anonymization_experiment(plan: &ExperimentPlan) -> Result<AnonymizationReport> {
    plan.validate()?;
    let dir = plan.run_dir();
    let report_path = dir.join("anonymization.json");
    if let Some(mut cached) = load_cached::<AnonymizationReport>(&report_path) {
        cached.from_cache = true;
        return Ok(cached);
    }
    let n = *plan.num_studies_levels.last().unwrap();
    let mut gen = TaskGenConfig::new(n, plan.seed);
    gen.trials_per_study = plan.trials_per_study;
    let original = generate_bbob_dataset(&gen)?;
    let anonymized = original
        .iter()
        .map(|s| anonymize_study(s, plan.anonymize_mode))
        .collect::<Result<Vec<_>>>()?;

    let mut eval_gen = TaskGenConfig::new(plan.eval_studies.max(1), plan.seed ^ 0x5ca1e);
    eval_gen.trials_per_study = plan.trials_per_study;
    let eval_original = generate_unseen_shift_tasks(&eval_gen, &original)?;
    let eval_anonymized = eval_original
        .iter()
        .map(|s| anonymize_study(s, plan.anonymize_mode))
        .collect::<Result<Vec<_>>>()?;

    let (ckpt_orig, report_orig) = pretrain_on(plan, &original, FloatTokenization::default())?;
    let (ckpt_anon, report_anon) =
        pretrain_on(plan, &anonymized, FloatTokenization::default())?;

    let err_orig = mean_study_error(&evaluate_checkpoint(
        &ckpt_orig,
        &eval_original,
        plan.eval_samples,
        AggregateMethod::Median,
        plan.seed,
    )?)?;
    let err_anon = mean_study_error(&evaluate_checkpoint(
        &ckpt_anon,
        &eval_anonymized,
        plan.eval_samples,
        AggregateMethod::Median,
        plan.seed,
    )?)?;

    let report = AnonymizationReport {
        plan_hash: plan.hash(),
        original_error: err_orig,
        anonymized_error: err_anon,
        original_failed: training_failed(&report_orig),
        anonymized_failed: training_failed(&report_anon),
        from_cache: false,
    };
    write_json_atomic(&report_path, &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// finetuning on unseen tasks

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinetuneRow {
    pub study_id: String,
    pub single_task_error: f64,
    pub zero_shot_error: f64,
    pub finetuned_error: f64,
    pub baseline_errors: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub plan_hash: String,
    pub rows: Vec<FinetuneRow>,
    pub mean_single_task: f64,
    pub mean_zero_shot: f64,
    pub mean_finetuned: f64,
    pub from_cache: bool,
}

fn study_error_of(results: &[StudyEvalResult]) -> f64 {
    results[0].study_error
}

/// Per unseen study: single-task LM from scratch, the pretrained checkpoint
/// zero-shot, the checkpoint finetuned on the study, and all four baselines.
pub fn run_finetune_experiment(
    plan: &ExperimentPlan,
    pretrained: &LMCheckpoint,
    unseen: &[Study],
) -> Result<FinetuneReport> {
    plan.validate()?;
    if unseen.is_empty() {
        return Err(Error::Data("no unseen studies supplied".into()));
    }
    let dir = plan.run_dir();
    let report_path = dir.join("finetune.json");
    if let Some(mut cached) = load_cached::<FinetuneReport>(&report_path) {
        cached.from_cache = true;
        return Ok(cached);
    }
    let mut rows = vec![];
    for study in unseen {
        let one = std::slice::from_ref(study);
        let single_cfg = TrainConfig::single_task(plan.seed);
        let (single_ckpt, _) =
            single_task_train(&plan.model_config, &pretrained.vocab, study, &single_cfg)?;
        let single = study_error_of(&evaluate_checkpoint(
            &single_ckpt,
            one,
            plan.eval_samples,
            AggregateMethod::Median,
            plan.seed,
        )?);
        let zero = study_error_of(&evaluate_checkpoint(
            pretrained,
            one,
            plan.eval_samples,
            AggregateMethod::Median,
            plan.seed,
        )?);
        let ft_cfg = TrainConfig::finetune(plan.seed);
        let (ft_ckpt, _) = finetune(pretrained, study, &ft_cfg)?;
        let fted = study_error_of(&evaluate_checkpoint(
            &ft_ckpt,
            one,
            plan.eval_samples,
            AggregateMethod::Median,
            plan.seed,
        )?);
        let mut baseline_errors = vec![];
        for kind in [BaselineKind::Mlp, BaselineKind::Gp, BaselineKind::Gbt, BaselineKind::Rf]
        {
            let preds = fit_predict_study(study, kind, plan.seed)?;
            let (y_min, y_max) = study.y_range().unwrap();
            let ys: Vec<f64> = preds
                .iter()
                .map(|p| study.trials[p.trial_index].y.feasible().unwrap())
                .collect();
            let ps: Vec<f64> = preds.iter().map(|p| p.aggregate).collect();
            baseline_errors.push((
                format!("{kind:?}").to_lowercase(),
                crate::eval::study_error(&ps, &ys, y_min, y_max)?,
            ));
        }
        rows.push(FinetuneRow {
            study_id: study.id.clone(),
            single_task_error: single,
            zero_shot_error: zero,
            finetuned_error: fted,
            baseline_errors,
        });
    }
    let n = rows.len() as f64;
    let report = FinetuneReport {
        plan_hash: plan.hash(),
        mean_single_task: rows.iter().map(|r| r.single_task_error).sum::<f64>() / n,
        mean_zero_shot: rows.iter().map(|r| r.zero_shot_error).sum::<f64>() / n,
        mean_finetuned: rows.iter().map(|r| r.finetuned_error).sum::<f64>() / n,
        rows,
        from_cache: false,
    };
    write_json_atomic(&report_path, &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// ablations

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub plan_hash: String,
    /// (scheme, regime, mean study error); regimes are "single_task" and
    /// "multi_task".
    pub tokenization: Vec<(TokenScheme, String, f64)>,
    /// (aggregation method, mean study error) at the largest sample level.
    pub aggregation: Vec<(AggregateMethod, f64)>,
    /// (sample count, mean study error) with median aggregation.
    pub samples: Vec<(usize, f64)>,
    pub from_cache: bool,
}

pub fn run_ablation_suite(plan: &ExperimentPlan) -> Result<AblationReport> {
    plan.validate()?;
    let dir = plan.run_dir();
    let report_path = dir.join("ablations.json");
    if let Some(mut cached) = load_cached::<AblationReport>(&report_path) {
        cached.from_cache = true;
        return Ok(cached);
    }
    let n = *plan.num_studies_levels.last().unwrap();
    let mut gen = TaskGenConfig::new(n, plan.seed);
    gen.trials_per_study = plan.trials_per_study;
    let dataset = generate_bbob_dataset(&gen)?;
    let mut eval_gen = TaskGenConfig::new(plan.eval_studies.max(1), plan.seed ^ 0x5ca1e);
    eval_gen.trials_per_study = plan.trials_per_study;
    let eval_set = generate_unseen_shift_tasks(&eval_gen, &dataset)?;

    // Tokenization: scheme x {single-task, multi-task}.
    let mut tokenization = vec![];
    for &scheme in &plan.schemes {
        let codec = FloatTokenization::with_scheme(scheme);
        // Multi-task regime.
        let (ckpt, _) = pretrain_on(plan, &dataset, codec)?;
        let multi = mean_study_error(&evaluate_checkpoint(
            &ckpt,
            &eval_set,
            plan.eval_samples,
            AggregateMethod::Median,
            plan.seed,
        )?)?;
        tokenization.push((scheme, "multi_task".to_string(), multi));
        // Single-task regime on the first evaluation study.
        let study = &eval_set[0];
        let vocab = crate::textio::build_vocabulary(
            std::slice::from_ref(study),
            plan.vocab_size,
            codec,
        )?;
        let single_cfg = TrainConfig::single_task(plan.seed);
        let (single_ckpt, _) =
            single_task_train(&plan.model_config, &vocab, study, &single_cfg)?;
        let single = study_error_of(&evaluate_checkpoint(
            &single_ckpt,
            std::slice::from_ref(study),
            plan.eval_samples,
            AggregateMethod::Median,
            plan.seed,
        )?);
        tokenization.push((scheme, "single_task".to_string(), single));
    }

    // Aggregation and sample-count sweeps share one default-codec model.
    let (ckpt, _) = pretrain_on(plan, &dataset, FloatTokenization::default())?;
    let mut aggregation = vec![];
    for method in
        [AggregateMethod::Median, AggregateMethod::Mean, AggregateMethod::MaxLikelihood]
    {
        let err = mean_study_error(&evaluate_checkpoint(
            &ckpt,
            &eval_set,
            plan.eval_samples,
            method,
            plan.seed,
        )?)?;
        aggregation.push((method, err));
    }
    let mut samples = vec![];
    for &k in &plan.samples_levels {
        let err = mean_study_error(&evaluate_checkpoint(
            &ckpt,
            &eval_set,
            k,
            AggregateMethod::Median,
            plan.seed,
        )?)?;
        samples.push((k, err));
    }

    let report = AblationReport {
        plan_hash: plan.hash(),
        tokenization,
        aggregation,
        samples,
        from_cache: false,
    };
    write_json_atomic(&report_path, &report)?;
    Ok(report)
}
