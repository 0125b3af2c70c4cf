use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lm::checkpoint::{LMCheckpoint, Manifest};
use crate::lm::params::{Params, Scalar};
use crate::lm::transformer::{Batch, Model, TransformerConfig};
use crate::rng::derive_rng;
use crate::study::{Split, Study};
use crate::textio::{render_prompt, Vocabulary};

pub const DEFAULT_WARMUP_STEPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Pretrain,
    SingleTask,
    Finetune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    RsqrtDecay,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub base_lr: f64,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    /// Step budget (pretraining).
    pub max_steps: usize,
    /// Epoch cap (single-task and finetuning).
    pub max_epochs: usize,
    pub warmup_steps: usize,
    /// Validation cadence in steps (pretraining; epoch modes validate per
    /// epoch).
    pub eval_every: usize,
    /// Consecutive non-improving validations before stopping.
    pub early_stop_patience: usize,
    /// Cap on validation pairs scored per evaluation.
    pub max_val_pairs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn pretrain(seed: u64) -> Self {
        Self {
            mode: TrainMode::Pretrain,
            // 1e-2 suits relative-scale optimizers (Adafactor); with Adam's
            // unit-scale updates it plateaus well above the achievable loss.
            base_lr: 1e-3,
            schedule: LrSchedule::RsqrtDecay,
            batch_size: 64,
            max_steps: 3000,
            max_epochs: 0,
            warmup_steps: DEFAULT_WARMUP_STEPS,
            eval_every: 100,
            early_stop_patience: 5,
            max_val_pairs: 2048,
            seed,
        }
    }

    /// Constant learning rate; see the config surface for the 1e-3 default
    /// versus a literal 1e3 reading of the source description — both remain
    /// selectable, nothing is silently corrected at the type level.
    pub fn single_task(seed: u64) -> Self {
        Self {
            mode: TrainMode::SingleTask,
            base_lr: 1e-3,
            schedule: LrSchedule::Constant,
            batch_size: 64,
            max_steps: 0,
            max_epochs: 30,
            warmup_steps: 0,
            eval_every: 1,
            early_stop_patience: 3,
            max_val_pairs: 2048,
            seed,
        }
    }

    pub fn finetune(seed: u64) -> Self {
        Self {
            base_lr: 1e-5,
            mode: TrainMode::Finetune,
            ..Self::single_task(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.base_lr <= 0.0 || self.batch_size == 0 {
            return err("base_lr and batch_size must be positive");
        }
        match self.mode {
            TrainMode::Pretrain => {
                if self.schedule != LrSchedule::RsqrtDecay {
                    return err("pretraining requires the rsqrt-decay schedule");
                }
                if self.max_steps == 0 || self.eval_every == 0 {
                    return err("pretraining needs max_steps and eval_every");
                }
            }
            TrainMode::SingleTask => {
                if self.max_epochs == 0 {
                    return err("single-task training needs max_epochs");
                }
            }
            TrainMode::Finetune => {
                if self.schedule != LrSchedule::Constant {
                    return err("finetuning requires a constant learning rate");
                }
                if self.max_epochs == 0 {
                    return err("finetuning needs max_epochs");
                }
            }
        }
        Ok(())
    }

    /// base_lr · min(1, sqrt(warmup/step)); constant schedules ignore step.
    pub fn lr_at(&self, step: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.base_lr,
            LrSchedule::RsqrtDecay => {
                let step = step.max(1) as f64;
                let warmup = self.warmup_steps.max(1) as f64;
                self.base_lr * (warmup / step).sqrt().min(1.0)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// optimizer

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub m: Params<F>,
    pub v: Params<F>,
    pub t: usize,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &Params<F>) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }

    pub fn step(&mut self, params: &mut Params<F>, grads: &Params<F>, lr: f64) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let mut p = params.tensors_mut();
        let mut m = self.m.tensors_mut();
        let mut v = self.v.tensors_mut();
        let g = grads.tensors();
        for i in 0..p.len() {
            debug_assert_eq!(p[i].name, g[i].name);
            for j in 0..p[i].data.len() {
                let gj = g[i].data[j].as_f64();
                let mj = ADAM_BETA1 * m[i].data[j].as_f64() + (1.0 - ADAM_BETA1) * gj;
                let vj = ADAM_BETA2 * v[i].data[j].as_f64() + (1.0 - ADAM_BETA2) * gj * gj;
                m[i].data[j] = F::from_f64(mj);
                v[i].data[j] = F::from_f64(vj);
                let update = lr * (mj / bc1) / ((vj / bc2).sqrt() + ADAM_EPS);
                p[i].data[j] = F::from_f64(p[i].data[j].as_f64() - update);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// data preparation

/// Tokenized (prompt, target) pair.
pub type Pair = (Vec<u32>, Vec<u32>);

pub fn study_pairs(study: &Study, vocab: &Vocabulary, split: Split) -> Result<Vec<Pair>> {
    let mut out = vec![];
    for trial in study.trials_in(split) {
        let Some(y) = trial.y.feasible() else { continue };
        let prompt = render_prompt(&study.space, &trial.x, &study.metadata)?;
        out.push((vocab.encode_text(&prompt), vocab.encode_y(y)?));
    }
    Ok(out)
}

fn dataset_pairs(dataset: &[Study], vocab: &Vocabulary, split: Split) -> Result<Vec<Pair>> {
    let mut out = vec![];
    for study in dataset {
        out.extend(study_pairs(study, vocab, split)?);
    }
    Ok(out)
}

/// Short content hash identifying the training data in manifests.
pub fn hash_studies(dataset: &[Study]) -> String {
    let mut h = Sha256::new();
    for s in dataset {
        h.update(s.to_jsonl_line().unwrap_or_default().as_bytes());
        h.update([b'\n']);
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn batch_of(pairs: &[Pair], idx: &[usize], config: &TransformerConfig) -> Result<Batch> {
    let prompts: Vec<Vec<u32>> = idx.iter().map(|&i| pairs[i].0.clone()).collect();
    let targets: Vec<Vec<u32>> = idx.iter().map(|&i| pairs[i].1.clone()).collect();
    Batch::new(&prompts, &targets, config, crate::textio::PAD_ID)
}

fn validation_loss(model: &Model<f32>, pairs: &[Pair], config: &TrainConfig) -> Result<f64> {
    let n = pairs.len().min(config.max_val_pairs);
    if n == 0 {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in (0..n).collect::<Vec<_>>().chunks(config.batch_size) {
        let batch = batch_of(pairs, chunk, &model.config)?;
        total += model.loss(&batch)? * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count as f64)
}

/// Loss trajectory of one run; steps are global optimizer steps.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_losses: Vec<(usize, f64)>,
    pub val_losses: Vec<(usize, f64)>,
    pub best_val_loss: f64,
    pub best_step: usize,
    pub final_step: usize,
    pub early_stopped: bool,
    pub epochs_run: usize,
}

// ---------------------------------------------------------------------------
// entry points

/// Deterministically initialized checkpoint at step 0.
pub fn init_model(
    config: &TransformerConfig,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<LMCheckpoint> {
    if config.max_target_len < vocab.codec().seq_len() {
        return Err(Error::InvalidConfig(format!(
            "max_target_len {} < codec sequence length {}",
            config.max_target_len,
            vocab.codec().seq_len()
        )));
    }
    let model = Model::new(*config, vocab.size(), seed)?;
    let opt = AdamState::new(&model.params);
    let manifest = Manifest {
        config: *config,
        seed,
        dataset_hash: String::new(),
        optimizer: "adam".into(),
        schedule: LrSchedule::RsqrtDecay,
        base_lr: 0.0,
        mode: None,
        step: 0,
        best_val_loss: f64::NAN,
    };
    Ok(LMCheckpoint { model, vocab: vocab.clone(), opt, step: 0, manifest })
}

struct Loop<'a> {
    tc: &'a TrainConfig,
    model: Model<f32>,
    opt: AdamState<f32>,
    best: Option<(Params<f32>, f64, usize)>,
    bad_evals: usize,
    report: TrainReport,
    step: usize,
}

impl<'a> Loop<'a> {
    fn new(tc: &'a TrainConfig, model: Model<f32>, opt: AdamState<f32>, step: usize) -> Self {
        Self {
            tc,
            model,
            opt,
            best: None,
            bad_evals: 0,
            report: TrainReport { best_val_loss: f64::NAN, ..Default::default() },
            step,
        }
    }

    fn train_step(
        &mut self,
        batch: &Batch,
        drop_rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<f64> {
        self.step += 1;
        let rng = if self.model.config.dropout > 0.0 { Some(&mut *drop_rng) } else { None };
        let (loss, grads) = self.model.loss_and_grad(batch, rng)?;
        if !loss.is_finite() {
            return Err(Error::TrainingFailed(format!(
                "non-finite loss at step {}",
                self.step
            )));
        }
        self.opt.step(&mut self.model.params, &grads, self.tc.lr_at(self.step));
        self.report.train_losses.push((self.step, loss));
        Ok(loss)
    }

    /// Records a validation point; true means early stop.
    fn validate(&mut self, val_pairs: &[Pair]) -> Result<bool> {
        let val = validation_loss(&self.model, val_pairs, self.tc)?;
        if val.is_nan() {
            // No validation data: never stop early.
            return Ok(false);
        }
        self.report.val_losses.push((self.step, val));
        let improved = self.best.as_ref().map_or(true, |(_, b, _)| val < *b);
        if improved {
            self.best = Some((self.model.params.clone(), val, self.step));
            self.bad_evals = 0;
        } else {
            self.bad_evals += 1;
        }
        Ok(self.bad_evals >= self.tc.early_stop_patience)
    }

    fn finish(
        mut self,
        vocab: &Vocabulary,
        dataset_hash: String,
        early_stopped: bool,
    ) -> (LMCheckpoint, TrainReport) {
        if let Some((params, val, at)) = self.best {
            self.model.params = params;
            self.report.best_val_loss = val;
            self.report.best_step = at;
        }
        self.report.final_step = self.step;
        self.report.early_stopped = early_stopped;
        let manifest = Manifest {
            config: self.model.config,
            seed: self.tc.seed,
            dataset_hash,
            optimizer: "adam".into(),
            schedule: self.tc.schedule,
            base_lr: self.tc.base_lr,
            mode: Some(self.tc.mode),
            step: self.step,
            best_val_loss: self.report.best_val_loss,
        };
        (
            LMCheckpoint {
                model: self.model,
                vocab: vocab.clone(),
                opt: self.opt,
                step: self.step,
                manifest,
            },
            self.report,
        )
    }
}

/// Multi-task pretraining: uniform (study, trial) pair sampling over all
/// TRAIN trials, rsqrt-decay Adam, periodic validation with early stopping.
/// Returns the best-validation checkpoint.
pub fn pretrain(
    start: &LMCheckpoint,
    dataset: &[Study],
    tc: &TrainConfig,
) -> Result<(LMCheckpoint, TrainReport)> {
    tc.validate()?;
    if tc.mode != TrainMode::Pretrain {
        return Err(Error::InvalidConfig("pretrain requires mode PRETRAIN".into()));
    }
    let train = dataset_pairs(dataset, &start.vocab, Split::Train)?;
    if train.is_empty() {
        return Err(Error::TrainingFailed("empty train set".into()));
    }
    let val = dataset_pairs(dataset, &start.vocab, Split::Val)?;
    let mut rng = derive_rng(tc.seed, &[0xba7c4]);
    let mut drop_rng = derive_rng(tc.seed, &[0xd20]);
    let mut lp = Loop::new(tc, start.model.clone(), start.opt.clone(), start.step);
    let mut early = false;
    use rand::Rng;
    for _ in 0..tc.max_steps {
        let idx: Vec<usize> =
            (0..tc.batch_size).map(|_| rng.gen_range(0..train.len())).collect();
        let batch = batch_of(&train, &idx, &lp.model.config)?;
        lp.train_step(&batch, &mut drop_rng)?;
        if lp.step % tc.eval_every == 0 && lp.validate(&val)? {
            early = true;
            break;
        }
    }
    if !early && lp.step % tc.eval_every != 0 {
        lp.validate(&val)?;
    }
    Ok(lp.finish(&start.vocab, hash_studies(dataset), early))
}

/// Shared epoch loop for the two per-study modes. One epoch sees the train
/// split once; train sizes at or below the batch size take exactly one step
/// per epoch. Validation runs at every epoch end.
fn epoch_train(
    model: Model<f32>,
    opt: AdamState<f32>,
    start_step: usize,
    vocab: &Vocabulary,
    study: &Study,
    tc: &TrainConfig,
) -> Result<(LMCheckpoint, TrainReport)> {
    let train = study_pairs(study, vocab, Split::Train)?;
    if train.is_empty() {
        return Err(Error::TrainingFailed(format!("study {} has no train trials", study.id)));
    }
    let val = study_pairs(study, vocab, Split::Val)?;
    let mut rng = derive_rng(tc.seed, &[0xe90c4]);
    let mut drop_rng = derive_rng(tc.seed, &[0xd20]);
    let mut lp = Loop::new(tc, model, opt, start_step);
    let mut early = false;
    'epochs: for epoch in 0..tc.max_epochs {
        lp.report.epochs_run = epoch + 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(tc.batch_size) {
            let batch = batch_of(&train, chunk, &lp.model.config)?;
            lp.train_step(&batch, &mut drop_rng)?;
        }
        if lp.validate(&val)? {
            early = true;
            break 'epochs;
        }
    }
    Ok(lp.finish(vocab, hash_studies(std::slice::from_ref(study)), early))
}

/// From-scratch training on a single study with a constant learning rate.
pub fn single_task_train(
    config: &TransformerConfig,
    vocab: &Vocabulary,
    study: &Study,
    tc: &TrainConfig,
) -> Result<(LMCheckpoint, TrainReport)> {
    tc.validate()?;
    if tc.mode != TrainMode::SingleTask {
        return Err(Error::InvalidConfig("single_task_train requires mode SINGLE_TASK".into()));
    }
    let start = init_model(config, vocab, tc.seed)?;
    epoch_train(start.model, start.opt, 0, vocab, study, tc)
}

/// Online finetuning: resumes both weights and optimizer moments from the
/// checkpoint.
pub fn finetune(
    ckpt: &LMCheckpoint,
    study: &Study,
    tc: &TrainConfig,
) -> Result<(LMCheckpoint, TrainReport)> {
    tc.validate()?;
    if tc.mode != TrainMode::Finetune {
        return Err(Error::InvalidConfig("finetune requires mode FINETUNE".into()));
    }
    // A checkpoint can only finetune data its vocabulary can serialize.
    for trial in &study.trials {
        if let Some(y) = trial.y.feasible() {
            ckpt.vocab
                .encode_y(y)
                .map_err(|e| Error::Vocabulary(format!("vocabulary mismatch: {e}")))?;
        }
    }
    epoch_train(ckpt.model.clone(), ckpt.opt.clone(), ckpt.step, &ckpt.vocab, study, tc)
}
