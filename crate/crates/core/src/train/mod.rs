//! Client-side training: the local fine-tuning loop and the post-fusion
//! finetuning stage.
//!
//! A run holds out a stratified evaluation split, iterates shuffled
//! mini-batches with Adam under a linear warmup schedule, evaluates every
//! `eval_every` batches, stops after `patience` evaluations without
//! improvement and returns the parameters with the lowest evaluation loss.

mod adam;
mod early_stop;
mod schedule;

pub use adam::AdamState;
pub use early_stop::{EarlyStopping, Observation};
pub use schedule::{lr_at_step, warmup_steps, LrDecay};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{label_counts, stratified_split, stratified_subsample, LabeledInstance};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::model::{ModelState, TokenSequence};
use crate::rng::{derive_seed, rng_for};

/// Learning rate for BERT-scale models.
pub const PUBLISHED_LEARNING_RATE: f64 = 4e-5;
/// Default for the tiny encoder.
pub const DESK_LEARNING_RATE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub epochs: usize,
    pub patience: usize,
    pub eval_split_fraction: f64,
    /// Batches between evaluations; `None` evaluates once per epoch.
    pub eval_every: Option<usize>,
    pub seed: u64,
    pub finetune_fraction: f64,
    pub lr_decay: LrDecay,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: DESK_LEARNING_RATE,
            warmup_fraction: 0.10,
            epochs: 3,
            patience: 3,
            eval_split_fraction: 0.20,
            eval_every: None,
            seed: 0,
            finetune_fraction: 0.20,
            lr_decay: LrDecay::Constant,
        }
    }
}

impl TrainingConfig {
    /// Defaults with the published learning rate.
    pub fn paper_faithful() -> Self {
        Self {
            learning_rate: PUBLISHED_LEARNING_RATE,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return bad("warmup_fraction must be in (0, 1)");
        }
        if !(self.eval_split_fraction > 0.0 && self.eval_split_fraction < 1.0) {
            return bad("eval_split_fraction must be in (0, 1)");
        }
        if !(self.finetune_fraction > 0.0 && self.finetune_fraction <= 1.0) {
            return bad("finetune_fraction must be in (0, 1]");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.eval_every == Some(0) {
            return bad("eval_every must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    CompletedEpochs,
    EarlyStopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub epoch: usize,
    /// Mean training loss over the batches since the previous evaluation.
    pub train_loss: f64,
    pub eval_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EvalRecord>,
    pub stop_reason: StopReason,
    pub best_eval_loss: Option<f64>,
    pub best_step: Option<usize>,
    pub total_steps: usize,
    pub steps_run: usize,
    pub train_rows: usize,
    pub eval_rows: usize,
    pub warnings: Vec<String>,
}

impl TrainLog {
    /// One JSON object per evaluation.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"));
        }
        out
    }
}

type Example = (TokenSequence, Label);

fn encode(model: &ModelState, rows: &[LabeledInstance]) -> Vec<Example> {
    rows.iter().map(|r| (model.tokenize(&r.text), r.label)).collect()
}

/// Fine-tunes `base` on `train_rows`. The result keeps `base`'s lineage.
pub fn train_local(
    base: &ModelState,
    train_rows: &[LabeledInstance],
    cfg: &TrainingConfig,
) -> Result<(ModelState, TrainLog)> {
    cfg.validate()?;
    if train_rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(name) = base.params().find_non_finite() {
        return Err(Error::NonFinite(name.to_string()));
    }
    let mut warnings = Vec::new();
    if label_counts(train_rows).contains(&0) {
        let msg = "training data contains a single class".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let split_seed = derive_seed(cfg.seed, "eval-split");
    let (eval_rows, fit_rows) = match stratified_split(train_rows, cfg.eval_split_fraction, split_seed) {
        Ok((eval, fit)) if !eval.is_empty() && !fit.is_empty() => (eval, fit),
        _ => {
            let msg = format!(
                "{} rows are too few for a held-out split; evaluating on the training rows",
                train_rows.len()
            );
            log::warn!("{msg}");
            warnings.push(msg);
            (train_rows.to_vec(), train_rows.to_vec())
        }
    };

    let steps_per_epoch = fit_rows.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut log = TrainLog {
        records: Vec::new(),
        stop_reason: StopReason::CompletedEpochs,
        best_eval_loss: None,
        best_step: None,
        total_steps,
        steps_run: 0,
        train_rows: fit_rows.len(),
        eval_rows: eval_rows.len(),
        warnings,
    };
    if total_steps == 0 {
        return Ok((base.clone(), log));
    }

    let fit = encode(base, &fit_rows);
    let eval = encode(base, &eval_rows);
    let eval_every = cfg.eval_every.unwrap_or(steps_per_epoch);

    let mut model = base.clone();
    let mut adam = AdamState::new(model.params());
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = None;
    let mut step = 0;
    let mut window_loss = 0.0;
    let mut window_batches = 0usize;

    'epochs: for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..fit.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed, &format!("batch-order/{epoch}")));
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let batch: Vec<Example> = chunk.iter().map(|&i| fit[i].clone()).collect();
            let lr = lr_at_step(step, total_steps, cfg.learning_rate, cfg.warmup_fraction, cfg.lr_decay);
            let (loss, grads) = model.loss_and_gradients(&batch)?;
            adam.update(model.params_mut(), &grads, lr)?;
            window_loss += loss;
            window_batches += 1;

            if step % eval_every != 0 && step != total_steps {
                continue;
            }
            let eval_loss = model.mean_loss(&eval)?;
            if !eval_loss.is_finite() {
                return Err(Error::NonFinite("evaluation loss".into()));
            }
            log.records.push(EvalRecord {
                step,
                epoch,
                train_loss: window_loss / window_batches as f64,
                eval_loss,
                lr,
            });
            window_loss = 0.0;
            window_batches = 0;
            match stopper.observe(eval_loss) {
                Observation::Improved => {
                    best_params = Some(model.params().clone());
                    log.best_eval_loss = Some(eval_loss);
                    log.best_step = Some(step);
                }
                Observation::NoImprovement { .. } => {}
                Observation::Stop => {
                    log.stop_reason = StopReason::EarlyStopped;
                    break 'epochs;
                }
            }
        }
    }
    log.steps_run = step;
    if let Some(best) = best_params {
        model = model.with_params(best)?;
    }
    Ok((model, log))
}

/// Rows used for post-fusion finetuning: a stratified `finetune_fraction`
/// sample of `train_rows`.
pub fn finetune_subsample(train_rows: &[LabeledInstance], cfg: &TrainingConfig) -> Result<Vec<LabeledInstance>> {
    stratified_subsample(
        train_rows,
        cfg.finetune_fraction,
        derive_seed(cfg.seed, "finetune-subsample"),
    )
}

/// Continues training a fused model on a subsample of one client's data,
/// with the same objective and schedule as [`train_local`] and a fresh
/// optimizer.
pub fn finetune_fused(
    fused: &ModelState,
    train_rows: &[LabeledInstance],
    cfg: &TrainingConfig,
) -> Result<(ModelState, TrainLog)> {
    cfg.validate()?;
    let subset = finetune_subsample(train_rows, cfg)?;
    train_local(fused, &subset, cfg)
}
