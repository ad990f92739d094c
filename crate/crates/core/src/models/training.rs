use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mix_seed, CaptionGenerator, GeneratorExample, ModelError, ModelKind, TemplateSelector, Variant};
use crate::corpus::{CorpusSplit, MemeSample};
use crate::neural::{
    adam_step, clip_global_norm, log_softmax, lr_at, Graph, LrSchedule, ModelConfig, NodeId, OptimState, ParamStore,
    Tensor,
};
use crate::text::{TagLexicon, Vocabulary, MAX_CAPTION_LEN};

const CLIP_NORM: f64 = 1.0;

/// Training configuration file; every key is optional and defaults to the
/// desk-scale setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    #[serde(rename = "N")]
    pub layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    #[serde(rename = "h")]
    pub heads: usize,
    #[serde(rename = "P_drop")]
    pub dropout: f64,
    pub lr: f64,
    pub eta_min: f64,
    /// First restart period, in optimizer steps.
    #[serde(rename = "T_0")]
    pub t_0: u64,
    #[serde(rename = "T_mult")]
    pub t_mult: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub np_plus_v: bool,
    pub min_freq: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Smt2mc,
            layers: 2,
            d_model: 128,
            d_ff: 512,
            heads: 4,
            dropout: 0.1,
            lr: 1e-3,
            eta_min: 1e-5,
            t_0: 100,
            t_mult: 2,
            batch_size: 32,
            epochs: 30,
            seed: 42,
            np_plus_v: true,
            min_freq: 1,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            d_model: self.d_model,
            d_ff: self.d_ff,
            heads: self.heads,
            dropout: self.dropout,
            vocab_size,
            max_len: MAX_CAPTION_LEN,
        }
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            eta_max: self.lr,
            eta_min: self.eta_min,
            t_0: self.t_0,
            t_mult: self.t_mult,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.batch_size == 0 || self.epochs == 0 || self.min_freq == 0 {
            return bad("batch_size, epochs and min_freq must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        self.schedule()
            .validate()
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        self.model_config(1)
            .validate()
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean of the batch losses seen during the epoch (dropout on).
    pub train_loss: f64,
    /// Selector: template accuracy. Generator: teacher-forced token accuracy.
    /// Measured with dropout off after the epoch.
    pub train_accuracy: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
    /// Selector only.
    pub validation_macro_f1: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub kind: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    pub epochs: Vec<EpochReport>,
    /// Epoch whose weights were kept (lowest validation loss, or the last
    /// epoch without a validation set).
    pub best_epoch: usize,
    pub steps: u64,
    pub wall_clock_secs: f64,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub fn final_train_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.train_loss)
    }
}

/// Mean F1 over classes that occur in `gold` or `predicted`.
pub fn macro_f1(gold: &[usize], predicted: &[usize], num_classes: usize) -> f64 {
    assert_eq!(gold.len(), predicted.len());
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fne = vec![0usize; num_classes];
    for (&g, &p) in gold.iter().zip(predicted) {
        if g == p {
            tp[g] += 1;
        } else {
            fp[p] += 1;
            fne[g] += 1;
        }
    }
    let mut sum = 0.0;
    let mut classes = 0;
    for c in 0..num_classes {
        if tp[c] + fp[c] + fne[c] == 0 {
            continue;
        }
        classes += 1;
        sum += 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fne[c]) as f64;
    }
    if classes == 0 {
        0.0
    } else {
        sum / classes as f64
    }
}

/// Runs one optimizer step on the loss built by `loss_fn`.
fn step<F>(
    params: &mut ParamStore,
    opt: &mut OptimState,
    dropout: f64,
    dropout_seed: u64,
    lr: f64,
    loss_fn: F,
) -> Result<f64, ModelError>
where
    F: FnOnce(&mut Graph) -> Option<NodeId>,
{
    let (loss, mut grads) = {
        let mut g = Graph::new(params).with_dropout(dropout, dropout_seed);
        let Some(loss) = loss_fn(&mut g) else {
            return Ok(0.0);
        };
        let value = g.value(loss).data()[0];
        let back = g.backward(loss);
        let mut grads: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        for (pid, grad) in g.param_grads(&back) {
            grads[pid.index()] = grad;
        }
        (value, grads)
    };
    if !loss.is_finite() {
        return Err(crate::neural::NeuralError::NonFinite.into());
    }
    clip_global_norm(&mut grads, CLIP_NORM);
    adam_step(params, &grads, opt, lr)?;
    Ok(loss)
}

struct Loop {
    started: Instant,
    schedule: LrSchedule,
    opt: OptimState,
    steps: u64,
    best: Option<(f64, usize, ParamStore)>,
    epochs: Vec<EpochReport>,
}

impl Loop {
    fn new(config: &TrainConfig, params: &ParamStore) -> Self {
        Self {
            started: Instant::now(),
            schedule: config.schedule(),
            opt: OptimState::new(params),
            steps: 0,
            best: None,
            epochs: Vec::new(),
        }
    }

    fn epoch_order(&self, n: usize, seed: u64, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch as u64)));
        order
    }

    /// Records the epoch and snapshots weights when validation improves.
    fn finish_epoch(&mut self, report: EpochReport, params: &ParamStore) {
        if let Some(loss) = report.validation_loss {
            if self.best.as_ref().is_none_or(|(best, _, _)| loss < *best) {
                self.best = Some((loss, report.epoch, params.clone()));
            }
        }
        self.epochs.push(report);
    }

    fn finish(self, kind: ModelKind, variant: Option<Variant>, params: &mut ParamStore) -> TrainReport {
        let best_epoch = match self.best {
            Some((_, epoch, best)) => {
                *params = best;
                epoch
            }
            None => self.epochs.len() - 1,
        };
        TrainReport {
            kind,
            variant,
            epochs: self.epochs,
            best_epoch,
            steps: self.steps,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            checkpoint: None,
        }
    }
}

/// `(mean loss, accuracy, predictions)` over samples, dropout off.
fn evaluate_selector(model: &TemplateSelector, samples: &[MemeSample]) -> (f64, f64, Vec<usize>) {
    let mut loss = 0.0;
    let mut correct = 0;
    let mut predictions = Vec::with_capacity(samples.len());
    for s in samples {
        let ids = model.input_ids(&s.caption);
        let mut g = Graph::new(&model.params);
        let logits = model.logits(&mut g, &ids);
        let lp = log_softmax(g.value(logits).data());
        loss -= lp[s.template_id.0];
        let pred = argmax(&lp);
        if pred == s.template_id.0 {
            correct += 1;
        }
        predictions.push(pred);
    }
    let n = samples.len().max(1) as f64;
    (loss / n, correct as f64 / n, predictions)
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

fn check_labels(samples: &[MemeSample], num_templates: usize) -> Result<(), ModelError> {
    match samples.iter().find(|s| s.template_id.0 >= num_templates) {
        Some(s) => Err(ModelError::UnknownTemplate {
            id: s.template_id.0,
            count: num_templates,
        }),
        None => Ok(()),
    }
}

/// Trains the template classifier on caption → template pairs, keeping the
/// weights with the lowest validation loss.
pub fn train_selector(
    split: &CorpusSplit,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<(TemplateSelector, TrainReport), ModelError> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(ModelError::EmptyTrainSet);
    }
    check_labels(&split.train, vocab.num_templates())?;
    check_labels(&split.validation, vocab.num_templates())?;
    let mut model = TemplateSelector::new(config.model_config(vocab.len()), vocab.clone(), config.seed)?;
    let inputs: Vec<_> = split.train.iter().map(|s| model.input_ids(&s.caption)).collect();
    let mut lp = Loop::new(config, &model.params);

    for epoch in 0..config.epochs {
        let order = lp.epoch_order(inputs.len(), config.seed, epoch);
        let mut total = 0.0;
        let mut batches = 0;
        let mut lr = 0.0;
        for batch in order.chunks(config.batch_size) {
            lr = lr_at(lp.steps, &lp.schedule);
            // layers only hold parameter ids, so the store can move out for the update
            let mut params = std::mem::take(&mut model.params);
            let result = step(
                &mut params,
                &mut lp.opt,
                config.dropout,
                mix_seed(config.seed, !lp.steps),
                lr,
                |g| {
                    let rows: Vec<NodeId> = batch.iter().map(|&i| model.logits(g, &inputs[i])).collect();
                    let logits = g.concat_rows(&rows);
                    let targets: Vec<Option<usize>> =
                        batch.iter().map(|&i| Some(split.train[i].template_id.0)).collect();
                    g.cross_entropy(logits, &targets)
                },
            );
            model.params = params;
            total += result?;
            batches += 1;
            lp.steps += 1;
        }
        let (_, train_accuracy, _) = evaluate_selector(&model, &split.train);
        let (validation_loss, validation_accuracy, validation_macro_f1) = if split.validation.is_empty() {
            (None, None, None)
        } else {
            let (l, a, pred) = evaluate_selector(&model, &split.validation);
            let gold: Vec<usize> = split.validation.iter().map(|s| s.template_id.0).collect();
            (Some(l), Some(a), Some(macro_f1(&gold, &pred, model.num_templates())))
        };
        lp.finish_epoch(
            EpochReport {
                epoch,
                train_loss: total / batches as f64,
                train_accuracy,
                validation_loss,
                validation_accuracy,
                validation_macro_f1,
                learning_rate: lr,
            },
            &model.params,
        );
    }
    let report = lp.finish(ModelKind::Selector, None, &mut model.params);
    Ok((model, report))
}

/// `(mean token loss, token accuracy)`, teacher-forced with dropout off.
fn evaluate_generator(model: &CaptionGenerator, examples: &[GeneratorExample]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut tokens = 0usize;
    for ex in examples {
        let mut g = Graph::new(&model.params);
        let logits = model.teacher_forced(&mut g, ex);
        let value = g.value(logits);
        for (r, &t) in ex.targets.iter().enumerate() {
            let lp = log_softmax(value.row(r));
            loss -= lp[t as usize];
            if argmax(&lp) == t as usize {
                correct += 1;
            }
            tokens += 1;
        }
    }
    let n = tokens.max(1) as f64;
    (loss / n, correct as f64 / n)
}

/// Trains the caption generator with teacher forcing on
/// `(template ++ corrupted caption) -> caption`, keeping the weights with the
/// lowest validation loss.
pub fn train_generator(
    split: &CorpusSplit,
    vocab: &Vocabulary,
    tagger: &TagLexicon,
    config: &TrainConfig,
) -> Result<(CaptionGenerator, TrainReport), ModelError> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(ModelError::EmptyTrainSet);
    }
    let mut model = CaptionGenerator::new(
        config.variant,
        config.np_plus_v,
        config.model_config(vocab.len()),
        vocab.clone(),
        config.seed,
    )?;
    let train: Vec<GeneratorExample> = split
        .train
        .iter()
        .map(|s| model.example(s, tagger))
        .collect::<Result<_, _>>()?;
    let validation: Vec<GeneratorExample> = split
        .validation
        .iter()
        .map(|s| model.example(s, tagger))
        .collect::<Result<_, _>>()?;
    let mut lp = Loop::new(config, &model.params);

    for epoch in 0..config.epochs {
        let order = lp.epoch_order(train.len(), config.seed, epoch);
        let mut total = 0.0;
        let mut batches = 0;
        let mut lr = 0.0;
        for batch in order.chunks(config.batch_size) {
            lr = lr_at(lp.steps, &lp.schedule);
            let mut params = std::mem::take(&mut model.params);
            let result = step(
                &mut params,
                &mut lp.opt,
                config.dropout,
                mix_seed(config.seed, !lp.steps),
                lr,
                |g| {
                    let rows: Vec<NodeId> = batch.iter().map(|&i| model.teacher_forced(g, &train[i])).collect();
                    let logits = g.concat_rows(&rows);
                    let targets: Vec<Option<usize>> = batch
                        .iter()
                        .flat_map(|&i| train[i].targets.iter().map(|&t| Some(t as usize)))
                        .collect();
                    g.cross_entropy(logits, &targets)
                },
            );
            model.params = params;
            total += result?;
            batches += 1;
            lp.steps += 1;
        }
        let (_, train_accuracy) = evaluate_generator(&model, &train);
        let (validation_loss, validation_accuracy) = if validation.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate_generator(&model, &validation);
            (Some(l), Some(a))
        };
        lp.finish_epoch(
            EpochReport {
                epoch,
                train_loss: total / batches as f64,
                train_accuracy,
                validation_loss,
                validation_accuracy,
                validation_macro_f1: None,
                learning_rate: lr,
            },
            &model.params,
        );
    }
    let variant = model.variant();
    let report = lp.finish(ModelKind::Generator, Some(variant), &mut model.params);
    Ok((model, report))
}
