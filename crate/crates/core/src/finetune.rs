//! Sentence classification head, fine-tuning loop and accuracy.

use alloc::format;
use alloc::vec::Vec;

use crate::encoder::{Linear, Pass, TokenBatch};
use crate::error::{Error, Result};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::params::{ParamStore, StoreTag};
use crate::rng::SeedRng;
use crate::tape::Var;
use crate::tensor::Tensor;
use crate::variants::EncoderModel;
use crate::vocab::Vocab;

/// `N × C` projection of the pooled output, kept in its own store.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub store: ParamStore,
    pub linear: Linear,
    pub classes: usize,
}

impl ClassifierHead {
    pub fn new(hidden: usize, classes: usize, rng: &mut SeedRng) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!("a classifier needs at least 2 classes, got {classes}")));
        }
        let mut store = ParamStore::new(StoreTag::Head);
        let linear = Linear::new(&mut store, "classifier", hidden, classes, true, rng);
        Ok(Self { store, linear, classes })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub ids: Vec<usize>,
    pub valid: Vec<bool>,
    pub label: usize,
}

/// Encoded single-sentence classification data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSet {
    pub seq_len: usize,
    pub classes: usize,
    pub examples: Vec<LabeledExample>,
}

/// A `[B, L]` block of examples plus labels; segment ids are all zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinetuneBatch {
    pub tokens: TokenBatch,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn encode<S: AsRef<str>>(vocab: &Vocab, items: &[(S, usize)], seq_len: usize, classes: usize) -> Result<Self> {
        let examples = items
            .iter()
            .map(|(text, label)| {
                if *label >= classes {
                    return Err(Error::Config(format!("label {label} outside {classes} classes")));
                }
                let e = vocab.encode(text.as_ref(), seq_len)?;
                Ok(LabeledExample {
                    ids: e.ids,
                    valid: e.valid,
                    label: *label,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            seq_len,
            classes,
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<FinetuneBatch> {
        let l = self.seq_len;
        let mut ids = Vec::with_capacity(indices.len() * l);
        let mut valid = Vec::with_capacity(indices.len() * l);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let ex = &self.examples[i];
            ids.extend_from_slice(&ex.ids);
            valid.extend_from_slice(&ex.valid);
            labels.push(ex.label);
        }
        let n = ids.len();
        Ok(FinetuneBatch {
            tokens: TokenBatch::new(indices.len(), l, ids, alloc::vec![0; n], valid)?,
            labels,
        })
    }
}

/// Logits `pooled · W + b`, shape `[B, C]`; no softmax.
pub fn classify(model: &EncoderModel, head: &ClassifierHead, pass: &mut Pass, tokens: &TokenBatch) -> Result<Var> {
    classify_with(model, &model.store, head, &head.store, pass, tokens)
}

pub fn classify_with(
    model: &EncoderModel,
    store: &ParamStore,
    head: &ClassifierHead,
    head_store: &ParamStore,
    pass: &mut Pass,
    tokens: &TokenBatch,
) -> Result<Var> {
    let out = model.forward_with(store, pass, tokens)?;
    head.linear.forward(pass, head_store, out.pooled)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows of `logits` whose argmax equals the label.
pub fn accuracy_from_logits(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() || labels.is_empty() {
        return Err(Error::dim("accuracy", shape, &[labels.len()]));
    }
    let correct = logits
        .data()
        .chunks(shape[1])
        .zip(labels)
        .filter(|(row, &label)| argmax(row) == label)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

const EVAL_CHUNK: usize = 64;

/// Argmax accuracy over `set`, evaluation mode.
pub fn evaluate(model: &EncoderModel, head: &ClassifierHead, set: &LabeledSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    let order: Vec<usize> = (0..set.len()).collect();
    let mut correct = 0usize;
    for chunk in order.chunks(EVAL_CHUNK) {
        let batch = set.batch(chunk)?;
        let mut pass = Pass::eval();
        let logits = classify(model, head, &mut pass, &batch.tokens)?;
        let value = pass.g.value(logits);
        correct += value
            .data()
            .chunks(head.classes)
            .zip(&batch.labels)
            .filter(|(row, &label)| argmax(row) == label)
            .count();
    }
    Ok(correct as f64 / set.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 100,
            learning_rate: 1e-5,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
    /// This epoch set a new best dev accuracy.
    pub best: bool,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub log: Vec<EpochRecord>,
    pub steps: usize,
    /// Parameters from the epoch with the best dev accuracy.
    pub best_model: EncoderModel,
    pub best_head: ClassifierHead,
}

/// Cross-entropy fine-tuning of encoder and head with a flat learning rate.
pub fn finetune_run(
    model: &mut EncoderModel,
    head: &mut ClassifierHead,
    train: &LabeledSet,
    dev: &LabeledSet,
    config: &FinetuneConfig,
    rng: &mut SeedRng,
) -> Result<FinetuneOutcome> {
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if dev.is_empty() {
        return Err(Error::Config("empty dev set".into()));
    }
    if train.classes != head.classes || dev.classes != head.classes {
        return Err(Error::Config(format!(
            "head has {} classes, data has {}/{}",
            head.classes, train.classes, dev.classes
        )));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Config("batch size and epochs must be positive".into()));
    }
    let adam = AdamConfig::with_lr(config.learning_rate);
    let mut encoder_opt = AdamState::new(&model.store, adam);
    let mut head_opt = AdamState::new(&head.store, adam);
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, EncoderModel, ClassifierHead)> = None;
    let mut steps = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut data_rng = rng.fork(0);
    let mut noise_rng = rng.fork(1);
    'epochs: for epoch in 1..=config.epochs {
        data_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        let mut exhausted = false;
        for chunk in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|m| steps >= m) {
                exhausted = true;
                break;
            }
            let batch = train.batch(chunk)?;
            let mut pass = Pass::train(&mut noise_rng);
            let logits = classify(model, head, &mut pass, &batch.tokens)?;
            let loss = pass.g.cross_entropy(logits, &batch.labels)?;
            loss_sum += pass.g.value(loss).data()[0];
            batches += 1;
            let grads = pass.g.backward(loss)?;
            let encoder_grads = grads.for_store(&model.store);
            let head_grads = grads.for_store(&head.store);
            adam_step(&mut model.store, &encoder_grads, &mut encoder_opt)?;
            adam_step(&mut head.store, &head_grads, &mut head_opt)?;
            steps += 1;
        }
        if batches > 0 {
            let dev_accuracy = evaluate(model, head, dev)?;
            let improved = best.as_ref().is_none_or(|(acc, _, _)| dev_accuracy > *acc);
            if improved {
                best = Some((dev_accuracy, model.clone(), head.clone()));
            }
            log.push(EpochRecord {
                epoch,
                train_loss: loss_sum / batches as f64,
                dev_accuracy,
                best: improved,
            });
        }
        if exhausted || config.max_steps.is_some_and(|m| steps >= m) {
            break 'epochs;
        }
    }
    let (_, best_model, best_head) = best.ok_or_else(|| Error::Config("max_steps of zero leaves nothing to train".into()))?;
    Ok(FinetuneOutcome {
        log,
        steps,
        best_model,
        best_head,
    })
}
