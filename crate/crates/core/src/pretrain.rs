//! Masked-LM + next-sentence-prediction examples, loss and training loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::encoder::{Pass, TokenBatch};
use crate::error::{Error, Result};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::rng::SeedRng;
use crate::tape::Var;
use crate::variants::EncoderModel;
use crate::vocab::{Vocab, CLS, MASK, PAD, RESERVED, SEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NspLabel {
    IsNext = 0,
    NotNext = 1,
}

/// What happened to a token selected for prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskAction {
    Mask,
    Random,
    Keep,
}

/// Selection rate and the replacement split of selected tokens. Whatever is
/// not `[MASK]` or random is kept unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskingConfig {
    pub mask_rate: f64,
    pub mask_fraction: f64,
    pub random_fraction: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            mask_rate: 0.15,
            mask_fraction: 0.8,
            random_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainExample {
    pub input_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    pub valid: Vec<bool>,
    pub mlm_positions: Vec<usize>,
    /// Original (pre-masking) ids at `mlm_positions`.
    pub mlm_labels: Vec<usize>,
    pub mlm_actions: Vec<MaskAction>,
    pub nsp_label: NspLabel,
}

impl PretrainExample {
    /// Positions eligible for masking: valid and not `[CLS]`/`[SEP]`.
    pub fn candidate_count(&self) -> usize {
        self.input_ids
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|&(i, (_, &v))| v && !self.is_structural(i))
            .count()
    }

    fn is_structural(&self, i: usize) -> bool {
        i == 0 || self.sep_positions().contains(&i)
    }

    pub fn sep_positions(&self) -> [usize; 2] {
        let used = self.valid.iter().filter(|&&v| v).count();
        let first = self.segment_ids.iter().position(|&s| s == 1).map_or(used - 1, |p| p - 1);
        [first, used - 1]
    }
}

/// Draws sentence pairs from a document corpus and masks them.
#[derive(Debug, Clone)]
pub struct ExampleGenerator {
    documents: Vec<Vec<Vec<usize>>>,
    /// `(doc, sentence)` pairs that have a following sentence.
    anchors: Vec<(usize, usize)>,
    vocab_size: usize,
    seq_len: usize,
    masking: MaskingConfig,
    skipped: usize,
}

const MAX_CONSECUTIVE_SKIPS: usize = 10_000;

impl ExampleGenerator {
    /// `documents` is a list of documents, each an ordered list of sentences.
    pub fn new<D, S>(documents: D, vocab: &Vocab, seq_len: usize, masking: MaskingConfig) -> Result<Self>
    where
        D: IntoIterator,
        D::Item: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if seq_len < 8 {
            return Err(Error::Config(format!("sequence length {seq_len} below the minimum of 8")));
        }
        if !(0.0..=1.0).contains(&masking.mask_rate) || masking.mask_fraction + masking.random_fraction > 1.0 {
            return Err(Error::Config(format!("invalid masking configuration {masking:?}")));
        }
        let documents: Vec<Vec<Vec<usize>>> = documents
            .into_iter()
            .map(|d| d.into_iter().map(|s| vocab.tokenize(s.as_ref())).collect::<Vec<_>>())
            .filter(|d: &Vec<Vec<usize>>| !d.is_empty())
            .collect();
        let anchors: Vec<(usize, usize)> = documents
            .iter()
            .enumerate()
            .flat_map(|(d, doc)| (0..doc.len().saturating_sub(1)).map(move |i| (d, i)))
            .collect();
        if anchors.is_empty() {
            return Err(Error::Data("corpus has no document with two consecutive sentences".into()));
        }
        Ok(Self {
            documents,
            anchors,
            vocab_size: vocab.len(),
            seq_len,
            masking,
            skipped: 0,
        })
    }

    /// Number of distinct true-next pairs available.
    pub fn pair_count(&self) -> usize {
        self.anchors.len()
    }

    /// Pairs rejected so far because a sentence was empty or too long.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    fn random_sentence(&self, avoid_doc: usize, rng: &mut SeedRng) -> &[usize] {
        let mut doc = rng.below(self.documents.len());
        for _ in 0..16 {
            if doc != avoid_doc || self.documents.len() == 1 {
                break;
            }
            doc = rng.below(self.documents.len());
        }
        let d = &self.documents[doc];
        &d[rng.below(d.len())]
    }

    pub fn next_example(&mut self, rng: &mut SeedRng) -> Result<PretrainExample> {
        let budget = self.seq_len - 3;
        for _ in 0..MAX_CONSECUTIVE_SKIPS {
            let (d, i) = self.anchors[rng.below(self.anchors.len())];
            let label = if rng.bernoulli(0.5) { NspLabel::IsNext } else { NspLabel::NotNext };
            let first = &self.documents[d][i];
            let second = match label {
                NspLabel::IsNext => &self.documents[d][i + 1],
                NspLabel::NotNext => self.random_sentence(d, rng),
            };
            if first.is_empty() || second.is_empty() || first.len() > budget || second.len() > budget {
                self.skipped += 1;
                continue;
            }
            let (mut a, mut b) = (first.len(), second.len());
            while a + b > budget {
                if a >= b {
                    a -= 1;
                } else {
                    b -= 1;
                }
            }
            let (first, second) = (first[..a].to_vec(), second[..b].to_vec());
            return Ok(self.assemble(&first, &second, label, rng));
        }
        Err(Error::Data(format!(
            "{MAX_CONSECUTIVE_SKIPS} consecutive sentence pairs rejected; sentences must fit in {budget} tokens"
        )))
    }

    fn assemble(&self, first: &[usize], second: &[usize], nsp_label: NspLabel, rng: &mut SeedRng) -> PretrainExample {
        let l = self.seq_len;
        let mut ids = Vec::with_capacity(l);
        ids.push(CLS);
        ids.extend_from_slice(first);
        ids.push(SEP);
        let seg_a = ids.len();
        ids.extend_from_slice(second);
        ids.push(SEP);
        let used = ids.len();
        let mut segment_ids = vec![0; l];
        segment_ids[seg_a..used].iter_mut().for_each(|s| *s = 1);
        ids.resize(l, PAD);
        let valid = (0..l).map(|i| i < used).collect();

        let mut mlm_positions = Vec::new();
        let mut mlm_labels = Vec::new();
        let mut mlm_actions = Vec::new();
        let structural = |p: usize| p == 0 || p == seg_a - 1 || p == used - 1;
        for p in (0..used).filter(|&p| !structural(p)) {
            if !rng.bernoulli(self.masking.mask_rate) {
                continue;
            }
            mlm_positions.push(p);
            mlm_labels.push(ids[p]);
            let r = rng.uniform();
            let action = if r < self.masking.mask_fraction {
                ids[p] = MASK;
                MaskAction::Mask
            } else if r < self.masking.mask_fraction + self.masking.random_fraction {
                ids[p] = RESERVED.len() + rng.below(self.vocab_size - RESERVED.len());
                MaskAction::Random
            } else {
                MaskAction::Keep
            };
            mlm_actions.push(action);
        }
        PretrainExample {
            input_ids: ids,
            segment_ids,
            valid,
            mlm_positions,
            mlm_labels,
            mlm_actions,
            nsp_label,
        }
    }
}

/// Examples stacked into one `[B, L]` block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainBatch {
    pub tokens: TokenBatch,
    /// `(row, position)` of every masked token, position within the row.
    pub mlm_rows: Vec<(usize, usize)>,
    pub mlm_labels: Vec<usize>,
    pub nsp_labels: Vec<usize>,
}

impl PretrainBatch {
    pub fn from_examples(examples: &[PretrainExample]) -> Result<Self> {
        let len = examples.first().ok_or_else(|| Error::Usage("empty pre-training batch".into()))?.input_ids.len();
        let mut ids = Vec::with_capacity(examples.len() * len);
        let mut segments = Vec::with_capacity(ids.capacity());
        let mut valid = Vec::with_capacity(ids.capacity());
        let mut mlm_rows = Vec::new();
        let mut mlm_labels = Vec::new();
        for (r, ex) in examples.iter().enumerate() {
            if ex.input_ids.len() != len {
                return Err(Error::dim("pretrain batch", &[len], &[ex.input_ids.len()]));
            }
            ids.extend_from_slice(&ex.input_ids);
            segments.extend_from_slice(&ex.segment_ids);
            valid.extend_from_slice(&ex.valid);
            mlm_rows.extend(ex.mlm_positions.iter().map(|&p| (r, p)));
            mlm_labels.extend_from_slice(&ex.mlm_labels);
        }
        Ok(Self {
            tokens: TokenBatch::new(examples.len(), len, ids, segments, valid)?,
            mlm_rows,
            mlm_labels,
            nsp_labels: examples.iter().map(|e| e.nsp_label as usize).collect(),
        })
    }
}

/// Loss terms of one pre-training forward pass.
#[derive(Debug, Clone, Copy)]
pub struct PretrainLoss {
    pub total: Var,
    /// `None` when the batch has no masked position; the term contributes 0.
    pub mlm: Option<Var>,
    pub nsp: Option<Var>,
    pub masked: usize,
}

impl PretrainLoss {
    pub fn mlm_vacuous(&self) -> bool {
        self.mlm.is_none()
    }
}

/// Mean masked-LM cross-entropy (output projection tied to the token table)
/// plus, when `with_nsp`, the NSP cross-entropy on the pooled output.
pub fn pretrain_loss(model: &EncoderModel, pass: &mut Pass, batch: &PretrainBatch, with_nsp: bool) -> Result<PretrainLoss> {
    pretrain_loss_with(model, &model.store, pass, batch, with_nsp)
}

pub fn pretrain_loss_with(
    model: &EncoderModel,
    store: &crate::params::ParamStore,
    pass: &mut Pass,
    batch: &PretrainBatch,
    with_nsp: bool,
) -> Result<PretrainLoss> {
    let out = model.forward_with(store, pass, &batch.tokens)?;
    let n = model.config.hidden;
    let (b, l) = (batch.tokens.batch, batch.tokens.len);
    let span = out.attention_len;
    let mlm = if batch.mlm_rows.is_empty() {
        None
    } else {
        if let Some(&(r, p)) = batch.mlm_rows.iter().find(|&&(r, p)| r >= b || p >= l) {
            return Err(Error::Data(format!("masked position ({r}, {p}) outside a {b}x{l} batch")));
        }
        let flat = pass.g.reshape(out.sequence, &[b * span, n])?;
        let rows: Vec<usize> = batch.mlm_rows.iter().map(|&(r, p)| r * span + out.token_offset + p).collect();
        let hidden = pass.g.gather(flat, &rows)?;
        let table = pass.g.param(store, model.embeddings.token_table);
        let table_t = pass.g.transpose(table)?;
        let logits = pass.g.matmul(hidden, table_t)?;
        let bias = pass.g.param(store, model.heads.mlm_bias);
        let logits = pass.g.add(logits, bias)?;
        Some(pass.g.cross_entropy(logits, &batch.mlm_labels)?)
    };
    let nsp = if with_nsp {
        let logits = model.heads.nsp.forward(pass, store, out.pooled)?;
        Some(pass.g.cross_entropy(logits, &batch.nsp_labels)?)
    } else {
        None
    };
    let total = match (mlm, nsp) {
        (Some(m), Some(s)) => pass.g.add(m, s)?,
        (Some(t), None) | (None, Some(t)) => t,
        (None, None) => pass.g.constant(crate::tensor::Tensor::scalar(0.0)),
    };
    Ok(PretrainLoss {
        total,
        mlm,
        nsp,
        masked: batch.mlm_rows.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub with_nsp: bool,
    /// Emit a checkpoint every this many steps (and after the last one).
    pub checkpoint_every: Option<usize>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 400,
            learning_rate: 1e-5,
            with_nsp: true,
            checkpoint_every: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub mlm: f64,
    pub nsp: f64,
    pub total: f64,
    pub masked: usize,
}

/// Receives per-step records and periodic checkpoints.
pub trait TrainingObserver {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _step: usize, _model: &EncoderModel, _optimizer: &AdamState) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct Silent;

impl TrainingObserver for Silent {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<StepRecord>,
    pub skipped_pairs: usize,
}

impl TrainingLog {
    /// Mean total loss over `records[range]`.
    pub fn mean_total(&self, range: core::ops::Range<usize>) -> f64 {
        let slice = &self.records[range];
        slice.iter().map(|r| r.total).sum::<f64>() / slice.len() as f64
    }
}

/// Runs `config.steps` Adam steps of masked-LM (+NSP) training.
pub fn pretrain_run(
    model: &mut EncoderModel,
    examples: &mut ExampleGenerator,
    config: &PretrainConfig,
    rng: &mut SeedRng,
    observer: &mut dyn TrainingObserver,
) -> Result<TrainingLog> {
    if config.steps == 0 {
        return Err(Error::Usage("pre-training needs at least one step".into()));
    }
    if config.batch_size == 0 || examples.pair_count() < config.batch_size {
        return Err(Error::Data(format!(
            "corpus provides {} sentence pairs, too few for a batch of {}",
            examples.pair_count(),
            config.batch_size
        )));
    }
    if examples.seq_len() > model.config.max_len {
        return Err(Error::Config(format!(
            "example length {} exceeds the model's {}",
            examples.seq_len(),
            model.config.max_len
        )));
    }
    let mut optimizer = AdamState::new(&model.store, AdamConfig::with_lr(config.learning_rate));
    let mut records = Vec::with_capacity(config.steps);
    // Separate streams keep the example sequence identical across variants
    // whose dropout consumes different amounts of randomness.
    let mut data_rng = rng.fork(0);
    let mut noise_rng = rng.fork(1);
    for step in 1..=config.steps {
        let batch: Vec<PretrainExample> = (0..config.batch_size)
            .map(|_| examples.next_example(&mut data_rng))
            .collect::<Result<_>>()?;
        let batch = PretrainBatch::from_examples(&batch)?;
        let mut pass = Pass::train(&mut noise_rng);
        let loss = pretrain_loss(model, &mut pass, &batch, config.with_nsp)?;
        let value = |v: Option<Var>| v.map_or(0.0, |v| pass.g.value(v).data()[0]);
        let record = StepRecord {
            step,
            mlm: value(loss.mlm),
            nsp: value(loss.nsp),
            total: value(Some(loss.total)),
            masked: loss.masked,
        };
        if !record.total.is_finite() {
            return Err(Error::Data(format!("non-finite loss at step {step}")));
        }
        let grads = pass.g.backward(loss.total)?.for_store(&model.store);
        adam_step(&mut model.store, &grads, &mut optimizer)?;
        observer.on_step(&record)?;
        records.push(record);
        if let Some(every) = config.checkpoint_every {
            if every > 0 && (step % every == 0 || step == config.steps) {
                observer.on_checkpoint(step, model, &optimizer)?;
            }
        }
    }
    Ok(TrainingLog {
        records,
        skipped_pairs: examples.skipped(),
    })
}
