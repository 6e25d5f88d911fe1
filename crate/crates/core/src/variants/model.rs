use alloc::format;
use alloc::vec::Vec;

use super::{VariantConfig, VariantKind};
use crate::encoder::{AttentionTrace, ConvFrontEnd, EmbeddingStack, Linear, LstmBlock, Pass, TokenBatch, TransformerLayer};
use crate::error::{Error, Result};
use crate::params::{Init, ParamId, ParamStore, StoreTag, WEIGHT_STD};
use crate::rng::SeedRng;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Variant-specific stage between the embeddings and the first layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrontEnd {
    None,
    /// Conv features concatenated before the embeddings along the sequence.
    Conv(ConvFrontEnd),
    /// `[2N, N]` projection of adjacent-pair features, concatenated before
    /// the embeddings along the sequence.
    Ngram(ParamId),
    /// LSTM output added to the embeddings.
    Lstm(LstmBlock),
}

/// Output heads used during pre-training. The masked-LM projection is tied to
/// the token embedding table; only its bias is separate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PretrainHeads {
    pub mlm_bias: ParamId,
    pub nsp: Linear,
}

/// Parameters plus forward topology of one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub config: VariantConfig,
    pub store: ParamStore,
    pub embeddings: EmbeddingStack,
    pub front: FrontEnd,
    pub layers: Vec<TransformerLayer>,
    /// LSTM blocks between consecutive layers (RNN-IN only).
    pub gaps: Vec<LstmBlock>,
    /// Fan-in projections for layers 1.. (Dense only); entry `t-1` is `[tN, N]`.
    pub dense: Vec<ParamId>,
    pub pooler: Linear,
    pub heads: PretrainHeads,
}

/// Result of one encoder forward pass.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// `[B, L', N]`
    pub sequence: Var,
    /// `[B, N]`, tanh-projected `[CLS]` row.
    pub pooled: Var,
    /// Index in the attended sequence where the token rows begin (0 or `L`).
    pub token_offset: usize,
    pub attention_len: usize,
    /// `B * L'` validity flags used by attention.
    pub valid: Vec<bool>,
    /// One attention trace per transformer layer.
    pub traces: Vec<AttentionTrace>,
}

/// Assembles the variant described by `config`.
pub fn build(config: &VariantConfig, rng: &mut SeedRng) -> Result<EncoderModel> {
    config.validate()?;
    let c = *config;
    let n = c.hidden;
    let mut store = ParamStore::new(StoreTag::Encoder);
    let rte = c.kind == VariantKind::Rte;
    let embeddings = EmbeddingStack::new(&mut store, "embeddings", c.vocab, c.max_len, n, !rte, c.dropout, rng);
    let front = match c.kind {
        VariantKind::TextCnn => FrontEnd::Conv(ConvFrontEnd::new(&mut store, "conv", n, rng)),
        VariantKind::Ngram => FrontEnd::Ngram(store.init("ngram.projection", &[2 * n, n], Init::TruncatedNormal(WEIGHT_STD), rng)),
        VariantKind::Rnn | VariantKind::RnnIn => FrontEnd::Lstm(LstmBlock::new(&mut store, "lstm.front", n, c.lstm_hidden, rng)),
        _ => FrontEnd::None,
    };
    let clip = rte.then_some(c.relative_clip);
    let mut layers = Vec::with_capacity(c.layers);
    let mut gaps = Vec::new();
    for t in 0..c.layers {
        layers.push(TransformerLayer::new(&mut store, &format!("layers.{t}"), n, c.heads, clip, c.dropout, rng)?);
        if c.kind == VariantKind::RnnIn && t + 1 < c.layers {
            gaps.push(LstmBlock::new(&mut store, &format!("lstm.gap.{t}"), n, c.lstm_hidden, rng));
        }
    }
    let dense = if c.kind == VariantKind::Dense {
        (1..c.layers)
            .map(|t| store.init(format!("dense.{t}.projection"), &[t * n, n], Init::TruncatedNormal(WEIGHT_STD), rng))
            .collect()
    } else {
        Vec::new()
    };
    let pooler = Linear::new(&mut store, "pooler", n, n, true, rng);
    let heads = PretrainHeads {
        mlm_bias: store.init("mlm.bias", &[c.vocab], Init::Zeros, rng),
        nsp: Linear::new(&mut store, "nsp", n, 2, true, rng),
    };
    Ok(EncoderModel {
        config: c,
        store,
        embeddings,
        front,
        layers,
        gaps,
        dense,
        pooler,
        heads,
    })
}

fn doubled_mask(batch: &TokenBatch) -> Vec<bool> {
    batch
        .valid
        .chunks(batch.len)
        .flat_map(|row| row.iter().chain(row.iter()).copied())
        .collect()
}

impl EncoderModel {
    pub fn kind(&self) -> VariantKind {
        self.config.kind
    }

    pub fn forward(&self, pass: &mut Pass, batch: &TokenBatch) -> Result<EncoderOutput> {
        self.forward_with(&self.store, pass, batch)
    }

    /// Forward pass reading parameter values from `store`, which must share
    /// this model's layout.
    pub fn forward_with(&self, store: &ParamStore, pass: &mut Pass, batch: &TokenBatch) -> Result<EncoderOutput> {
        let (b, l, n) = (batch.batch, batch.len, self.config.hidden);
        let e = self.embeddings.embed(pass, store, batch)?;
        let (input, valid, token_offset) = match self.front {
            FrontEnd::None => (e, batch.valid.clone(), 0),
            FrontEnd::Conv(conv) => {
                let c = conv.conv_extract(pass, store, e)?;
                (pass.g.concat(&[c, e], 1)?, doubled_mask(batch), l)
            }
            FrontEnd::Ngram(w) => {
                let pad = pass.g.constant(Tensor::zeros(&[b, 1, n]));
                let next = if l > 1 {
                    let tail = pass.g.slice(e, 1, 1, l - 1)?;
                    pass.g.concat(&[tail, pad], 1)?
                } else {
                    pad
                };
                let pairs = pass.g.concat(&[e, next], 2)?;
                let w = pass.g.param(store, w);
                let grams = pass.g.matmul(pairs, w)?;
                (pass.g.concat(&[grams, e], 1)?, doubled_mask(batch), l)
            }
            FrontEnd::Lstm(block) => {
                let r = block.forward(pass, store, e)?;
                let r = pass.dropout(r, self.config.dropout)?;
                (pass.g.add(e, r)?, batch.valid.clone(), 0)
            }
        };
        let attention_len = pass.g.shape(input)[1];
        let mut traces = Vec::with_capacity(self.layers.len());
        let sequence = if self.kind() == VariantKind::Dense {
            let mut outputs: Vec<Var> = Vec::with_capacity(self.layers.len());
            for (t, layer) in self.layers.iter().enumerate() {
                let x = if t == 0 {
                    input
                } else {
                    let fan_in = pass.g.concat(&outputs, 2)?;
                    let w = pass.g.param(store, self.dense[t - 1]);
                    pass.g.matmul(fan_in, w)?
                };
                let (h, trace) = layer.forward_traced(pass, store, x, &valid)?;
                traces.push(trace);
                outputs.push(h);
            }
            *outputs.last().expect("at least one layer")
        } else {
            let mut x = input;
            for (t, layer) in self.layers.iter().enumerate() {
                let (h, trace) = layer.forward_traced(pass, store, x, &valid)?;
                traces.push(trace);
                x = match self.gaps.get(t) {
                    Some(gap) => {
                        let r = gap.forward(pass, store, h)?;
                        let r = pass.dropout(r, self.config.dropout)?;
                        pass.g.add(h, r)?
                    }
                    None => h,
                };
            }
            x
        };
        let cls = pass.g.slice(sequence, 1, token_offset, 1)?;
        let cls = pass.g.reshape(cls, &[b, n])?;
        let pooled = self.pooler.forward(pass, store, cls)?;
        let pooled = pass.g.tanh(pooled);
        Ok(EncoderOutput {
            sequence,
            pooled,
            token_offset,
            attention_len,
            valid,
            traces,
        })
    }

    /// All LSTM blocks, front first.
    pub fn lstm_blocks(&self) -> Vec<LstmBlock> {
        let mut blocks = Vec::new();
        if let FrontEnd::Lstm(b) = self.front {
            blocks.push(b);
        }
        blocks.extend(self.gaps.iter().copied());
        blocks
    }

    /// Copies every tensor of `other` whose name and shape match one here.
    /// Returns how many tensors were copied.
    pub fn load_matching(&mut self, other: &ParamStore) -> usize {
        let mut copied = 0;
        for (name, tensor) in other.iter() {
            if let Some(id) = self.store.find(name) {
                if self.store.get(id).shape() == tensor.shape() {
                    *self.store.get_mut(id) = tensor.clone();
                    copied += 1;
                }
            }
        }
        copied
    }

    /// Replaces the whole parameter store, checking names and shapes in order.
    pub fn replace_params(&mut self, store: ParamStore) -> Result<()> {
        check_layout(&self.store, &store)?;
        self.store = store;
        Ok(())
    }
}

/// Verifies that `found` has exactly the tensor names and shapes of
/// `expected`, in order; the error names the first offending tensor.
pub fn check_layout(expected: &ParamStore, found: &ParamStore) -> Result<()> {
    let mut want = expected.iter();
    let mut got = found.iter();
    loop {
        match (want.next(), got.next()) {
            (None, None) => return Ok(()),
            (Some((wn, wt)), Some((gn, gt))) if wn == gn && wt.shape() == gt.shape() => continue,
            (Some((wn, wt)), Some((gn, gt))) => {
                return Err(Error::Data(format!(
                    "tensor `{gn}` {:?} does not match expected `{wn}` {:?}",
                    gt.shape(),
                    wt.shape()
                )))
            }
            (Some((wn, _)), None) => return Err(Error::Data(format!("tensor `{wn}` missing"))),
            (None, Some((gn, _))) => return Err(Error::Data(format!("tensor `{gn}` not expected by this configuration"))),
        }
    }
}
