use alloc::format;
use alloc::vec::Vec;

use super::{join, LayerNormParams, Pass, TokenBatch};
use crate::error::{Error, Result};
use crate::params::{Init, ParamId, ParamStore, WEIGHT_STD};
use crate::rng::SeedRng;
use crate::tape::Var;

pub const SEGMENTS: usize = 2;

/// Token + (optional absolute position) + segment embeddings, layer-normed.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStack {
    pub token_table: ParamId,
    /// Absent for relative-position models.
    pub position_table: Option<ParamId>,
    pub segment_table: ParamId,
    pub norm: LayerNormParams,
    pub dropout: f64,
    pub vocab: usize,
    pub max_len: usize,
}

impl EmbeddingStack {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        vocab: usize,
        max_len: usize,
        hidden: usize,
        absolute_positions: bool,
        dropout: f64,
        rng: &mut SeedRng,
    ) -> Self {
        let std = Init::TruncatedNormal(WEIGHT_STD);
        let token_table = store.init(join(prefix, "token"), &[vocab, hidden], std, rng);
        let position_table = absolute_positions.then(|| store.init(join(prefix, "position"), &[max_len, hidden], std, rng));
        let segment_table = store.init(join(prefix, "segment"), &[SEGMENTS, hidden], std, rng);
        let norm = LayerNormParams::new(store, &join(prefix, "norm"), hidden, rng);
        Self {
            token_table,
            position_table,
            segment_table,
            norm,
            dropout,
            vocab,
            max_len,
        }
    }

    /// `[B, L]` ids → `[B, L, N]`.
    pub fn embed(&self, pass: &mut Pass, store: &ParamStore, batch: &TokenBatch) -> Result<Var> {
        let (b, l) = (batch.batch, batch.len);
        if l > self.max_len {
            return Err(Error::Config(format!("sequence length {l} exceeds maximum {}", self.max_len)));
        }
        for (k, (&id, &seg)) in batch.ids.iter().zip(&batch.segments).enumerate() {
            if id >= self.vocab {
                return Err(Error::Data(format!(
                    "token id {id} out of vocabulary ({}) at batch {} position {}",
                    self.vocab,
                    k / l,
                    k % l
                )));
            }
            if seg >= SEGMENTS {
                return Err(Error::Data(format!("segment id {seg} at batch {} position {}", k / l, k % l)));
            }
        }
        let hidden = store.get(self.token_table).shape()[1];
        let table = pass.g.param(store, self.token_table);
        let tokens = pass.g.gather(table, &batch.ids)?;
        let mut sum = pass.g.reshape(tokens, &[b, l, hidden])?;
        if let Some(pos) = self.position_table {
            let table = pass.g.param(store, pos);
            let rows: Vec<usize> = (0..l).collect();
            let positions = pass.g.gather(table, &rows)?;
            sum = pass.g.add(sum, positions)?;
        }
        let table = pass.g.param(store, self.segment_table);
        let segs = pass.g.gather(table, &batch.segments)?;
        let segs = pass.g.reshape(segs, &[b, l, hidden])?;
        sum = pass.g.add(sum, segs)?;
        let normed = self.norm.forward(pass, store, sum)?;
        pass.dropout(normed, self.dropout)
    }
}
