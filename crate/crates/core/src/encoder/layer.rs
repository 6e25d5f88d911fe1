use super::{join, AttentionParams, AttentionTrace, LayerNormParams, Linear, Pass};
use crate::error::Result;
use crate::params::ParamStore;
use crate::rng::SeedRng;
use crate::tape::Var;

/// Inner width of the feed-forward block relative to the model width.
pub const FFN_MULTIPLIER: usize = 4;

/// `N → 4N → N` with GELU in between.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, prefix: &str, hidden: usize, rng: &mut SeedRng) -> Self {
        let wide = FFN_MULTIPLIER * hidden;
        Self {
            inner: Linear::new(store, &join(prefix, "inner"), hidden, wide, true, rng),
            outer: Linear::new(store, &join(prefix, "outer"), wide, hidden, true, rng),
        }
    }

    pub fn forward(&self, pass: &mut Pass, store: &ParamStore, x: Var) -> Result<Var> {
        let y = self.inner.forward(pass, store, x)?;
        let y = pass.g.gelu(y);
        self.outer.forward(pass, store, y)
    }
}

/// Post-norm encoder layer:
/// `x → LN(x + drop(attn(x))) → LN(· + drop(ffn(·)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformerLayer {
    pub attention: AttentionParams,
    pub attention_norm: LayerNormParams,
    pub ffn: FeedForward,
    pub ffn_norm: LayerNormParams,
    pub dropout: f64,
}

impl TransformerLayer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        hidden: usize,
        heads: usize,
        relative_clip: Option<usize>,
        dropout: f64,
        rng: &mut SeedRng,
    ) -> Result<Self> {
        Ok(Self {
            attention: AttentionParams::new(store, &join(prefix, "attention"), hidden, heads, relative_clip, rng)?,
            attention_norm: LayerNormParams::new(store, &join(prefix, "attention_norm"), hidden, rng),
            ffn: FeedForward::new(store, &join(prefix, "ffn"), hidden, rng),
            ffn_norm: LayerNormParams::new(store, &join(prefix, "ffn_norm"), hidden, rng),
            dropout,
        })
    }

    pub fn forward(&self, pass: &mut Pass, store: &ParamStore, x: Var, valid: &[bool]) -> Result<Var> {
        self.forward_traced(pass, store, x, valid).map(|(y, _)| y)
    }

    pub fn forward_traced(&self, pass: &mut Pass, store: &ParamStore, x: Var, valid: &[bool]) -> Result<(Var, AttentionTrace)> {
        let (a, trace) = self.attention.self_attention_traced(pass, store, x, valid, self.dropout)?;
        let a = pass.dropout(a, self.dropout)?;
        let x = pass.g.add(x, a)?;
        let x = self.attention_norm.forward(pass, store, x)?;
        let f = self.ffn.forward(pass, store, x)?;
        let f = pass.dropout(f, self.dropout)?;
        let y = pass.g.add(x, f)?;
        Ok((self.ffn_norm.forward(pass, store, y)?, trace))
    }
}
